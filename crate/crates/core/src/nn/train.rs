//! Minibatch training loop: shuffled epochs, cross-entropy on the final
//! logits, and plain SGD or momentum updates applied in parameter visit
//! order. One generator seeded from the config drives every shuffle so a
//! run is reproducible end to end.

use super::init::seeded_rng;
use super::loss::softmax_cross_entropy;
use super::tensor::{NnError, Tensor};
use rand::seq::SliceRandom;

/// Parameter update rule. Momentum keeps one velocity buffer per parameter
/// tensor, created lazily on the first step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Optimizer {
    Sgd,
    Momentum { beta: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub optimizer: Optimizer,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 0.01,
            batch_size: 16,
            epochs: 10,
            seed: 0,
            optimizer: Optimizer::Momentum { beta: 0.9 },
        }
    }
}

/// Anything trainable by [`train`]: forward to class logits, backward from a
/// logit gradient, and parameters exposed in a fixed visit order. Method
/// names deliberately differ from [`super::Layer`] so types implementing
/// both stay unambiguous.
pub trait Model<X> {
    fn logits(&mut self, x: &X) -> Result<Tensor, NnError>;
    fn backprop(&mut self, grad_logits: &Tensor) -> Result<(), NnError>;
    fn visit_trainable(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor));
    fn reset_caches(&mut self) {}
}

impl<L: super::Layer + ?Sized> Model<Tensor> for L {
    fn logits(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        self.forward(x)
    }

    fn backprop(&mut self, grad_logits: &Tensor) -> Result<(), NnError> {
        self.backward(grad_logits).map(|_| ())
    }

    fn visit_trainable(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {
        self.visit_params(f);
    }

    fn reset_caches(&mut self) {
        self.clear_cache();
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    /// Mean cross-entropy per epoch, in epoch order.
    pub epoch_losses: Vec<f64>,
}

fn zero_grads<X>(model: &mut (impl Model<X> + ?Sized)) {
    model.visit_trainable(&mut |_, grad| grad.data.fill(0.0));
}

fn apply_step<X>(
    model: &mut (impl Model<X> + ?Sized),
    learning_rate: f64,
    optimizer: Optimizer,
    velocities: &mut Vec<Vec<f64>>,
) {
    let mut index = 0usize;
    model.visit_trainable(&mut |param, grad| {
        match optimizer {
            Optimizer::Sgd => {
                for (p, g) in param.data.iter_mut().zip(&grad.data) {
                    *p -= learning_rate * g;
                }
            }
            Optimizer::Momentum { beta } => {
                if velocities.len() <= index {
                    velocities.push(vec![0.0; param.data.len()]);
                }
                let v = &mut velocities[index];
                for ((p, g), vk) in param.data.iter_mut().zip(&grad.data).zip(v.iter_mut()) {
                    *vk = beta * *vk + g;
                    *p -= learning_rate * *vk;
                }
            }
        }
        index += 1;
    });
}

/// Mean cross-entropy of `model` over a labelled set, without updating
/// parameters. Caches are cleared after each forward pass.
pub fn mean_cross_entropy<X>(
    model: &mut (impl Model<X> + ?Sized),
    inputs: &[X],
    labels: &[usize],
) -> Result<f64, NnError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(NnError::BadConfig(format!(
            "{} inputs vs {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    let mut total = 0.0;
    for (x, &label) in inputs.iter().zip(labels) {
        let logits = model.logits(x)?;
        model.reset_caches();
        let (loss, _) = softmax_cross_entropy(&logits.data, label)?;
        total += loss;
    }
    Ok(total / inputs.len() as f64)
}

/// Trains `model` on `(inputs, labels)` and returns the per-epoch mean loss.
/// Batch gradients are averaged, so the step size is independent of batch
/// size; a non-finite loss aborts with the offending epoch.
pub fn train<X>(
    model: &mut (impl Model<X> + ?Sized),
    inputs: &[X],
    labels: &[usize],
    config: &TrainConfig,
) -> Result<TrainReport, NnError> {
    if inputs.is_empty() || inputs.len() != labels.len() {
        return Err(NnError::BadConfig(format!(
            "{} inputs vs {} labels",
            inputs.len(),
            labels.len()
        )));
    }
    if config.batch_size == 0 || config.epochs == 0 {
        return Err(NnError::BadConfig(
            "batch_size and epochs must be positive".into(),
        ));
    }
    if !config.learning_rate.is_finite() || config.learning_rate < 0.0 {
        return Err(NnError::BadConfig(format!(
            "learning rate {}",
            config.learning_rate
        )));
    }
    if let Optimizer::Momentum { beta } = config.optimizer {
        if !(0.0..1.0).contains(&beta) {
            return Err(NnError::BadConfig(format!("momentum beta {beta}")));
        }
    }

    let mut rng = seeded_rng(config.seed);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut velocities: Vec<Vec<f64>> = Vec::new();
    let mut epoch_losses = Vec::with_capacity(config.epochs);

    for epoch in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = 0.0;
        for batch in order.chunks(config.batch_size) {
            zero_grads(model);
            let scale = 1.0 / batch.len() as f64;
            for &idx in batch {
                let logits = model.logits(&inputs[idx])?;
                let (loss, mut dlogits) = softmax_cross_entropy(&logits.data, labels[idx])?;
                if !loss.is_finite() {
                    return Err(NnError::NanLoss { epoch });
                }
                epoch_loss += loss;
                for d in &mut dlogits {
                    *d *= scale;
                }
                model.backprop(&Tensor::from_vec(&logits.shape, dlogits)?)?;
            }
            apply_step(model, config.learning_rate, config.optimizer, &mut velocities);
        }
        epoch_losses.push(epoch_loss / inputs.len() as f64);
    }
    Ok(TrainReport { epoch_losses })
}
