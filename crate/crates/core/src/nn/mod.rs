//! Small neural-network toolkit on dense f64 tensors: layers with exact
//! backward passes, finite-difference gradient checking, a minibatch
//! training loop, and a checksummed checkpoint format. No external math
//! libraries; every gradient here is hand-derived and verified by tests.

pub mod checkpoint;
pub mod conv;
pub mod dense;
pub mod gradcheck;
pub mod init;
pub mod loss;
pub mod pool;
pub mod recurrent;
pub mod tensor;
pub mod train;

pub use checkpoint::{
    collect_params, decode_checkpoint, encode_checkpoint, load_checkpoint, restore_params,
    save_checkpoint, Checkpoint, CHECKPOINT_MAGIC, CHECKPOINT_VERSION,
};
pub use conv::{Conv1dCircular, Conv2d};
pub use dense::{Dense, Relu};
pub use init::{glorot_uniform, seeded_rng};
pub use loss::{softmax, softmax_cross_entropy};
pub use pool::{AvgPool1d, GlobalMaxPool1d, MaxPool1d, MaxPool2d};
pub use recurrent::{LstmCell, LstmLayer, RnnCell, RnnLayer};
pub use tensor::{NnError, Tensor};
pub use train::{mean_cross_entropy, train, Model, Optimizer, TrainConfig, TrainReport};

/// One differentiable stage. `forward` pushes whatever `backward` will need
/// onto an internal stack, so a layer can run several forwards and then
/// consume them in reverse order; `clear_cache` abandons unconsumed state
/// after inference-only passes. Parameter gradients accumulate across calls
/// until the caller zeroes them through `visit_params`.
pub trait Layer: Send {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError>;

    /// Consumes the most recent unconsumed forward activation and returns
    /// the gradient with respect to that input.
    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError>;

    /// Calls `f(param, grad)` for each parameter tensor in a fixed order.
    /// Parameterless layers keep the empty default.
    fn visit_params(&mut self, _f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {}

    /// Drops cached activations from forwards that will never be
    /// backpropagated.
    fn clear_cache(&mut self) {}
}

/// Layers applied in order; gradients flow back through them in reverse.
pub struct Sequential {
    layers: Vec<Box<dyn Layer>>,
}

impl Sequential {
    pub fn new(layers: Vec<Box<dyn Layer>>) -> Sequential {
        Sequential { layers }
    }

    pub fn push(&mut self, layer: Box<dyn Layer>) {
        self.layers.push(layer);
    }

    pub fn len(&self) -> usize {
        self.layers.len()
    }

    pub fn is_empty(&self) -> bool {
        self.layers.is_empty()
    }
}

impl Layer for Sequential {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = x.clone();
        for layer in &mut self.layers {
            cur = layer.forward(&cur)?;
        }
        Ok(cur)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let mut cur = grad_out.clone();
        for layer in self.layers.iter_mut().rev() {
            cur = layer.backward(&cur)?;
        }
        Ok(cur)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {
        for layer in &mut self.layers {
            layer.visit_params(f);
        }
    }

    fn clear_cache(&mut self) {
        for layer in &mut self.layers {
            layer.clear_cache();
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sequential_chains_forward_and_backward() {
        let mut rng = seeded_rng(31);
        let mut net = Sequential::new(vec![
            Box::new(Dense::new(6, 5, &mut rng)),
            Box::new(Relu::new()),
            Box::new(Dense::new(5, 4, &mut rng)),
        ]);
        let x = Tensor::from_vec(&[6], vec![0.5, -1.0, 2.0, 0.0, 1.5, -0.25]).unwrap();
        let err = gradcheck::check_layer(&mut net, &x, 1e-6);
        assert!(err < 1e-6, "chained gradient error {err}");
    }

    #[test]
    fn sequential_supports_stacked_forwards() {
        let mut rng = seeded_rng(32);
        let mut net = Sequential::new(vec![
            Box::new(Dense::new(3, 3, &mut rng)),
            Box::new(Relu::new()),
        ]);
        let a = Tensor::from_vec(&[3], vec![1.0, 2.0, 3.0]).unwrap();
        let b = Tensor::from_vec(&[3], vec![-1.0, 0.5, 0.0]).unwrap();
        let ya = net.forward(&a).unwrap();
        let yb = net.forward(&b).unwrap();
        // LIFO: first backward consumes the b pass, second consumes a.
        net.backward(&yb.scalar_like(1.0)).unwrap();
        net.backward(&ya.scalar_like(1.0)).unwrap();
        assert!(net.backward(&ya.scalar_like(1.0)).is_err());
    }

    #[test]
    fn clear_cache_discards_pending_activations() {
        let mut rng = seeded_rng(33);
        let mut net = Sequential::new(vec![
            Box::new(Dense::new(2, 2, &mut rng)),
            Box::new(Relu::new()),
        ]);
        let x = Tensor::from_vec(&[2], vec![1.0, -1.0]).unwrap();
        let y = net.forward(&x).unwrap();
        net.clear_cache();
        assert!(net.backward(&y.scalar_like(1.0)).is_err());
    }
}
