//! Fully connected layer and elementwise ReLU.

use rand_chacha::ChaCha12Rng;

use super::init::glorot_uniform;
use super::tensor::{NnError, Tensor};
use super::Layer;

/// `y = W x + b`. Accepts any input shape with the right element count and
/// flattens it.
pub struct Dense {
    pub weight: Tensor,
    pub bias: Tensor,
    pub grad_weight: Tensor,
    pub grad_bias: Tensor,
    in_features: usize,
    out_features: usize,
    cache: Vec<Tensor>,
}

impl Dense {
    pub fn new(in_features: usize, out_features: usize, rng: &mut ChaCha12Rng) -> Dense {
        Dense {
            weight: glorot_uniform(&[out_features, in_features], in_features, out_features, rng),
            bias: Tensor::zeros(&[out_features]),
            grad_weight: Tensor::zeros(&[out_features, in_features]),
            grad_bias: Tensor::zeros(&[out_features]),
            in_features,
            out_features,
            cache: Vec::new(),
        }
    }
}

impl Layer for Dense {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        if x.numel() != self.in_features {
            return Err(NnError::ShapeMismatch(format!(
                "dense expects {} inputs, got shape {:?}",
                self.in_features, x.shape
            )));
        }
        let mut y = Tensor::zeros(&[self.out_features]);
        for o in 0..self.out_features {
            let row = &self.weight.data[o * self.in_features..(o + 1) * self.in_features];
            y.data[o] = self.bias.data[o]
                + row.iter().zip(&x.data).map(|(w, v)| w * v).sum::<f64>();
        }
        self.cache.push(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let x = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("dense backward without matching forward".into())
        })?;
        if grad_out.numel() != self.out_features {
            return Err(NnError::ShapeMismatch(format!(
                "dense gradient has shape {:?}, expected [{}]",
                grad_out.shape, self.out_features
            )));
        }
        let mut grad_in = Tensor::zeros(&x.shape);
        for o in 0..self.out_features {
            let g = grad_out.data[o];
            self.grad_bias.data[o] += g;
            let row = o * self.in_features;
            for i in 0..self.in_features {
                self.grad_weight.data[row + i] += g * x.data[i];
                grad_in.data[i] += g * self.weight.data[row + i];
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {
        f(&mut self.weight, &mut self.grad_weight);
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Elementwise `max(0, x)`; the gradient at exactly zero is zero.
#[derive(Default)]
pub struct Relu {
    cache: Vec<Tensor>,
}

impl Relu {
    pub fn new() -> Relu {
        Relu { cache: Vec::new() }
    }
}

impl Layer for Relu {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let mut y = x.clone();
        for v in &mut y.data {
            if *v < 0.0 {
                *v = 0.0;
            }
        }
        self.cache.push(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let x = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("relu backward without matching forward".into())
        })?;
        if grad_out.numel() != x.numel() {
            return Err(NnError::ShapeMismatch("relu gradient shape".into()));
        }
        let mut grad_in = grad_out.clone();
        grad_in.shape = x.shape.clone();
        for (g, v) in grad_in.data.iter_mut().zip(&x.data) {
            if *v <= 0.0 {
                *g = 0.0;
            }
        }
        Ok(grad_in)
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff_grad, max_relative_error};
    use crate::nn::init::seeded_rng;
    use rand::Rng;

    #[test]
    fn relu_clamps_negatives_only() {
        let mut relu = Relu::new();
        let x = Tensor::from_vec(&[3], vec![-1.0, 2.0, 0.0]).unwrap();
        let y = relu.forward(&x).unwrap();
        assert_eq!(y.data, vec![0.0, 2.0, 0.0]);
        let g = relu
            .backward(&Tensor::from_vec(&[3], vec![1.0, 1.0, 1.0]).unwrap())
            .unwrap();
        assert_eq!(g.data, vec![0.0, 1.0, 0.0]);
        let pos = Tensor::from_vec(&[2], vec![0.5, 3.0]).unwrap();
        assert_eq!(relu.forward(&pos).unwrap().data, pos.data);
    }

    #[test]
    fn dense_matches_hand_computation() {
        let mut rng = seeded_rng(1);
        let mut layer = Dense::new(2, 2, &mut rng);
        layer.weight = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        layer.bias = Tensor::from_vec(&[2], vec![0.5, -0.5]).unwrap();
        let y = layer
            .forward(&Tensor::from_vec(&[2], vec![10.0, 20.0]).unwrap())
            .unwrap();
        assert_eq!(y.data, vec![50.5, 109.5]);
    }

    #[test]
    fn dense_gradients_match_finite_differences() {
        let mut rng = seeded_rng(42);
        for _ in 0..20 {
            let n_in = rng.random_range(1..5);
            let n_out = rng.random_range(2..5);
            let mut layer = Dense::new(n_in, n_out, &mut rng);
            let x: Vec<f64> = (0..n_in).map(|_| rng.random_range(-1.0..1.0)).collect();
            let label = rng.random_range(0..n_out);
            // Analytic gradients through a cross-entropy head.
            let logits = layer
                .forward(&Tensor::from_vec(&[n_in], x.clone()).unwrap())
                .unwrap();
            let (_, dlogits) =
                crate::nn::loss::softmax_cross_entropy(&logits.data, label).unwrap();
            let grad_in = layer
                .backward(&Tensor::from_vec(&[n_out], dlogits).unwrap())
                .unwrap();

            let mut weights = layer.weight.data.clone();
            let num_w = central_diff_grad(&mut weights, 1e-6, |w| {
                let mut probe = Dense {
                    weight: Tensor::from_vec(&[n_out, n_in], w.to_vec()).unwrap(),
                    bias: layer.bias.clone(),
                    grad_weight: Tensor::zeros(&[n_out, n_in]),
                    grad_bias: Tensor::zeros(&[n_out]),
                    in_features: n_in,
                    out_features: n_out,
                    cache: Vec::new(),
                };
                let logits = probe
                    .forward(&Tensor::from_vec(&[n_in], x.clone()).unwrap())
                    .unwrap();
                crate::nn::loss::softmax_cross_entropy(&logits.data, label)
                    .unwrap()
                    .0
            });
            assert!(max_relative_error(&layer.grad_weight.data, &num_w) < 1e-5);

            let mut xs = x.clone();
            let num_x = central_diff_grad(&mut xs, 1e-6, |xv| {
                let mut probe = Dense {
                    weight: layer.weight.clone(),
                    bias: layer.bias.clone(),
                    grad_weight: Tensor::zeros(&[n_out, n_in]),
                    grad_bias: Tensor::zeros(&[n_out]),
                    in_features: n_in,
                    out_features: n_out,
                    cache: Vec::new(),
                };
                let logits = probe
                    .forward(&Tensor::from_vec(&[n_in], xv.to_vec()).unwrap())
                    .unwrap();
                crate::nn::loss::softmax_cross_entropy(&logits.data, label)
                    .unwrap()
                    .0
            });
            assert!(max_relative_error(&grad_in.data, &num_x) < 1e-5);
        }
    }
}
