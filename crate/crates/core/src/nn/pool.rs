//! Pooling layers. Max pools remember their argmax for backward routing and
//! break ties toward the first index in scan order.

use super::tensor::{NnError, Tensor};
use super::Layer;

struct PoolCache {
    in_shape: Vec<usize>,
    argmax: Vec<usize>,
}

/// Windowed maximum over `[C, H, W]`, window and stride equal by default
/// construction but configurable separately.
pub struct MaxPool2d {
    window: usize,
    stride: usize,
    cache: Vec<PoolCache>,
}

impl MaxPool2d {
    pub fn new(window: usize, stride: usize) -> MaxPool2d {
        MaxPool2d {
            window: window.max(1),
            stride: stride.max(1),
            cache: Vec::new(),
        }
    }
}

impl Layer for MaxPool2d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let [c, h, w] = x.shape[..] else {
            return Err(NnError::ShapeMismatch(format!(
                "maxpool2d expects [C, H, W], got {:?}",
                x.shape
            )));
        };
        if self.window > h || self.window > w {
            return Err(NnError::ShapeMismatch(format!(
                "window {} exceeds input {h}x{w}",
                self.window
            )));
        }
        let oh = (h - self.window) / self.stride + 1;
        let ow = (w - self.window) / self.stride + 1;
        let mut y = Tensor::zeros(&[c, oh, ow]);
        let mut argmax = vec![0usize; c * oh * ow];
        for ch in 0..c {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_idx = 0;
                    for ky in 0..self.window {
                        for kx in 0..self.window {
                            let idx = Tensor::at3(
                                ch,
                                oy * self.stride + ky,
                                ox * self.stride + kx,
                                h,
                                w,
                            );
                            if x.data[idx] > best {
                                best = x.data[idx];
                                best_idx = idx;
                            }
                        }
                    }
                    let o = Tensor::at3(ch, oy, ox, oh, ow);
                    y.data[o] = best;
                    argmax[o] = best_idx;
                }
            }
        }
        self.cache.push(PoolCache {
            in_shape: x.shape.clone(),
            argmax,
        });
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("maxpool2d backward without matching forward".into())
        })?;
        if grad_out.numel() != cache.argmax.len() {
            return Err(NnError::ShapeMismatch("maxpool2d gradient shape".into()));
        }
        let mut grad_in = Tensor::zeros(&cache.in_shape);
        for (o, &src) in cache.argmax.iter().enumerate() {
            grad_in.data[src] += grad_out.data[o];
        }
        Ok(grad_in)
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Windowed maximum over `[C, L]`.
pub struct MaxPool1d {
    window: usize,
    stride: usize,
    cache: Vec<PoolCache>,
}

impl MaxPool1d {
    pub fn new(window: usize, stride: usize) -> MaxPool1d {
        MaxPool1d {
            window: window.max(1),
            stride: stride.max(1),
            cache: Vec::new(),
        }
    }
}

impl Layer for MaxPool1d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let [c, l] = x.shape[..] else {
            return Err(NnError::ShapeMismatch(format!(
                "maxpool1d expects [C, L], got {:?}",
                x.shape
            )));
        };
        if self.window > l {
            return Err(NnError::ShapeMismatch(format!(
                "window {} exceeds length {l}",
                self.window
            )));
        }
        let ol = (l - self.window) / self.stride + 1;
        let mut y = Tensor::zeros(&[c, ol]);
        let mut argmax = vec![0usize; c * ol];
        for ch in 0..c {
            for o in 0..ol {
                let mut best = f64::NEG_INFINITY;
                let mut best_idx = 0;
                for k in 0..self.window {
                    let idx = Tensor::at2(ch, o * self.stride + k, l);
                    if x.data[idx] > best {
                        best = x.data[idx];
                        best_idx = idx;
                    }
                }
                let oi = Tensor::at2(ch, o, ol);
                y.data[oi] = best;
                argmax[oi] = best_idx;
            }
        }
        self.cache.push(PoolCache {
            in_shape: x.shape.clone(),
            argmax,
        });
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("maxpool1d backward without matching forward".into())
        })?;
        if grad_out.numel() != cache.argmax.len() {
            return Err(NnError::ShapeMismatch("maxpool1d gradient shape".into()));
        }
        let mut grad_in = Tensor::zeros(&cache.in_shape);
        for (o, &src) in cache.argmax.iter().enumerate() {
            grad_in.data[src] += grad_out.data[o];
        }
        Ok(grad_in)
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Windowed mean over `[C, L]`; backward spreads gradients uniformly.
pub struct AvgPool1d {
    window: usize,
    stride: usize,
    cache: Vec<Vec<usize>>,
}

impl AvgPool1d {
    pub fn new(window: usize, stride: usize) -> AvgPool1d {
        AvgPool1d {
            window: window.max(1),
            stride: stride.max(1),
            cache: Vec::new(),
        }
    }
}

impl Layer for AvgPool1d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let [c, l] = x.shape[..] else {
            return Err(NnError::ShapeMismatch(format!(
                "avgpool1d expects [C, L], got {:?}",
                x.shape
            )));
        };
        if self.window > l {
            return Err(NnError::ShapeMismatch(format!(
                "window {} exceeds length {l}",
                self.window
            )));
        }
        let ol = (l - self.window) / self.stride + 1;
        let mut y = Tensor::zeros(&[c, ol]);
        for ch in 0..c {
            for o in 0..ol {
                let mut acc = 0.0;
                for k in 0..self.window {
                    acc += x.data[Tensor::at2(ch, o * self.stride + k, l)];
                }
                y.data[Tensor::at2(ch, o, ol)] = acc / self.window as f64;
            }
        }
        self.cache.push(x.shape.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let in_shape = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("avgpool1d backward without matching forward".into())
        })?;
        let (c, l) = (in_shape[0], in_shape[1]);
        let ol = (l - self.window) / self.stride + 1;
        if grad_out.numel() != c * ol {
            return Err(NnError::ShapeMismatch("avgpool1d gradient shape".into()));
        }
        let mut grad_in = Tensor::zeros(&in_shape);
        let scale = 1.0 / self.window as f64;
        for ch in 0..c {
            for o in 0..ol {
                let g = grad_out.data[Tensor::at2(ch, o, ol)] * scale;
                for k in 0..self.window {
                    grad_in.data[Tensor::at2(ch, o * self.stride + k, l)] += g;
                }
            }
        }
        Ok(grad_in)
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Per-channel maximum over the whole ring: `[C, L]` to `[C]`. Output is
/// invariant to any rotation of the positions.
pub struct GlobalMaxPool1d {
    cache: Vec<PoolCache>,
}

impl GlobalMaxPool1d {
    pub fn new() -> GlobalMaxPool1d {
        GlobalMaxPool1d { cache: Vec::new() }
    }
}

impl Default for GlobalMaxPool1d {
    fn default() -> Self {
        GlobalMaxPool1d::new()
    }
}

impl Layer for GlobalMaxPool1d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let [c, l] = x.shape[..] else {
            return Err(NnError::ShapeMismatch(format!(
                "global max pool expects [C, L], got {:?}",
                x.shape
            )));
        };
        let mut y = Tensor::zeros(&[c]);
        let mut argmax = vec![0usize; c];
        for ch in 0..c {
            let mut best = f64::NEG_INFINITY;
            let mut best_idx = 0;
            for i in 0..l {
                let idx = Tensor::at2(ch, i, l);
                if x.data[idx] > best {
                    best = x.data[idx];
                    best_idx = idx;
                }
            }
            y.data[ch] = best;
            argmax[ch] = best_idx;
        }
        self.cache.push(PoolCache {
            in_shape: x.shape.clone(),
            argmax,
        });
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("global max pool backward without matching forward".into())
        })?;
        if grad_out.numel() != cache.argmax.len() {
            return Err(NnError::ShapeMismatch("global max pool gradient shape".into()));
        }
        let mut grad_in = Tensor::zeros(&cache.in_shape);
        for (o, &src) in cache.argmax.iter().enumerate() {
            grad_in.data[src] += grad_out.data[o];
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
    use crate::nn::gradcheck::check_layer;
    use crate::nn::init::seeded_rng;
    use rand::Rng;

    #[test]
    fn window_maximum_and_tie_break() {
        let mut pool = MaxPool2d::new(2, 2);
        let x = Tensor::from_vec(&[1, 2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert_eq!(pool.forward(&x).unwrap().data, vec![4.0]);
        // Constant input: the first index in scan order receives the gradient.
        let flat = Tensor::from_vec(&[1, 2, 2], vec![7.0; 4]).unwrap();
        assert_eq!(pool.forward(&flat).unwrap().data, vec![7.0]);
        let g = pool
            .backward(&Tensor::from_vec(&[1, 1, 1], vec![1.0]).unwrap())
            .unwrap();
        assert_eq!(g.data, vec![1.0, 0.0, 0.0, 0.0]);
        pool.clear_cache();
    }

    #[test]
    fn hot_pixel_shifts_inside_window_are_invisible() {
        let mut pool = MaxPool2d::new(2, 2);
        for hot in 0..4 {
            let mut data = vec![0.0; 16];
            // Place the hot pixel at each position of the top-left window.
            let (r, c) = (hot / 2, hot % 2);
            data[r * 4 + c] = 5.0;
            let x = Tensor::from_vec(&[1, 4, 4], data).unwrap();
            let y = pool.forward(&x).unwrap();
            assert_eq!(y.data, vec![5.0, 0.0, 0.0, 0.0]);
            pool.clear_cache();
        }
    }

    #[test]
    fn avgpool_averages_and_spreads_gradient() {
        let mut pool = AvgPool1d::new(4, 4);
        let x = Tensor::from_vec(&[1, 8], vec![1.0, 3.0, 5.0, 7.0, 2.0, 2.0, 2.0, 10.0]).unwrap();
        let y = pool.forward(&x).unwrap();
        assert_eq!(y.data, vec![4.0, 4.0]);
        let g = pool
            .backward(&Tensor::from_vec(&[1, 2], vec![4.0, 8.0]).unwrap())
            .unwrap();
        assert_eq!(g.data, vec![1.0, 1.0, 1.0, 1.0, 2.0, 2.0, 2.0, 2.0]);
    }

    #[test]
    fn pool_gradients_match_finite_differences() {
        let mut rng = seeded_rng(11);
        let x3 = Tensor::from_vec(
            &[2, 4, 6],
            (0..48).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        let err = check_layer(&mut MaxPool2d::new(2, 2), &x3, 1e-6);
        assert!(err < 1e-5, "maxpool2d error {err}");
        let x2 = Tensor::from_vec(
            &[3, 12],
            (0..36).map(|_| rng.random_range(-1.0..1.0)).collect(),
        )
        .unwrap();
        assert!(check_layer(&mut MaxPool1d::new(4, 4), &x2, 1e-6) < 1e-5);
        assert!(check_layer(&mut AvgPool1d::new(3, 3), &x2, 1e-6) < 1e-5);
        assert!(check_layer(&mut GlobalMaxPool1d::new(), &x2, 1e-6) < 1e-5);
    }

    #[test]
    fn global_pool_ignores_rotation() {
        let mut rng = seeded_rng(12);
        let l = 16;
        let x: Vec<f64> = (0..2 * l).map(|_| rng.random_range(-1.0..1.0)).collect();
        let mut pool = GlobalMaxPool1d::new();
        let y = pool
            .forward(&Tensor::from_vec(&[2, l], x.clone()).unwrap())
            .unwrap();
        let rotated: Vec<f64> = (0..2 * l)
            .map(|i| {
                let (c, p) = (i / l, i % l);
                x[c * l + (p + 5) % l]
            })
            .collect();
        let y_rot = pool
            .forward(&Tensor::from_vec(&[2, l], rotated).unwrap())
            .unwrap();
        assert_eq!(y.data, y_rot.data);
        pool.clear_cache();
    }
}
