//! Convolution layers: 2-D cross-correlation with zero padding for depth
//! images, and stride-1 circular 1-D cross-correlation for range rings.

use rand_chacha::ChaCha12Rng;

use super::init::glorot_uniform;
use super::tensor::{NnError, Tensor};
use super::Layer;

/// 2-D cross-correlation over `[C, H, W]` producing `[F, H', W']` with
/// `H' = (H + 2*padding - kh) / stride + 1`.
pub struct Conv2d {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub grad_kernels: Tensor,
    pub grad_bias: Tensor,
    filters: usize,
    channels: usize,
    kh: usize,
    kw: usize,
    stride: usize,
    padding: usize,
    cache: Vec<Tensor>,
}

impl Conv2d {
    pub fn new(
        channels: usize,
        filters: usize,
        kh: usize,
        kw: usize,
        stride: usize,
        padding: usize,
        rng: &mut ChaCha12Rng,
    ) -> Conv2d {
        let fan_in = channels * kh * kw;
        let fan_out = filters * kh * kw;
        Conv2d {
            kernels: glorot_uniform(&[filters, channels, kh, kw], fan_in, fan_out, rng),
            bias: Tensor::zeros(&[filters]),
            grad_kernels: Tensor::zeros(&[filters, channels, kh, kw]),
            grad_bias: Tensor::zeros(&[filters]),
            filters,
            channels,
            kh,
            kw,
            stride: stride.max(1),
            padding,
            cache: Vec::new(),
        }
    }

    fn out_dims(&self, h: usize, w: usize) -> Result<(usize, usize), NnError> {
        let (ph, pw) = (h + 2 * self.padding, w + 2 * self.padding);
        if self.kh > ph || self.kw > pw {
            return Err(NnError::ShapeMismatch(format!(
                "kernel {}x{} exceeds padded input {ph}x{pw}",
                self.kh, self.kw
            )));
        }
        Ok(((ph - self.kh) / self.stride + 1, (pw - self.kw) / self.stride + 1))
    }

    fn check_input(&self, x: &Tensor) -> Result<(usize, usize), NnError> {
        match x.shape[..] {
            [c, h, w] if c == self.channels => {
                self.out_dims(h, w)?;
                Ok((h, w))
            }
            _ => Err(NnError::ShapeMismatch(format!(
                "conv2d expects [{}, H, W], got {:?}",
                self.channels, x.shape
            ))),
        }
    }
}

impl Layer for Conv2d {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let (h, w) = self.check_input(x)?;
        let (oh, ow) = self.out_dims(h, w)?;
        let mut y = Tensor::zeros(&[self.filters, oh, ow]);
        for f in 0..self.filters {
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut acc = self.bias.data[f];
                    for c in 0..self.channels {
                        for ky in 0..self.kh {
                            let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.kw {
                                let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                acc += x.data[Tensor::at3(c, iy as usize, ix as usize, h, w)]
                                    * self.kernels.data
                                        [Tensor::at3(f, c, ky * self.kw + kx, self.channels, self.kh * self.kw)];
                            }
                        }
                    }
                    y.data[Tensor::at3(f, oy, ox, oh, ow)] = acc;
                }
            }
        }
        self.cache.push(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let x = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("conv2d backward without matching forward".into())
        })?;
        let (h, w) = (x.shape[1], x.shape[2]);
        let (oh, ow) = self.out_dims(h, w)?;
        if grad_out.shape != vec![self.filters, oh, ow] {
            return Err(NnError::ShapeMismatch(format!(
                "conv2d gradient shape {:?}, expected [{}, {oh}, {ow}]",
                grad_out.shape, self.filters
            )));
        }
        let mut grad_in = Tensor::zeros(&x.shape);
        for f in 0..self.filters {
            for oy in 0..oh {
                for ox in 0..ow {
                    let g = grad_out.data[Tensor::at3(f, oy, ox, oh, ow)];
                    self.grad_bias.data[f] += g;
                    for c in 0..self.channels {
                        for ky in 0..self.kh {
                            let iy = (oy * self.stride + ky) as isize - self.padding as isize;
                            if iy < 0 || iy >= h as isize {
                                continue;
                            }
                            for kx in 0..self.kw {
                                let ix = (ox * self.stride + kx) as isize - self.padding as isize;
                                if ix < 0 || ix >= w as isize {
                                    continue;
                                }
                                let xi = Tensor::at3(c, iy as usize, ix as usize, h, w);
                                let ki = Tensor::at3(
                                    f,
                                    c,
                                    ky * self.kw + kx,
                                    self.channels,
                                    self.kh * self.kw,
                                );
                                self.grad_kernels.data[ki] += g * x.data[xi];
                                grad_in.data[xi] += g * self.kernels.data[ki];
                            }
                        }
                    }
                }
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {
        f(&mut self.kernels, &mut self.grad_kernels);
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

/// Stride-1 1-D cross-correlation on a ring: input `[C, L]`, output `[F, L]`,
/// with indices wrapping modulo L, so rotating the input rotates the output.
pub struct Conv1dCircular {
    pub kernels: Tensor,
    pub bias: Tensor,
    pub grad_kernels: Tensor,
    pub grad_bias: Tensor,
    filters: usize,
    channels: usize,
    k: usize,
    cache: Vec<Tensor>,
}

impl Conv1dCircular {
    pub fn new(channels: usize, filters: usize, k: usize, rng: &mut ChaCha12Rng) -> Conv1dCircular {
        let fan_in = channels * k;
        let fan_out = filters * k;
        Conv1dCircular {
            kernels: glorot_uniform(&[filters, channels, k], fan_in, fan_out, rng),
            bias: Tensor::zeros(&[filters]),
            grad_kernels: Tensor::zeros(&[filters, channels, k]),
            grad_bias: Tensor::zeros(&[filters]),
            filters,
            channels,
            k,
            cache: Vec::new(),
        }
    }

    fn check_input(&self, x: &Tensor) -> Result<usize, NnError> {
        match x.shape[..] {
            [c, l] if c == self.channels && l >= self.k => Ok(l),
            _ => Err(NnError::ShapeMismatch(format!(
                "circular conv expects [{}, L>={}], got {:?}",
                self.channels, self.k, x.shape
            ))),
        }
    }
}

impl Layer for Conv1dCircular {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let l = self.check_input(x)?;
        let mut y = Tensor::zeros(&[self.filters, l]);
        for f in 0..self.filters {
            for i in 0..l {
                let mut acc = self.bias.data[f];
                for c in 0..self.channels {
                    for j in 0..self.k {
                        acc += x.data[Tensor::at2(c, (i + j) % l, l)]
                            * self.kernels.data[Tensor::at3(f, c, j, self.channels, self.k)];
                    }
                }
                y.data[Tensor::at2(f, i, l)] = acc;
            }
        }
        self.cache.push(x.clone());
        Ok(y)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let x = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("circular conv backward without matching forward".into())
        })?;
        let l = x.shape[1];
        if grad_out.shape != vec![self.filters, l] {
            return Err(NnError::ShapeMismatch(format!(
                "circular conv gradient shape {:?}, expected [{}, {l}]",
                grad_out.shape, self.filters
            )));
        }
        let mut grad_in = Tensor::zeros(&x.shape);
        for f in 0..self.filters {
            for i in 0..l {
                let g = grad_out.data[Tensor::at2(f, i, l)];
                self.grad_bias.data[f] += g;
                for c in 0..self.channels {
                    for j in 0..self.k {
                        let xi = Tensor::at2(c, (i + j) % l, l);
                        let ki = Tensor::at3(f, c, j, self.channels, self.k);
                        self.grad_kernels.data[ki] += g * x.data[xi];
                        grad_in.data[xi] += g * self.kernels.data[ki];
                    }
                }
            }
        }
        Ok(grad_in)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {
        f(&mut self.kernels, &mut self.grad_kernels);
        f(&mut self.bias, &mut self.grad_bias);
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}
