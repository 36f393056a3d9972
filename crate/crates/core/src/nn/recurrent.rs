//! Recurrent layers: a plain tanh RNN and an LSTM. Both consume a `[T, I]`
//! sequence and emit the final hidden state, backpropagating through time
//! over the cached per-step activations.

use super::init::glorot_uniform;
use super::tensor::{NnError, Tensor};
use super::Layer;
use rand_chacha::ChaCha12Rng;

fn matvec(w: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape[0], w.shape[1]);
    debug_assert_eq!(cols, x.len());
    let mut y = vec![0.0; rows];
    for r in 0..rows {
        let row = &w.data[r * cols..(r + 1) * cols];
        y[r] = row.iter().zip(x).map(|(a, b)| a * b).sum();
    }
    y
}

fn matvec_t(w: &Tensor, g: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape[0], w.shape[1]);
    debug_assert_eq!(rows, g.len());
    let mut y = vec![0.0; cols];
    for r in 0..rows {
        let row = &w.data[r * cols..(r + 1) * cols];
        for c in 0..cols {
            y[c] += row[c] * g[r];
        }
    }
    y
}

fn accumulate_outer(grad: &mut Tensor, g: &[f64], x: &[f64]) {
    let cols = x.len();
    for (r, &gr) in g.iter().enumerate() {
        let row = &mut grad.data[r * cols..(r + 1) * cols];
        for (c, &xc) in x.iter().enumerate() {
            row[c] += gr * xc;
        }
    }
}

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Single tanh recurrence: `h' = tanh(Wx x + Wh h + b)`.
pub struct RnnCell {
    pub wx: Tensor,
    pub wh: Tensor,
    pub bias: Tensor,
    pub grad_wx: Tensor,
    pub grad_wh: Tensor,
    pub grad_bias: Tensor,
}

impl RnnCell {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha12Rng) -> RnnCell {
        RnnCell {
            wx: glorot_uniform(&[hidden, input], input, hidden, rng),
            wh: glorot_uniform(&[hidden, hidden], hidden, hidden, rng),
            bias: Tensor::zeros(&[hidden]),
            grad_wx: Tensor::zeros(&[hidden, input]),
            grad_wh: Tensor::zeros(&[hidden, hidden]),
            grad_bias: Tensor::zeros(&[hidden]),
        }
    }

    pub fn step(&self, x: &[f64], h: &[f64]) -> Vec<f64> {
        let mut pre = matvec(&self.wx, x);
        let rec = matvec(&self.wh, h);
        for (p, (r, b)) in pre.iter_mut().zip(rec.iter().zip(&self.bias.data)) {
            *p = (*p + r + b).tanh();
        }
        pre
    }
}

struct RnnCache {
    xs: Tensor,
    /// States h_0..h_T, where h_0 is the zero initial state.
    hs: Vec<Vec<f64>>,
}

/// Runs an [`RnnCell`] over a `[T, I]` sequence from a zero initial state and
/// returns the final hidden state `[H]`.
pub struct RnnLayer {
    cell: RnnCell,
    input: usize,
    hidden: usize,
    cache: Vec<RnnCache>,
}

impl RnnLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha12Rng) -> RnnLayer {
        RnnLayer {
            cell: RnnCell::new(input, hidden, rng),
            input,
            hidden,
            cache: Vec::new(),
        }
    }
}

impl Layer for RnnLayer {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let [steps, input] = x.shape[..] else {
            return Err(NnError::ShapeMismatch(format!(
                "rnn expects [T, I], got {:?}",
                x.shape
            )));
        };
        if input != self.input || steps == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "rnn expects [T>0, {}], got {:?}",
                self.input, x.shape
            )));
        }
        let mut hs = vec![vec![0.0; self.hidden]];
        for t in 0..steps {
            let xt = &x.data[t * input..(t + 1) * input];
            let h = self.cell.step(xt, hs.last().unwrap());
            hs.push(h);
        }
        let out = Tensor::from_vec(&[self.hidden], hs.last().unwrap().clone())?;
        self.cache.push(RnnCache { xs: x.clone(), hs });
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("rnn backward without matching forward".into())
        })?;
        if grad_out.numel() != self.hidden {
            return Err(NnError::ShapeMismatch("rnn gradient shape".into()));
        }
        let steps = cache.xs.shape[0];
        let mut grad_x = Tensor::zeros(&cache.xs.shape);
        let mut dh = grad_out.data.clone();
        for t in (0..steps).rev() {
            let h = &cache.hs[t + 1];
            let dpre: Vec<f64> = dh
                .iter()
                .zip(h)
                .map(|(&d, &hv)| d * (1.0 - hv * hv))
                .collect();
            let xt = &cache.xs.data[t * self.input..(t + 1) * self.input];
            accumulate_outer(&mut self.cell.grad_wx, &dpre, xt);
            accumulate_outer(&mut self.cell.grad_wh, &dpre, &cache.hs[t]);
            for (gb, &d) in self.cell.grad_bias.data.iter_mut().zip(&dpre) {
                *gb += d;
            }
            let dx = matvec_t(&self.cell.wx, &dpre);
            grad_x.data[t * self.input..(t + 1) * self.input].copy_from_slice(&dx);
            dh = matvec_t(&self.cell.wh, &dpre);
        }
        Ok(grad_x)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {
        f(&mut self.cell.wx, &mut self.cell.grad_wx);
        f(&mut self.cell.wh, &mut self.cell.grad_wh);
        f(&mut self.cell.bias, &mut self.cell.grad_bias);
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}

struct LstmGates {
    i: Vec<f64>,
    f: Vec<f64>,
    g: Vec<f64>,
    o: Vec<f64>,
    c: Vec<f64>,
    tanh_c: Vec<f64>,
}

/// LSTM recurrence with gates stacked in (input, forget, cell, output) order
/// along the first axis of the `[4H, *]` weight matrices.
pub struct LstmCell {
    pub wx: Tensor,
    pub wh: Tensor,
    pub bias: Tensor,
    pub grad_wx: Tensor,
    pub grad_wh: Tensor,
    pub grad_bias: Tensor,
    hidden: usize,
}

impl LstmCell {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha12Rng) -> LstmCell {
        LstmCell {
            wx: glorot_uniform(&[4 * hidden, input], input, hidden, rng),
            wh: glorot_uniform(&[4 * hidden, hidden], hidden, hidden, rng),
            bias: Tensor::zeros(&[4 * hidden]),
            grad_wx: Tensor::zeros(&[4 * hidden, input]),
            grad_wh: Tensor::zeros(&[4 * hidden, hidden]),
            grad_bias: Tensor::zeros(&[4 * hidden]),
            hidden,
        }
    }

    fn step_full(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, LstmGates) {
        let n = self.hidden;
        let mut pre = matvec(&self.wx, x);
        let rec = matvec(&self.wh, h);
        for (p, (r, b)) in pre.iter_mut().zip(rec.iter().zip(&self.bias.data)) {
            *p += r + b;
        }
        let i: Vec<f64> = pre[..n].iter().map(|&z| sigmoid(z)).collect();
        let f: Vec<f64> = pre[n..2 * n].iter().map(|&z| sigmoid(z)).collect();
        let g: Vec<f64> = pre[2 * n..3 * n].iter().map(|&z| z.tanh()).collect();
        let o: Vec<f64> = pre[3 * n..].iter().map(|&z| sigmoid(z)).collect();
        let c_next: Vec<f64> = (0..n).map(|k| f[k] * c[k] + i[k] * g[k]).collect();
        let tanh_c: Vec<f64> = c_next.iter().map(|&v| v.tanh()).collect();
        let h_next: Vec<f64> = (0..n).map(|k| o[k] * tanh_c[k]).collect();
        (
            h_next,
            LstmGates {
                i,
                f,
                g,
                o,
                c: c_next,
                tanh_c,
            },
        )
    }

    /// One recurrence step from explicit state; returns `(h', c')`.
    pub fn step(&self, x: &[f64], h: &[f64], c: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let (h_next, gates) = self.step_full(x, h, c);
        (h_next, gates.c)
    }
}

struct LstmCache {
    xs: Tensor,
    /// States h_0..h_T including the zero initial state.
    hs: Vec<Vec<f64>>,
    /// Cell states c_0..c_T including the zero initial state.
    cs: Vec<Vec<f64>>,
    gates: Vec<LstmGates>,
}

/// Runs an [`LstmCell`] over a `[T, I]` sequence from zero initial states and
/// returns the final hidden state `[H]`.
pub struct LstmLayer {
    cell: LstmCell,
    input: usize,
    hidden: usize,
    cache: Vec<LstmCache>,
}

impl LstmLayer {
    pub fn new(input: usize, hidden: usize, rng: &mut ChaCha12Rng) -> LstmLayer {
        LstmLayer {
            cell: LstmCell::new(input, hidden, rng),
            input,
            hidden,
            cache: Vec::new(),
        }
    }
}

impl Layer for LstmLayer {
    fn forward(&mut self, x: &Tensor) -> Result<Tensor, NnError> {
        let [steps, input] = x.shape[..] else {
            return Err(NnError::ShapeMismatch(format!(
                "lstm expects [T, I], got {:?}",
                x.shape
            )));
        };
        if input != self.input || steps == 0 {
            return Err(NnError::ShapeMismatch(format!(
                "lstm expects [T>0, {}], got {:?}",
                self.input, x.shape
            )));
        }
        let mut hs = vec![vec![0.0; self.hidden]];
        let mut cs = vec![vec![0.0; self.hidden]];
        let mut gates = Vec::with_capacity(steps);
        for t in 0..steps {
            let xt = &x.data[t * input..(t + 1) * input];
            let (h, gate) = self
                .cell
                .step_full(xt, hs.last().unwrap(), cs.last().unwrap());
            cs.push(gate.c.clone());
            hs.push(h);
            gates.push(gate);
        }
        let out = Tensor::from_vec(&[self.hidden], hs.last().unwrap().clone())?;
        self.cache.push(LstmCache {
            xs: x.clone(),
            hs,
            cs,
            gates,
        });
        Ok(out)
    }

    fn backward(&mut self, grad_out: &Tensor) -> Result<Tensor, NnError> {
        let cache = self.cache.pop().ok_or_else(|| {
            NnError::ShapeMismatch("lstm backward without matching forward".into())
        })?;
        if grad_out.numel() != self.hidden {
            return Err(NnError::ShapeMismatch("lstm gradient shape".into()));
        }
        let n = self.hidden;
        let steps = cache.xs.shape[0];
        let mut grad_x = Tensor::zeros(&cache.xs.shape);
        let mut dh = grad_out.data.clone();
        let mut dc = vec![0.0; n];
        for t in (0..steps).rev() {
            let gate = &cache.gates[t];
            let c_prev = &cache.cs[t];
            let mut dpre = vec![0.0; 4 * n];
            for k in 0..n {
                let do_k = dh[k] * gate.tanh_c[k];
                dc[k] += dh[k] * gate.o[k] * (1.0 - gate.tanh_c[k] * gate.tanh_c[k]);
                let di = dc[k] * gate.g[k];
                let df = dc[k] * c_prev[k];
                let dg = dc[k] * gate.i[k];
                dpre[k] = di * gate.i[k] * (1.0 - gate.i[k]);
                dpre[n + k] = df * gate.f[k] * (1.0 - gate.f[k]);
                dpre[2 * n + k] = dg * (1.0 - gate.g[k] * gate.g[k]);
                dpre[3 * n + k] = do_k * gate.o[k] * (1.0 - gate.o[k]);
            }
            let xt = &cache.xs.data[t * self.input..(t + 1) * self.input];
            accumulate_outer(&mut self.cell.grad_wx, &dpre, xt);
            accumulate_outer(&mut self.cell.grad_wh, &dpre, &cache.hs[t]);
            for (gb, &d) in self.cell.grad_bias.data.iter_mut().zip(&dpre) {
                *gb += d;
            }
            let dx = matvec_t(&self.cell.wx, &dpre);
            grad_x.data[t * self.input..(t + 1) * self.input].copy_from_slice(&dx);
            dh = matvec_t(&self.cell.wh, &dpre);
            for k in 0..n {
                dc[k] *= gate.f[k];
            }
        }
        Ok(grad_x)
    }

    fn visit_params(&mut self, f: &mut dyn FnMut(&mut Tensor, &mut Tensor)) {
        f(&mut self.cell.wx, &mut self.cell.grad_wx);
        f(&mut self.cell.wh, &mut self.cell.grad_wh);
        f(&mut self.cell.bias, &mut self.cell.grad_bias);
    }

    fn clear_cache(&mut self) {
        self.cache.clear();
    }
}
