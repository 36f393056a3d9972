//! Finite-difference verification used by the layer test suites: analytic
//! gradients must match central differences on random small shapes.

use super::tensor::Tensor;
use super::Layer;

/// Central-difference gradient of `f` with respect to `x`, perturbing one
/// component at a time.
pub fn central_diff_grad(x: &mut [f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut grad = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let saved = x[i];
        x[i] = saved + eps;
        let plus = f(x);
        x[i] = saved - eps;
        let minus = f(x);
        x[i] = saved;
        grad.push((plus - minus) / (2.0 * eps));
    }
    grad
}

/// Worst relative disagreement between two gradient vectors, with a floor so
/// jointly tiny components compare as equal.
pub fn max_relative_error(analytic: &[f64], numeric: &[f64]) -> f64 {
    assert_eq!(analytic.len(), numeric.len());
    analytic
        .iter()
        .zip(numeric)
        .map(|(a, n)| (a - n).abs() / (a.abs() + n.abs()).max(1e-6))
        .fold(0.0, f64::max)
}

fn probe_loss(layer: &mut dyn Layer, x: &Tensor) -> f64 {
    let y = layer.forward(x).expect("probe forward");
    layer.clear_cache();
    0.5 * y.data.iter().map(|v| v * v).sum::<f64>()
}

fn param_count(layer: &mut dyn Layer) -> usize {
    let mut n = 0;
    layer.visit_params(&mut |_, _| n += 1);
    n
}

fn perturb(layer: &mut dyn Layer, tensor_idx: usize, component: usize, delta: f64) {
    let mut seen = 0;
    layer.visit_params(&mut |value, _| {
        if seen == tensor_idx {
            value.data[component] += delta;
        }
        seen += 1;
    });
}

/// Verifies a layer's analytic parameter and input gradients against central
/// finite differences under the probe loss `L = sum(y^2) / 2`. Returns the
/// worst relative error observed.
pub fn check_layer(layer: &mut dyn Layer, x: &Tensor, eps: f64) -> f64 {
    layer.visit_params(&mut |_, grad| grad.data.fill(0.0));
    layer.clear_cache();
    let y = layer.forward(x).expect("gradcheck forward");
    let grad_in = layer.backward(&y.clone()).expect("gradcheck backward");

    let mut analytic_params: Vec<Vec<f64>> = Vec::new();
    layer.visit_params(&mut |_, grad| analytic_params.push(grad.data.clone()));

    let mut worst = 0.0f64;
    for p in 0..param_count(layer) {
        let len = analytic_params[p].len();
        let mut numeric = Vec::with_capacity(len);
        for i in 0..len {
            perturb(layer, p, i, eps);
            let plus = probe_loss(layer, x);
            perturb(layer, p, i, -2.0 * eps);
            let minus = probe_loss(layer, x);
            perturb(layer, p, i, eps);
            numeric.push((plus - minus) / (2.0 * eps));
        }
        worst = worst.max(max_relative_error(&analytic_params[p], &numeric));
    }

    let mut xv = x.clone();
    let mut numeric_x = Vec::with_capacity(xv.numel());
    for i in 0..xv.numel() {
        let saved = xv.data[i];
        xv.data[i] = saved + eps;
        let plus = probe_loss(layer, &xv);
        xv.data[i] = saved - eps;
        let minus = probe_loss(layer, &xv);
        xv.data[i] = saved;
        numeric_x.push((plus - minus) / (2.0 * eps));
    }
    worst.max(max_relative_error(&grad_in.data, &numeric_x))
}
