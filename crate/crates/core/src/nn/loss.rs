//! Max-subtracted softmax and cross-entropy loss over class logits.

use super::tensor::NnError;

/// Numerically stable softmax: exponentials are taken after subtracting the
/// maximum logit.
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|z| (z - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

/// Loss `-log p(label)` and its gradient `p - onehot(label)` with respect to
/// the logits.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>), NnError> {
    if logits.len() < 2 {
        return Err(NnError::ShapeMismatch(
            "cross entropy needs at least 2 classes".into(),
        ));
    }
    if label >= logits.len() {
        return Err(NnError::BadLabel {
            label,
            classes: logits.len(),
        });
    }
    let probs = softmax(logits);
    // log p computed from shifted logits directly, not log(probs), so a
    // saturated correct class gives exactly 0 loss.
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let log_sum = logits
        .iter()
        .map(|z| (z - max).exp())
        .sum::<f64>()
        .ln();
    let loss = log_sum - (logits[label] - max);
    let mut grad = probs;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::{central_diff_grad, max_relative_error};
    use rand::Rng;

    #[test]
    fn uniform_logits_cost_log_of_class_count() {
        let logits = vec![0.25; 36];
        let (loss, grad) = softmax_cross_entropy(&logits, 7).unwrap();
        assert!((loss - 3.58351893845611).abs() < 1e-12);
        let probs = softmax(&logits);
        for p in &probs {
            assert!((p - 1.0 / 36.0).abs() < 1e-12);
        }
        assert!((grad[7] - (1.0 / 36.0 - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn softmax_is_a_probability_vector() {
        let mut rng = crate::nn::init::seeded_rng(2);
        for _ in 0..50 {
            let logits: Vec<f64> = (0..9).map(|_| rng.random_range(-30.0..30.0)).collect();
            let p = softmax(&logits);
            assert!(p.iter().all(|v| *v >= 0.0));
            assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        }
    }

    #[test]
    fn saturated_logits_stay_finite() {
        let mut logits = vec![0.0; 8];
        logits[3] = 1000.0;
        let (loss, grad) = softmax_cross_entropy(&logits, 3).unwrap();
        assert_eq!(loss, 0.0);
        assert!(grad.iter().all(|g| g.is_finite()));
        // Huge wrong-class logit: loss is large but finite.
        let (loss, _) = softmax_cross_entropy(&logits, 0).unwrap();
        assert!((loss - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = crate::nn::init::seeded_rng(3);
        for trial in 0..20 {
            let mut logits: Vec<f64> = (0..6).map(|_| rng.random_range(-2.0..2.0)).collect();
            let label = trial % 6;
            let (_, analytic) = softmax_cross_entropy(&logits, label).unwrap();
            let numeric = central_diff_grad(&mut logits, 1e-6, |z| {
                softmax_cross_entropy(z, label).unwrap().0
            });
            assert!(max_relative_error(&analytic, &numeric) < 1e-8);
        }
    }

    #[test]
    fn bad_labels_are_rejected() {
        assert!(matches!(
            softmax_cross_entropy(&[0.0, 1.0], 2),
            Err(NnError::BadLabel { label: 2, classes: 2 })
        ));
        assert!(softmax_cross_entropy(&[0.0], 0).is_err());
    }
}
