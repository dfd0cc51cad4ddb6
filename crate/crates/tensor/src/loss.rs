//! Scalar cross-entropy losses on probabilities. The tape has fused,
//! logit-based versions of both for training.

use crate::error::{Result, TensorError};
use crate::tape::PROB_EPS;

fn clamp(p: f64) -> f64 {
    p.clamp(PROB_EPS, 1.0 - PROB_EPS)
}

/// `-(y ln p + (1 - y) ln(1 - p))` with `p` clamped to `[eps, 1 - eps]`.
pub fn binary_cross_entropy(prediction: f64, label: bool) -> f64 {
    let p = clamp(prediction);
    if label {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Derivative of [`binary_cross_entropy`] with respect to the prediction.
/// Zero outside the clamp interval.
pub fn binary_cross_entropy_grad(prediction: f64, label: bool) -> f64 {
    if !(PROB_EPS..=1.0 - PROB_EPS).contains(&prediction) {
        return 0.0;
    }
    if label {
        -1.0 / prediction
    } else {
        1.0 / (1.0 - prediction)
    }
}

/// `-ln probabilities[label]`, with the probability clamped below at eps.
pub fn categorical_cross_entropy(probabilities: &[f64], label: usize) -> Result<f64> {
    if label >= probabilities.len() {
        return Err(TensorError::LabelOutOfRange {
            label,
            classes: probabilities.len(),
        });
    }
    Ok(-probabilities[label].max(PROB_EPS).ln())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bce_examples() {
        assert!((binary_cross_entropy(0.5, true) - 2f64.ln()).abs() < 1e-12);
        assert!((binary_cross_entropy(0.5, false) - 2f64.ln()).abs() < 1e-12);
        assert!(binary_cross_entropy(1.0 - PROB_EPS, true) < 1e-6);
        assert!(binary_cross_entropy(1.0, false).is_finite());
        assert!((binary_cross_entropy_grad(0.5, true) + 2.0).abs() < 1e-12);
    }

    #[test]
    fn cce_examples() {
        assert!((categorical_cross_entropy(&[0.25; 4], 2).unwrap() - 4f64.ln()).abs() < 1e-12);
        assert_eq!(categorical_cross_entropy(&[0.0, 1.0, 0.0], 1).unwrap(), 0.0);
        let v = categorical_cross_entropy(&[0.7, 0.2, 0.1], 0).unwrap();
        assert!((v - 0.356_674_943_938_732_4).abs() < 1e-12);
        assert!(categorical_cross_entropy(&[0.5, 0.5], 2).is_err());
    }
}
