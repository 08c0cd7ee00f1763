use super::math::{sigmoid, softplus};
use crate::error::{Error, Result};

/// Binary cross entropy on a logit: `softplus(logit) - label * logit`.
///
/// Returns the loss and its derivative with respect to the logit,
/// `sigmoid(logit) - label`. Never forms `sigmoid(logit)` inside a log.
pub fn bce_with_logits(logit: f64, label: f64) -> Result<(f64, f64)> {
    if !logit.is_finite() {
        return Err(Error::NonFinite("logit"));
    }
    if label != 0.0 && label != 1.0 {
        return Err(Error::invalid(format!("label must be 0 or 1, got {label}")));
    }
    Ok((softplus(logit) - label * logit, sigmoid(logit) - label))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zero_logit() {
        let (l, g) = bce_with_logits(0.0, 1.0).unwrap();
        assert!((l - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g, -0.5);
        let (l0, g0) = bce_with_logits(0.0, 0.0).unwrap();
        assert!((l0 - std::f64::consts::LN_2).abs() < 1e-15);
        assert_eq!(g0, 0.5);
    }

    #[test]
    fn saturation() {
        let (l, g) = bce_with_logits(1000.0, 1.0).unwrap();
        assert!(l.abs() < 1e-300 && g.abs() < 1e-300);
        let (l, g) = bce_with_logits(-1000.0, 1.0).unwrap();
        assert!((l - 1000.0).abs() < 1e-9);
        assert!((g + 1.0).abs() < 1e-12);
        let (l, _) = bce_with_logits(1000.0, 0.0).unwrap();
        assert!((l - 1000.0).abs() < 1e-9);
    }

    #[test]
    fn gradient_matches_difference() {
        for &z in &[-3.0, -0.2, 0.7, 4.0] {
            for &y in &[0.0, 1.0] {
                let h = 1e-6;
                let (lp, _) = bce_with_logits(z + h, y).unwrap();
                let (lm, _) = bce_with_logits(z - h, y).unwrap();
                let (_, g) = bce_with_logits(z, y).unwrap();
                assert!(((lp - lm) / (2.0 * h) - g).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(bce_with_logits(f64::NAN, 1.0).is_err());
        assert!(bce_with_logits(0.0, 0.5).is_err());
    }
}
