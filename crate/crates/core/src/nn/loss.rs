//! Cross-entropy losses on probabilities, each returning the loss and its
//! gradient with respect to the prediction.
//!
//! Predictions are clamped to `[LOG_EPSILON, 1 - LOG_EPSILON]` before the
//! logarithm; the gradient is zero where the clamp is active.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result, Scalar};

pub const LOG_EPSILON: f64 = 1e-7;

fn clamp<S: Scalar>(p: S) -> (S, bool) {
    let lo = S::of(LOG_EPSILON);
    let hi = S::one() - lo;
    if p < lo {
        (lo, true)
    } else if p > hi {
        (hi, true)
    } else {
        (p, false)
    }
}

/// Fails unless `target` is a one-hot vector of the same length as `pred`.
pub(crate) fn check_one_hot<S: Scalar>(target: &[S], len: usize) -> Result<()> {
    if target.len() != len {
        return Err(Error::arg(format!(
            "one-hot target has {} entries, prediction has {len}",
            target.len()
        )));
    }
    let ones = target.iter().filter(|&&y| y == S::one()).count();
    let zeros = target.iter().filter(|&&y| y == S::zero()).count();
    if ones != 1 || ones + zeros != len {
        return Err(Error::arg("target is not a one-hot vector"));
    }
    Ok(())
}

/// `-sum_i y_i ln p_i`.
pub fn categorical_cross_entropy<S: Scalar>(pred: &[S], target: &[S]) -> Result<(S, Vec<S>)> {
    check_one_hot(target, pred.len())?;
    let mut loss = S::zero();
    let grad = pred
        .iter()
        .zip(target)
        .map(|(&p, &y)| {
            let (pc, clamped) = clamp(p);
            loss -= y * pc.ln();
            if clamped {
                S::zero()
            } else {
                -y / pc
            }
        })
        .collect();
    Ok((loss, grad))
}

/// `-y ln p - (1 - y) ln(1 - p)` for a label `y` in {0, 1}.
pub fn binary_cross_entropy<S: Scalar>(pred: S, target: S) -> Result<(S, S)> {
    if target != S::zero() && target != S::one() {
        return Err(Error::arg(format!("binary target must be 0 or 1, got {target}")));
    }
    let (pc, clamped) = clamp(pred);
    let one = S::one();
    let loss = -(target * pc.ln() + (one - target) * (one - pc).ln());
    let grad = if clamped {
        S::zero()
    } else {
        -target / pc + (one - target) / (one - pc)
    };
    Ok((loss, grad))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn hand_evaluated_values() {
        // -ln(0.25) and -ln(0.5), evaluated by hand
        let (l, _) = categorical_cross_entropy(&[0.25f64; 4], &[0.0, 1.0, 0.0, 0.0]).unwrap();
        assert!((l - 1.386_294_361).abs() < 1e-6);
        let (l, _) = binary_cross_entropy(0.5f64, 1.0).unwrap();
        assert!((l - 0.693_147_181).abs() < 1e-6);
        let (l, _) = categorical_cross_entropy(&[0.0f64, 1.0, 0.0], &[0.0, 1.0, 0.0]).unwrap();
        assert!(l.abs() < 1e-6);
        let (l, _) = binary_cross_entropy(0.0f64, 0.0).unwrap();
        assert!(l.abs() < 1e-6);
    }

    #[test]
    fn gradients_match_finite_differences() {
        let h = 1e-7;
        let y = [0.0, 0.0, 1.0, 0.0];
        for p in [[0.1f64, 0.2, 0.3, 0.4], [0.7, 0.1, 0.15, 0.05]] {
            let (_, g) = categorical_cross_entropy(&p, &y).unwrap();
            for i in 0..4 {
                let mut pp = p;
                let mut pm = p;
                pp[i] += h;
                pm[i] -= h;
                let num = (categorical_cross_entropy(&pp, &y).unwrap().0
                    - categorical_cross_entropy(&pm, &y).unwrap().0)
                    / (2.0 * h);
                assert!((num - g[i]).abs() <= 1e-4 * num.abs().max(1e-6));
            }
        }
        for (p, t) in [(0.3f64, 1.0f64), (0.8, 0.0), (0.55, 1.0)] {
            let (_, g) = binary_cross_entropy(p, t).unwrap();
            let num = (binary_cross_entropy(p + h, t).unwrap().0
                - binary_cross_entropy(p - h, t).unwrap().0)
                / (2.0 * h);
            assert!((num - g).abs() <= 1e-4 * num.abs());
        }
    }

    #[test]
    fn rejects_malformed_targets() {
        assert!(categorical_cross_entropy(&[0.5f64, 0.5], &[0.5, 0.5]).is_err());
        assert!(categorical_cross_entropy(&[0.5f64, 0.5], &[1.0, 1.0]).is_err());
        assert!(categorical_cross_entropy(&[0.5f64, 0.5], &[1.0]).is_err());
        assert!(binary_cross_entropy(0.5f64, 0.3).is_err());
        assert!(categorical_cross_entropy(&[0.5f32, 0.5], &vec![0.0, 1.0]).is_ok());
    }
}
