//! Error metrics and relative-improvement arithmetic.

use alloc::format;

use crate::error::{Error, Result};

/// `(1/n) Σ |y_i - ŷ_i|`.
pub fn mean_absolute_error(predictions: &[f64], targets: &[f64]) -> Result<f64> {
    if predictions.is_empty() || predictions.len() != targets.len() {
        return Err(Error::InvalidArgument(format!(
            "{} predictions for {} targets",
            predictions.len(),
            targets.len()
        )));
    }
    let sum: f64 = predictions
        .iter()
        .zip(targets)
        .map(|(p, y)| libm::fabs(y - p))
        .sum();
    Ok(sum / predictions.len() as f64)
}

/// Signed percentage change `(e_lkm - e_base) / e_base * 100`; negative is an improvement.
pub fn delta_emae(e_lkm: f64, e_base: f64) -> Result<f64> {
    if !(e_base > 0.0) || !e_base.is_finite() || !e_lkm.is_finite() {
        return Err(Error::InvalidArgument(format!(
            "baseline error must be positive and finite, got {e_base} (lkm {e_lkm})"
        )));
    }
    Ok((e_lkm - e_base) / e_base * 100.0)
}

/// Win counts `(base, lkm)` over paired errors; ties give each side half a win.
pub fn winning_tasks(pairs: &[(f64, f64)]) -> (f64, f64) {
    pairs.iter().fold((0.0, 0.0), |(b, l), &(base, lkm)| {
        if lkm < base {
            (b, l + 1.0)
        } else if base < lkm {
            (b + 1.0, l)
        } else {
            (b + 0.5, l + 0.5)
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn delta_examples() {
        assert!((delta_emae(0.0322, 0.0384).unwrap() - -16.1).abs() < 0.05);
        assert!((delta_emae(0.0262, 0.0267).unwrap() - -1.9).abs() < 0.05);
        assert_eq!(delta_emae(0.7, 0.7).unwrap(), 0.0);
        assert!(delta_emae(1.0, 0.0).is_err());
        assert!(delta_emae(1.0, -1.0).is_err());
    }

    #[test]
    fn mae_of_constant_zero_predictor() {
        assert_eq!(mean_absolute_error(&[0.0, 0.0], &[1.0, -1.0]).unwrap(), 1.0);
        assert!(mean_absolute_error(&[], &[]).is_err());
    }

    #[test]
    fn ties_split() {
        // eleven wins and one tie
        let mut pairs = [(1.0, 0.9); 12];
        pairs[11] = (0.023, 0.023);
        assert_eq!(winning_tasks(&pairs), (0.5, 11.5));
    }
}
