//! Sequence-level count estimators.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum FusionError {
    #[error("no frames to fuse")]
    Empty,
    #[error("{confidences} confidences but {counts} counts")]
    LengthMismatch { confidences: usize, counts: usize },
    #[error("non-finite confidence or count")]
    NonFinite,
    #[error("temperature must be positive, got {0}")]
    InvalidTemperature(f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountEstimate {
    pub value_real: f64,
    /// `value_real` rounded half-up.
    pub value_int: u64,
    pub per_frame_weights: Vec<f64>,
}

/// Numerically stable softmax of `values / temperature`.
pub fn softmax(values: &[f64], temperature: f64) -> Vec<f64> {
    let max = values.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = values.iter().map(|v| ((v - max) / temperature).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

pub fn round_half_up(v: f64) -> u64 {
    (v + 0.5).floor().max(0.0) as u64
}

/// Softmax-weighted mean of per-frame counts, weighting frame `i` by
/// `exp(r_i)`.
pub fn fuse_counts(confidences: &[f64], counts: &[f64]) -> Result<CountEstimate, FusionError> {
    fuse_counts_with_temperature(confidences, counts, 1.0)
}

pub fn fuse_counts_with_temperature(
    confidences: &[f64],
    counts: &[f64],
    temperature: f64,
) -> Result<CountEstimate, FusionError> {
    if confidences.len() != counts.len() {
        return Err(FusionError::LengthMismatch {
            confidences: confidences.len(),
            counts: counts.len(),
        });
    }
    if confidences.is_empty() {
        return Err(FusionError::Empty);
    }
    if !(temperature > 0.0 && temperature.is_finite()) {
        return Err(FusionError::InvalidTemperature(temperature));
    }
    if confidences.iter().chain(counts).any(|v| !v.is_finite()) {
        return Err(FusionError::NonFinite);
    }
    let weights = softmax(confidences, temperature);
    let value_real: f64 = weights.iter().zip(counts).map(|(w, n)| w * n).sum();
    Ok(CountEstimate {
        value_real,
        value_int: round_half_up(value_real),
        per_frame_weights: weights,
    })
}

/// Count of the first (pre-stirring) frame.
pub fn static_count(counts: &[u64]) -> Result<u64, FusionError> {
    counts.first().copied().ok_or(FusionError::Empty)
}

pub fn max_count(counts: &[u64]) -> Result<u64, FusionError> {
    counts.iter().copied().max().ok_or(FusionError::Empty)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn fuse_examples() {
        let e = fuse_counts(&[0.3], &[7.0]).unwrap();
        assert_eq!(e.value_real, 7.0);
        assert_eq!(e.per_frame_weights, vec![1.0]);

        let e = fuse_counts(&[0.4; 3], &[3.0, 6.0, 9.0]).unwrap();
        assert!((e.value_real - 6.0).abs() < 1e-12);

        let e = fuse_counts(&[0.0, 3f64.ln()], &[4.0, 8.0]).unwrap();
        assert!((e.per_frame_weights[0] - 0.25).abs() < 1e-15);
        assert!((e.value_real - 7.0).abs() < 1e-9);
        assert_eq!(e.value_int, 7);
    }

    #[test]
    fn fuse_errors() {
        assert_eq!(fuse_counts(&[], &[]), Err(FusionError::Empty));
        assert!(matches!(fuse_counts(&[0.1], &[1.0, 2.0]), Err(FusionError::LengthMismatch { .. })));
        assert_eq!(fuse_counts(&[f64::NAN], &[1.0]), Err(FusionError::NonFinite));
        assert_eq!(
            fuse_counts_with_temperature(&[0.1], &[1.0], 0.0),
            Err(FusionError::InvalidTemperature(0.0))
        );
    }

    #[test]
    fn huge_confidences_do_not_overflow() {
        let e = fuse_counts(&[1000.0, 1000.0], &[2.0, 4.0]).unwrap();
        assert!((e.value_real - 3.0).abs() < 1e-12);
    }

    #[test]
    fn rounding_is_half_up() {
        assert_eq!(round_half_up(8.5), 9);
        assert_eq!(round_half_up(8.49), 8);
        assert_eq!(round_half_up(0.0), 0);
    }

    #[test]
    fn baselines() {
        assert_eq!(static_count(&[2, 9, 14, 11]), Ok(2));
        assert_eq!(static_count(&[15, 23, 18]), Ok(15));
        assert_eq!(static_count(&[5]), Ok(5));
        assert_eq!(max_count(&[2, 9, 17, 11]), Ok(17));
        assert_eq!(max_count(&[4, 4, 4]), Ok(4));
        assert_eq!(max_count(&[15, 23, 18]), Ok(23));
        assert_eq!(static_count(&[]), Err(FusionError::Empty));
        assert_eq!(max_count(&[]), Err(FusionError::Empty));
    }

    fn inputs() -> impl Strategy<Value = (Vec<f64>, Vec<u64>)> {
        (1usize..12).prop_flat_map(|n| {
            (prop::collection::vec(-3.0..3.0f64, n), prop::collection::vec(0u64..60, n))
        })
    }

    proptest! {
        #[test]
        fn fused_is_convex_combination((r, counts) in inputs()) {
            let c: Vec<f64> = counts.iter().map(|&v| v as f64).collect();
            let e = fuse_counts(&r, &c).unwrap();
            let lo = *counts.iter().min().unwrap() as f64;
            let hi = max_count(&counts).unwrap() as f64;
            prop_assert!(e.value_real >= lo - 1e-9 && e.value_real <= hi + 1e-9);
            prop_assert!((e.per_frame_weights.iter().sum::<f64>() - 1.0).abs() < 1e-9);
            prop_assert!(static_count(&counts).unwrap() <= max_count(&counts).unwrap());
        }

        #[test]
        fn shift_invariant((r, counts) in inputs(), shift in -5.0..5.0f64) {
            let c: Vec<f64> = counts.iter().map(|&v| v as f64).collect();
            let a = fuse_counts(&r, &c).unwrap();
            let shifted: Vec<f64> = r.iter().map(|v| v + shift).collect();
            let b = fuse_counts(&shifted, &c).unwrap();
            prop_assert!((a.value_real - b.value_real).abs() <= 1e-12 * (1.0 + a.value_real));
            for (x, y) in a.per_frame_weights.iter().zip(&b.per_frame_weights) {
                prop_assert!((x - y).abs() <= 1e-12);
            }
        }

        #[test]
        fn raising_one_confidence_shifts_weight((r, counts) in inputs(), pick in any::<prop::sample::Index>(), bump in 0.01..2.0f64) {
            prop_assume!(r.len() > 1);
            let c: Vec<f64> = counts.iter().map(|&v| v as f64).collect();
            let i = pick.index(r.len());
            let before = fuse_counts(&r, &c).unwrap().per_frame_weights;
            let mut r2 = r.clone();
            r2[i] += bump;
            let after = fuse_counts(&r2, &c).unwrap().per_frame_weights;
            prop_assert!(after[i] > before[i]);
            for j in (0..r.len()).filter(|&j| j != i) {
                prop_assert!(after[j] < before[j]);
            }
        }
    }
}
