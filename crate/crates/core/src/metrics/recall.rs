//! Threshold grids and recall.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Strictly increasing acceptance thresholds; an error passes when it is
/// strictly below a threshold.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RecallSpec {
    pub thresholds: Vec<f64>,
}

/// `k·0.05` for `k = 1..=10`.
fn tenths_grid(scale: f64) -> Vec<f64> {
    (1..=10).map(|k| k as f64 * 0.05 * scale).collect()
}

/// VSD misalignment tolerances τ: 5% to 50% of the diameter.
pub fn vsd_taus(diameter: f64) -> Vec<f64> {
    tenths_grid(diameter)
}

impl RecallSpec {
    pub fn new(thresholds: Vec<f64>) -> Result<Self> {
        if thresholds.is_empty() {
            return Err(Error::Empty("threshold list".into()));
        }
        if thresholds.windows(2).any(|w| !(w[1] > w[0])) || thresholds.iter().any(|t| !t.is_finite()) {
            return Err(Error::InvalidArgument(
                "thresholds must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { thresholds })
    }

    /// 5% to 50% of the object diameter.
    pub fn mssd(diameter: f64) -> Self {
        Self {
            thresholds: tenths_grid(diameter),
        }
    }

    /// 5 to 50 px, times an image-size factor (1 at 640×480).
    pub fn mspd(scale: f64) -> Self {
        Self {
            thresholds: (1..=10).map(|k| 5.0 * k as f64 * scale).collect(),
        }
    }

    /// 0.05 to 0.5, applied to each VSD value.
    pub fn vsd() -> Self {
        Self {
            thresholds: tenths_grid(1.0),
        }
    }

    pub fn passes(&self, error: f64) -> Vec<bool> {
        self.thresholds.iter().map(|&t| error < t).collect()
    }
}

/// Mean over all (error, threshold) pairs of `error < threshold`.
pub fn recall(errors: &[f64], spec: &RecallSpec) -> Result<f64> {
    if errors.is_empty() {
        return Err(Error::Empty("error list".into()));
    }
    let passed: usize = errors
        .iter()
        .map(|&e| spec.thresholds.iter().filter(|&&t| e < t).count())
        .sum();
    Ok(passed as f64 / (errors.len() * spec.thresholds.len()) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn grids() {
        let s = RecallSpec::mssd(0.2);
        assert_eq!(s.thresholds.len(), 10);
        assert!((s.thresholds[0] - 0.01).abs() < 1e-15 && (s.thresholds[9] - 0.1).abs() < 1e-15);
        assert_eq!(
            RecallSpec::mspd(1.0).thresholds,
            vec![5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0, 45.0, 50.0]
        );
        assert_eq!(RecallSpec::vsd().thresholds.len(), 10);
        assert!(RecallSpec::new(vec![1.0, 1.0]).is_err());
        assert!(RecallSpec::new(vec![]).is_err());
    }

    #[test]
    fn counting_examples() {
        let s = RecallSpec::mssd(1.0);
        assert_eq!(recall(&[0.0, 0.0], &s).unwrap(), 1.0);
        assert_eq!(recall(&[0.9], &s).unwrap(), 0.0);
        // between the third and fourth thresholds
        assert!((recall(&[0.175], &s).unwrap() - 0.7).abs() < 1e-15);
        // exactly on a threshold does not pass it
        assert!((recall(&[5.0], &RecallSpec::mspd(1.0)).unwrap() - 0.9).abs() < 1e-15);
        assert!(recall(&[], &s).is_err());
    }

    proptest! {
        #[test]
        fn recall_is_the_pass_ratio_and_monotone(errs in prop::collection::vec(0.0f64..0.6, 1..20), grow in 0.0f64..0.2) {
            let s = RecallSpec::mssd(1.0);
            let brute = errs.iter().flat_map(|e| s.passes(*e)).filter(|&p| p).count() as f64 / (10 * errs.len()) as f64;
            prop_assert_eq!(recall(&errs, &s).unwrap(), brute);
            let worse: Vec<f64> = errs.iter().map(|e| e + grow).collect();
            prop_assert!(recall(&worse, &s).unwrap() <= recall(&errs, &s).unwrap());
        }
    }
}
