//! Shared domain types.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Points, gradients and samples all live in a dense `f64` vector.
pub type Vector = nalgebra::DVector<f64>;

/// Privacy budget. `delta == 0` denotes pure differential privacy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrivacyParams {
    pub epsilon: f64,
    pub delta: f64,
}

impl PrivacyParams {
    pub fn new(epsilon: f64, delta: f64) -> Result<Self> {
        if !(epsilon.is_finite() && epsilon > 0.0) {
            return invalid(format!("epsilon must be finite and positive, got {epsilon}"));
        }
        if !(0.0..1.0).contains(&delta) {
            return invalid(format!("delta must lie in [0, 1), got {delta}"));
        }
        Ok(Self { epsilon, delta })
    }

    pub fn pure(epsilon: f64) -> Result<Self> {
        Self::new(epsilon, 0.0)
    }

    pub fn is_pure(&self) -> bool {
        self.delta == 0.0
    }
}

/// Growth certificate `f(x) - f(x*) >= (lambda / kappa) |x - x*|^kappa`
/// together with the lower estimate of `kappa` handed to algorithms.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GrowthSpec {
    pub lambda: f64,
    pub kappa: f64,
    pub kappa_lower: f64,
}

impl GrowthSpec {
    pub fn new(lambda: f64, kappa: f64, kappa_lower: f64) -> Result<Self> {
        if !(lambda.is_finite() && lambda > 0.0) {
            return invalid(format!("growth lambda must be positive, got {lambda}"));
        }
        if !(kappa > 1.0) {
            return invalid(format!("growth exponent must exceed 1, got {kappa}"));
        }
        if !(kappa_lower > 1.0 && kappa_lower <= kappa) {
            return invalid(format!(
                "kappa_lower must satisfy 1 < kappa_lower <= kappa, got {kappa_lower} (kappa = {kappa})"
            ));
        }
        Ok(Self {
            lambda,
            kappa,
            kappa_lower,
        })
    }

    /// Same certificate, different algorithm-side lower estimate.
    pub fn with_kappa_lower(self, kappa_lower: f64) -> Result<Self> {
        Self::new(self.lambda, self.kappa, kappa_lower)
    }
}

/// An ordered list of samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    samples: Vec<Vector>,
}

impl Dataset {
    pub fn new(samples: Vec<Vector>) -> Result<Self> {
        if samples.is_empty() {
            return invalid("dataset must contain at least one sample");
        }
        Ok(Self { samples })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn samples(&self) -> &[Vector] {
        &self.samples
    }

    pub fn get(&self, i: usize) -> Option<&Vector> {
        self.samples.get(i)
    }

    /// Index ranges of `blocks` contiguous blocks of size `len / blocks`.
    /// Leftover samples at the end are not covered.
    pub fn block_ranges(&self, blocks: usize) -> Vec<Range<usize>> {
        block_ranges(self.len(), blocks)
    }

    pub fn slice(&self, range: Range<usize>) -> Result<Dataset> {
        if range.start >= range.end || range.end > self.len() {
            return invalid(format!(
                "slice {range:?} out of bounds for dataset of size {}",
                self.len()
            ));
        }
        Ok(Dataset {
            samples: self.samples[range].to_vec(),
        })
    }

    /// Copy of the dataset with sample `i` replaced.
    pub fn with_replaced(&self, i: usize, sample: Vector) -> Result<Dataset> {
        if i >= self.len() {
            return invalid(format!("index {i} out of bounds"));
        }
        let mut samples = self.samples.clone();
        samples[i] = sample;
        Ok(Dataset { samples })
    }
}

pub(crate) fn block_ranges(n: usize, blocks: usize) -> Vec<Range<usize>> {
    if blocks == 0 {
        return Vec::new();
    }
    let size = n / blocks;
    (0..blocks).map(|i| i * size..(i + 1) * size).collect()
}

/// Checks every coordinate is finite.
pub(crate) fn check_finite(x: &Vector, what: &str) -> Result<()> {
    if x.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        invalid(format!("{what} has non-finite coordinates"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn privacy_params_validation() {
        assert!(PrivacyParams::new(1.0, 0.0).unwrap().is_pure());
        assert!(PrivacyParams::new(0.0, 0.0).is_err());
        assert!(PrivacyParams::new(f64::INFINITY, 0.0).is_err());
        assert!(PrivacyParams::new(1.0, 1.0).is_err());
        assert!(PrivacyParams::new(1.0, -1e-9).is_err());
    }

    #[test]
    fn growth_spec_requires_ordered_kappas() {
        assert!(GrowthSpec::new(1.0, 2.0, 1.5).is_ok());
        assert!(GrowthSpec::new(1.0, 2.0, 2.5).is_err());
        assert!(GrowthSpec::new(1.0, 1.0, 1.0).is_err());
        assert!(GrowthSpec::new(0.0, 2.0, 1.5).is_err());
    }

    #[test]
    fn blocks_are_disjoint_and_ordered() {
        let ranges = block_ranges(10, 3);
        assert_eq!(ranges, vec![0..3, 3..6, 6..9]);
        for w in ranges.windows(2) {
            assert_eq!(w[0].end, w[1].start);
        }
    }

    #[test]
    fn empty_dataset_rejected() {
        assert!(Dataset::new(vec![]).is_err());
    }
}
