//! `O(T)`: additive IID Gaussian noise on features, labels untouched.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::floor_count;
use crate::rng::{RngStream, NOISE, SAMPLE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ObfuscationError {
    #[error("ShapeMismatch: disclosures disagree on sample count, dimension or labels")]
    ShapeMismatch,
    #[error("NoDisclosures: averaging needs at least one disclosure")]
    NoDisclosures,
    #[error("InvalidSpec: sigma must be >= 0 and R within [0, 1]")]
    InvalidSpec,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ObfuscationSpec {
    /// Noise standard deviation in normalized feature units.
    pub sigma: f64,
    /// Proportion `R` of samples that receive noise.
    pub proportion: f64,
    /// Clamp obfuscated features to `[0, 1]`.
    pub clip: bool,
    pub seed: u64,
}

impl ObfuscationSpec {
    /// `R = 1`, no clipping.
    pub fn new(sigma: f64, seed: u64) -> Self {
        Self {
            sigma,
            proportion: 1.0,
            clip: false,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ObfuscationError> {
        if self.sigma >= 0.0 && self.sigma.is_finite() && (0.0..=1.0).contains(&self.proportion) {
            Ok(())
        } else {
            Err(ObfuscationError::InvalidSpec)
        }
    }
}

/// Rows chosen for noise: a uniform `⌊R·n⌋`-subset from the `sample`
/// stream, ascending.
pub fn obfuscated_rows(n: usize, spec: &ObfuscationSpec) -> Vec<usize> {
    let k = floor_count(spec.proportion * n as f64).min(n);
    if k == n {
        return (0..n).collect();
    }
    let mut rows = RngStream::derive(spec.seed, SAMPLE).choose(n, k);
    rows.sort_unstable();
    rows
}

/// Apply `t'_ij = t_ij + δ`, `δ ~ N(0, σ²)` drawn fresh per feature, to the
/// chosen rows. Noise is drawn row by row, feature by feature, in ascending
/// row order from the `noise` stream. Sample order and labels are kept.
pub fn obfuscate(dataset: &Dataset, spec: &ObfuscationSpec) -> Result<Dataset, ObfuscationError> {
    spec.validate()?;
    let rows = obfuscated_rows(dataset.len(), spec);
    if spec.sigma == 0.0 || rows.is_empty() {
        return Ok(dataset.clone());
    }
    let mut noise = RngStream::derive(spec.seed, NOISE);
    let d = dataset.dim();
    let mut features = dataset.features().to_vec();
    for r in rows {
        for v in &mut features[r * d..(r + 1) * d] {
            let mut x = *v + noise.gaussian(spec.sigma);
            if spec.clip {
                x = x.clamp(0.0, 1.0);
            }
            *v = x;
        }
    }
    Ok(dataset.with_features(features))
}

/// The averaging attack: element-wise mean of independently obfuscated
/// disclosures, and its mean squared error against `reference`.
pub fn reconstruct_by_averaging(
    disclosures: &[Dataset],
    reference: &Dataset,
) -> Result<(Dataset, f64), ObfuscationError> {
    let first = disclosures.first().ok_or(ObfuscationError::NoDisclosures)?;
    let compatible = |d: &Dataset| {
        d.len() == first.len() && d.dim() == first.dim() && d.labels() == first.labels()
    };
    if !disclosures.iter().all(compatible)
        || reference.len() != first.len()
        || reference.dim() != first.dim()
    {
        return Err(ObfuscationError::ShapeMismatch);
    }
    let mut sum = alloc::vec![0.0; first.features().len()];
    for d in disclosures {
        for (acc, &v) in sum.iter_mut().zip(d.features()) {
            *acc += v;
        }
    }
    let n = disclosures.len() as f64;
    for v in &mut sum {
        *v /= n;
    }
    let mse = mean_squared_error(&sum, reference.features());
    Ok((first.with_features(sum), mse))
}

pub fn mean_squared_error(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    if a.is_empty() {
        return 0.0;
    }
    let total: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
    total / a.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{synth_blobs, SampleShape};
    use alloc::vec;

    fn fixture() -> Dataset {
        synth_blobs(10, 100, 100, 0.1, &mut RngStream::derive(1, "fixture")).unwrap()
    }

    #[test]
    fn zero_sigma_or_zero_proportion_is_identity() {
        let d = fixture();
        let out = obfuscate(&d, &ObfuscationSpec::new(0.0, 3)).unwrap();
        assert_eq!(out, d);
        let spec = ObfuscationSpec {
            proportion: 0.0,
            ..ObfuscationSpec::new(0.7, 3)
        };
        assert_eq!(obfuscate(&d, &spec).unwrap(), d);
    }

    #[test]
    fn partial_proportion_touches_exact_row_count() {
        let d = fixture();
        let spec = ObfuscationSpec {
            proportion: 0.25,
            ..ObfuscationSpec::new(0.5, 9)
        };
        let out = obfuscate(&d, &spec).unwrap();
        let changed = (0..d.len()).filter(|&i| out.row(i) != d.row(i)).count();
        assert_eq!(changed, 250);
        assert_eq!(out.labels(), d.labels());
    }

    #[test]
    fn clip_bounds_features() {
        let d = fixture();
        let spec = ObfuscationSpec {
            clip: true,
            ..ObfuscationSpec::new(1.0, 2)
        };
        let out = obfuscate(&d, &spec).unwrap();
        assert!(out.features().iter().all(|v| (0.0..=1.0).contains(v)));
    }

    #[test]
    fn invalid_spec() {
        let d = fixture();
        assert_eq!(
            obfuscate(&d, &ObfuscationSpec::new(-1.0, 0)),
            Err(ObfuscationError::InvalidSpec)
        );
    }

    #[test]
    fn averaging_identity_and_shape_checks() {
        let d = fixture();
        let (est, mse) = reconstruct_by_averaging(core::slice::from_ref(&d), &d).unwrap();
        assert_eq!(mse, 0.0);
        assert_eq!(est, d);
        assert_eq!(
            reconstruct_by_averaging(&[], &d),
            Err(ObfuscationError::NoDisclosures)
        );
        let small = Dataset::new("s", SampleShape::flat(100), 10, vec![0.0; 100], vec![0]).unwrap();
        assert_eq!(
            reconstruct_by_averaging(&[d.clone(), small], &d),
            Err(ObfuscationError::ShapeMismatch)
        );
    }
}
