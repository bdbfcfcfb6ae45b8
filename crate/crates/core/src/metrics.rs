//! Model distance and the privacy / utility / distinguishability report.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::nn::ModelWeights;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricsError {
    #[error("ArchMismatch: weights differ in architecture, tensor names or shapes")]
    ArchMismatch,
    #[error("LengthMismatch: traces hold {left} and {right} checkpoints")]
    LengthMismatch { left: usize, right: usize },
    #[error("RangeError: {0}")]
    RangeError(String),
}

/// `D(W_i, W_j) = sqrt(sum_k |w_ik - w_jk|^2)` over every entry of every
/// tensor (biases included), summed in tensor order.
pub fn fnorm(a: &ModelWeights, b: &ModelWeights) -> Result<f64, MetricsError> {
    if !a.same_layout(b) {
        return Err(MetricsError::ArchMismatch);
    }
    let mut sum = 0.0;
    for (x, y) in a.values().zip(b.values()) {
        let d = x - y;
        sum += d * d;
    }
    Ok(libm::sqrt(sum))
}

/// `Δ = |D(W_ref, W_same) - D(W_ref, W_other)|`.
pub fn distinguishability(
    reference: &ModelWeights,
    obf_same: &ModelWeights,
    obf_other: &ModelWeights,
) -> Result<f64, MetricsError> {
    Ok(gap(
        fnorm(reference, obf_same)?,
        fnorm(reference, obf_other)?,
    ))
}

/// `|d_same - d_other|`.
pub fn gap(d_same: f64, d_other: f64) -> f64 {
    libm::fabs(d_same - d_other)
}

/// Element-wise distance between two checkpoint sequences.
pub fn trace_compare(a: &[ModelWeights], b: &[ModelWeights]) -> Result<Vec<f64>, MetricsError> {
    if a.len() != b.len() {
        return Err(MetricsError::LengthMismatch {
            left: a.len(),
            right: b.len(),
        });
    }
    a.iter().zip(b).map(|(x, y)| fnorm(x, y)).collect()
}

/// One point of the PUD triangle. Privacy is the `(sigma, recon_mse)` pair.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PudReport {
    pub sigma: f64,
    pub recon_mse: f64,
    pub utility: f64,
    pub delta: f64,
    pub metadata: BTreeMap<String, String>,
}

pub fn pud_report(
    sigma: f64,
    recon_mse: f64,
    utility: f64,
    delta: f64,
    metadata: BTreeMap<String, String>,
) -> Result<PudReport, MetricsError> {
    let check = |ok: bool, what: &str| {
        if ok {
            Ok(())
        } else {
            Err(MetricsError::RangeError(what.into()))
        }
    };
    check(
        sigma >= 0.0 && sigma.is_finite(),
        "sigma must be finite and >= 0",
    )?;
    check(
        recon_mse >= 0.0 && recon_mse.is_finite(),
        "recon_mse must be finite and >= 0",
    )?;
    check((0.0..=1.0).contains(&utility), "utility must lie in [0, 1]")?;
    check(
        delta >= 0.0 && delta.is_finite(),
        "delta must be finite and >= 0",
    )?;
    Ok(PudReport {
        sigma,
        recon_mse,
        utility,
        delta,
        metadata,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::digest::digest;
    use crate::nn::Tensor;
    use alloc::vec;

    fn weights(tensors: &[(&str, Vec<usize>, Vec<f64>)]) -> ModelWeights {
        ModelWeights::from_parts(
            digest(b"test-arch"),
            tensors
                .iter()
                .map(|(n, s, d)| Tensor {
                    name: (*n).into(),
                    shape: s.clone(),
                    data: d.clone(),
                })
                .collect(),
        )
    }

    #[test]
    fn hand_computed_distances() {
        let a = weights(&[("w", vec![2, 2], vec![1.0, 2.0, 3.0, 4.0])]);
        let z = weights(&[("w", vec![2, 2], vec![0.0; 4])]);
        assert_eq!(fnorm(&a, &a).unwrap(), 0.0);
        assert!((fnorm(&a, &z).unwrap() - 30f64.sqrt()).abs() < 1e-15);
        assert!((fnorm(&a, &z).unwrap() - 5.477226).abs() < 1e-6);
        let two = weights(&[("a", vec![1], vec![1.0]), ("b", vec![2], vec![2.0, 2.0])]);
        let zero = weights(&[("a", vec![1], vec![0.0]), ("b", vec![2], vec![0.0, 0.0])]);
        assert_eq!(fnorm(&two, &zero).unwrap(), 3.0);
    }

    #[test]
    fn layout_mismatch() {
        let a = weights(&[("w", vec![2], vec![1.0, 2.0])]);
        let b = weights(&[("v", vec![2], vec![1.0, 2.0])]);
        assert_eq!(fnorm(&a, &b), Err(MetricsError::ArchMismatch));
        let c = weights(&[("w", vec![1, 2], vec![1.0, 2.0])]);
        assert_eq!(fnorm(&a, &c), Err(MetricsError::ArchMismatch));
    }

    #[test]
    fn delta_definition() {
        let r = weights(&[("w", vec![1], vec![0.0])]);
        let s = weights(&[("w", vec![1], vec![5.0])]);
        let o = weights(&[("w", vec![1], vec![3.5])]);
        assert_eq!(distinguishability(&r, &s, &s).unwrap(), 0.0);
        assert_eq!(distinguishability(&r, &s, &o).unwrap(), 1.5);
        assert_eq!(distinguishability(&r, &o, &s).unwrap(), 1.5);
    }

    #[test]
    fn trace_comparison() {
        let a = weights(&[("w", vec![1], vec![1.0])]);
        let b = weights(&[("w", vec![1], vec![4.0])]);
        assert_eq!(
            trace_compare(&[a.clone(), b.clone()], &[a.clone(), b.clone()]).unwrap(),
            vec![0.0, 0.0]
        );
        assert_eq!(
            trace_compare(core::slice::from_ref(&a), core::slice::from_ref(&b)).unwrap(),
            vec![3.0]
        );
        assert_eq!(
            trace_compare(core::slice::from_ref(&a), &[]),
            Err(MetricsError::LengthMismatch { left: 1, right: 0 })
        );
    }

    #[test]
    fn report_ranges() {
        let meta = BTreeMap::new();
        let raw = pud_report(0.0, 0.0, 0.99, 0.7, meta.clone()).unwrap();
        assert_eq!(raw.sigma, 0.0);
        assert!(pud_report(1.0, 0.0156, 0.82, 1.5, meta.clone()).is_ok());
        assert!(matches!(
            pud_report(0.0, 0.0, 1.2, 0.0, meta.clone()),
            Err(MetricsError::RangeError(_))
        ));
        assert!(pud_report(-0.1, 0.0, 0.5, 0.0, meta.clone()).is_err());
        assert!(pud_report(0.1, 0.0, 0.5, -1.0, meta).is_err());
    }
}
