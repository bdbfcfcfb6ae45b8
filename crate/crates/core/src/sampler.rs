//! `S-X-Y-Z` draws from a global training pool.
//!
//! * `X` (label degree): the set covers `⌊C·X⌋` of the `C` labels.
//! * `Y` (label overlap): a counterpart set shares exactly `⌊C·X·Y⌋` labels
//!   with its anchor.
//! * `Z` (sampling ratio): each covered label contributes `⌊Z·n_ℓ⌋` of its
//!   `n_ℓ` pool entries, drawn without replacement.

use alloc::collections::BTreeSet;
use alloc::format;
use alloc::string::{String, ToString};
use alloc::vec::Vec;
use core::fmt;
use core::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::Dataset;
use crate::floor_count;
use crate::rng::{RngStream, SAMPLE};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SamplerError {
    #[error("DegenerateSpec: {0}")]
    DegenerateSpec(String),
    #[error("InfeasibleOverlap: need {needed} labels outside the anchor, only {available} exist")]
    InfeasibleOverlap { needed: usize, available: usize },
    #[error("EmptyResult: every per-label count floors to zero")]
    EmptyResult,
    #[error("InvalidSpec: {0}")]
    InvalidSpec(String),
}

/// Parameters of one `S-X-Y-Z` draw.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplingSpec {
    pub label_degree: f64,
    pub overlap: f64,
    pub ratio: f64,
    pub seed: u64,
    /// Explicit label set, replacing the random choice.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_labels: Option<Vec<u8>>,
}

impl SamplingSpec {
    pub fn new(
        label_degree: f64,
        overlap: f64,
        ratio: f64,
        seed: u64,
    ) -> Result<Self, SamplerError> {
        let spec = Self {
            label_degree,
            overlap,
            ratio,
            seed,
            anchor_labels: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn with_anchor_labels(mut self, labels: impl Into<Vec<u8>>) -> Self {
        self.anchor_labels = Some(labels.into());
        self
    }

    pub fn validate(&self) -> Result<(), SamplerError> {
        let (x, y, z) = (self.label_degree, self.overlap, self.ratio);
        if !(x > 0.0 && x <= 1.0) || !(0.0..=1.0).contains(&y) || !(z > 0.0 && z <= 1.0) {
            return Err(SamplerError::InvalidSpec(format!(
                "{self}: need 0 < X <= 1, 0 <= Y <= 1, 0 < Z <= 1"
            )));
        }
        Ok(())
    }

    /// `⌊C·X⌋`.
    pub fn label_count(&self, num_classes: usize) -> usize {
        floor_count(num_classes as f64 * self.label_degree)
    }

    /// `⌊C·X·Y⌋`.
    pub fn shared_count(&self, num_classes: usize) -> usize {
        floor_count(num_classes as f64 * self.label_degree * self.overlap)
    }

    /// The spec's own label set: the anchor override if present (checked
    /// against `⌊C·X⌋`), else a uniform choice from the `sample` stream.
    pub fn labels(
        &self,
        num_classes: usize,
        stream: &mut RngStream,
    ) -> Result<Vec<u8>, SamplerError> {
        self.validate()?;
        match &self.anchor_labels {
            Some(pinned) => check_label_list(pinned, num_classes, self.label_count(num_classes)),
            None => label_set(num_classes, self.label_degree, stream),
        }
    }

    /// Draw this spec's dataset from `pool`.
    pub fn draw(&self, pool: &Dataset) -> Result<Dataset, SamplerError> {
        let mut stream = RngStream::derive(self.seed, SAMPLE);
        let labels = self.labels(pool.num_classes(), &mut stream)?;
        let data = sample(pool, &labels, self.ratio, &mut stream)?;
        Ok(data.with_name(self.to_string()))
    }

    /// Draw a counterpart of `anchor`: a label set with exactly `⌊C·X·Y⌋`
    /// labels in common with `anchor`, then per-label sampling. A pinned
    /// `anchor_labels` list on `self` bypasses the overlap construction.
    pub fn draw_counterpart(&self, pool: &Dataset, anchor: &[u8]) -> Result<Dataset, SamplerError> {
        self.validate()?;
        let mut stream = RngStream::derive(self.seed, SAMPLE);
        let c = pool.num_classes();
        let labels = match &self.anchor_labels {
            Some(pinned) => check_label_list(pinned, c, self.label_count(c))?,
            None => counterpart_labels(anchor, c, self.label_degree, self.overlap, &mut stream)?,
        };
        let data = sample(pool, &labels, self.ratio, &mut stream)?;
        Ok(data.with_name(self.to_string()))
    }
}

fn check_label_list(
    labels: &[u8],
    num_classes: usize,
    expected: usize,
) -> Result<Vec<u8>, SamplerError> {
    let set: BTreeSet<u8> = labels.iter().copied().collect();
    if set.len() != labels.len() || set.len() != expected {
        return Err(SamplerError::InvalidSpec(format!(
            "pinned label list {labels:?} must hold {expected} distinct labels"
        )));
    }
    if set.iter().any(|&l| usize::from(l) >= num_classes) {
        return Err(SamplerError::InvalidSpec(format!(
            "pinned label list {labels:?} exceeds {num_classes} classes"
        )));
    }
    Ok(set.into_iter().collect())
}

impl fmt::Display for SamplingSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "S-{}-{}-{}", self.label_degree, self.overlap, self.ratio)
    }
}

/// Parses the `S-X-Y-Z` string form; seed 0 and no pinned labels.
impl FromStr for SamplingSpec {
    type Err = SamplerError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let bad = || SamplerError::InvalidSpec(format!("cannot parse {s:?} as S-X-Y-Z"));
        let rest = s.strip_prefix("S-").ok_or_else(bad)?;
        let parts: Vec<&str> = rest.split('-').collect();
        if parts.len() != 3 {
            return Err(bad());
        }
        let num = |p: &str| p.parse::<f64>().map_err(|_| bad());
        Self::new(num(parts[0])?, num(parts[1])?, num(parts[2])?, 0)
    }
}

/// A uniformly chosen set of `⌊C·X⌋` labels, ascending.
pub fn label_set(
    num_classes: usize,
    label_degree: f64,
    stream: &mut RngStream,
) -> Result<Vec<u8>, SamplerError> {
    if !(label_degree > 0.0 && label_degree <= 1.0) {
        return Err(SamplerError::InvalidSpec(format!(
            "label degree {label_degree}"
        )));
    }
    let k = floor_count(num_classes as f64 * label_degree);
    if k == 0 {
        return Err(SamplerError::DegenerateSpec(format!(
            "⌊{num_classes}·{label_degree}⌋ = 0 labels"
        )));
    }
    let mut labels: Vec<u8> = stream
        .choose(num_classes, k)
        .into_iter()
        .map(|l| l as u8)
        .collect();
    labels.sort_unstable();
    Ok(labels)
}

/// A `⌊C·X⌋`-label set sharing exactly `⌊C·X·Y⌋` labels with `anchor`.
/// Shared labels are a uniform choice from the anchor, the rest a uniform
/// choice from its complement.
pub fn counterpart_labels(
    anchor: &[u8],
    num_classes: usize,
    label_degree: f64,
    overlap: f64,
    stream: &mut RngStream,
) -> Result<Vec<u8>, SamplerError> {
    let size = floor_count(num_classes as f64 * label_degree);
    let shared = floor_count(num_classes as f64 * label_degree * overlap);
    let anchor_set: BTreeSet<u8> = anchor.iter().copied().collect();
    if anchor_set.len() != size || size == 0 {
        return Err(SamplerError::DegenerateSpec(format!(
            "anchor holds {} labels, expected ⌊C·X⌋ = {size}",
            anchor_set.len()
        )));
    }
    let complement: Vec<u8> = (0..num_classes as u8)
        .filter(|l| !anchor_set.contains(l))
        .collect();
    let fresh = size - shared;
    if fresh > complement.len() {
        return Err(SamplerError::InfeasibleOverlap {
            needed: fresh,
            available: complement.len(),
        });
    }
    let anchor_list: Vec<u8> = anchor_set.into_iter().collect();
    let mut out: Vec<u8> = stream
        .choose(anchor_list.len(), shared)
        .into_iter()
        .map(|i| anchor_list[i])
        .collect();
    out.extend(
        stream
            .choose(complement.len(), fresh)
            .into_iter()
            .map(|i| complement[i]),
    );
    out.sort_unstable();
    Ok(out)
}

/// Row indices (ascending) drawn by [`sample`].
pub fn sample_indices(
    pool: &Dataset,
    labels: &[u8],
    ratio: f64,
    stream: &mut RngStream,
) -> Result<Vec<usize>, SamplerError> {
    if !(ratio > 0.0 && ratio <= 1.0) {
        return Err(SamplerError::InvalidSpec(format!("sampling ratio {ratio}")));
    }
    let wanted: BTreeSet<u8> = labels.iter().copied().collect();
    if wanted.is_empty() || wanted.iter().any(|&l| usize::from(l) >= pool.num_classes()) {
        return Err(SamplerError::InvalidSpec(format!(
            "labels {labels:?} must be a nonempty subset of 0..{}",
            pool.num_classes()
        )));
    }
    let mut picked = Vec::new();
    for &label in &wanted {
        let members: Vec<usize> = (0..pool.len())
            .filter(|&i| pool.label(i) == label)
            .collect();
        let take = floor_count(ratio * members.len() as f64);
        picked.extend(
            stream
                .choose(members.len(), take)
                .into_iter()
                .map(|j| members[j]),
        );
    }
    if picked.is_empty() {
        return Err(SamplerError::EmptyResult);
    }
    picked.sort_unstable();
    Ok(picked)
}

/// Per-label sampling without replacement: `⌊Z·n_ℓ⌋` entries of each covered
/// label. The class count is inherited from the pool.
pub fn sample(
    pool: &Dataset,
    labels: &[u8],
    ratio: f64,
    stream: &mut RngStream,
) -> Result<Dataset, SamplerError> {
    let idx = sample_indices(pool, labels, ratio, stream)?;
    Ok(pool.subset(&idx))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::SampleShape;
    use alloc::vec;

    fn balanced(n: usize) -> Dataset {
        let labels: Vec<u8> = (0..n).map(|i| (i % 10) as u8).collect();
        let features = (0..n).map(|i| i as f64).collect();
        Dataset::new("pool", SampleShape::flat(1), 10, features, labels).unwrap()
    }

    fn stream() -> RngStream {
        RngStream::derive(17, SAMPLE)
    }

    #[test]
    fn label_set_sizes() {
        assert_eq!(
            label_set(10, 1.0, &mut stream()).unwrap(),
            (0..10).collect::<Vec<u8>>()
        );
        assert_eq!(label_set(10, 0.5, &mut stream()).unwrap().len(), 5);
        assert!(matches!(
            label_set(10, 0.09, &mut stream()),
            Err(SamplerError::DegenerateSpec(_))
        ));
    }

    #[test]
    fn counterpart_overlap() {
        let anchor = [0, 1, 2, 3, 4];
        let same = counterpart_labels(&anchor, 10, 0.5, 1.0, &mut stream()).unwrap();
        assert_eq!(same, anchor);
        let half = counterpart_labels(&anchor, 10, 0.5, 0.5, &mut stream()).unwrap();
        assert_eq!(half.len(), 5);
        assert_eq!(half.iter().filter(|l| anchor.contains(l)).count(), 2);
        let nine: Vec<u8> = (0..9).collect();
        assert_eq!(
            counterpart_labels(&nine, 10, 0.9, 0.0, &mut stream()),
            Err(SamplerError::InfeasibleOverlap {
                needed: 9,
                available: 1
            })
        );
    }

    #[test]
    fn sample_counts_follow_reference_settings() {
        let pool = balanced(1000);
        let all: Vec<u8> = (0..10).collect();
        let s = sample(&pool, &all, 0.5, &mut stream()).unwrap();
        assert_eq!(s.len(), 500);
        assert_eq!(s.class_counts(), vec![50; 10]);
        let eight: Vec<u8> = (0..8).collect();
        assert_eq!(sample(&pool, &eight, 0.1, &mut stream()).unwrap().len(), 80);
    }

    #[test]
    fn full_take_of_one_label() {
        let pool = balanced(200);
        let s = sample(&pool, &[3], 1.0, &mut stream()).unwrap();
        let expected: Vec<usize> = (0..200).filter(|i| i % 10 == 3).collect();
        let got: Vec<usize> = s.features().iter().map(|&v| v as usize).collect();
        assert_eq!(got, expected);
    }

    #[test]
    fn empty_result() {
        let pool = balanced(20);
        assert_eq!(
            sample(&pool, &[1, 2], 0.1, &mut stream()),
            Err(SamplerError::EmptyResult)
        );
    }

    #[test]
    fn spec_string_round_trip() {
        for s in [
            "S-1-1-0.5",
            "S-0.8-1-0.625",
            "S-0.5-0.1-0.5",
            "S-1-0.1-0.05",
        ] {
            let spec: SamplingSpec = s.parse().unwrap();
            assert_eq!(spec.to_string(), s);
        }
        assert!("S-0-1-1".parse::<SamplingSpec>().is_err());
        assert!("X-1-1-1".parse::<SamplingSpec>().is_err());
        assert!("S-1-1".parse::<SamplingSpec>().is_err());
    }

    #[test]
    fn pinned_labels_are_validated() {
        let pool = balanced(100);
        let spec = SamplingSpec::new(0.5, 1.0, 1.0, 3)
            .unwrap()
            .with_anchor_labels(vec![3, 4, 5, 6, 7]);
        let d = spec.draw(&pool).unwrap();
        assert_eq!(d.len(), 50);
        assert!(d.labels().iter().all(|l| (3..=7).contains(l)));
        let wrong = SamplingSpec::new(0.5, 1.0, 1.0, 3)
            .unwrap()
            .with_anchor_labels(vec![1, 2]);
        assert!(wrong.draw(&pool).is_err());
    }

    #[test]
    fn draw_is_deterministic() {
        let pool = balanced(500);
        let spec = SamplingSpec::new(0.5, 1.0, 0.3, 99).unwrap();
        assert_eq!(spec.draw(&pool).unwrap(), spec.draw(&pool).unwrap());
        let other = SamplingSpec {
            seed: 100,
            ..spec.clone()
        };
        assert_ne!(spec.draw(&pool).unwrap(), other.draw(&pool).unwrap());
    }
}
