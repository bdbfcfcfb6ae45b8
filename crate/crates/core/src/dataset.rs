//! Labeled sample collections.

use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::digest::{Digest, Hasher};
use crate::rng::RngStream;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DataError {
    #[error("WrongMagic: unexpected magic number {found:#010x}")]
    WrongMagic { found: u32 },
    #[error("CountMismatch: {images} images but {labels} labels")]
    CountMismatch { images: usize, labels: usize },
    #[error("TruncatedFile: payload shorter than the header promises")]
    TruncatedFile,
    #[error("BadRecordLength: {file} has length {len}, not a multiple of 3073")]
    BadRecordLength { file: String, len: usize },
    #[error("LabelOutOfRange: label {value} is not below the class count")]
    LabelOutOfRange { value: u32 },
    #[error("EmptyDataset: operation needs at least one sample")]
    EmptyDataset,
    #[error("ShapeMismatch: {0}")]
    ShapeMismatch(String),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
}

/// Per-sample layout. Features are stored channel-planar: all of channel 0
/// row by row, then channel 1, and so on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SampleShape {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
}

impl SampleShape {
    pub const fn new(height: usize, width: usize, channels: usize) -> Self {
        Self {
            height,
            width,
            channels,
        }
    }

    /// A flat feature vector of length `dim`.
    pub const fn flat(dim: usize) -> Self {
        Self::new(1, dim, 1)
    }

    pub const fn dim(&self) -> usize {
        self.height * self.width * self.channels
    }
}

/// `T = {t_i, l_i}`: an `n x d` feature matrix (row-major) plus labels.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    name: String,
    shape: SampleShape,
    num_classes: usize,
    features: Vec<f64>,
    labels: Vec<u8>,
}

impl Dataset {
    pub fn new(
        name: impl Into<String>,
        shape: SampleShape,
        num_classes: usize,
        features: Vec<f64>,
        labels: Vec<u8>,
    ) -> Result<Self, DataError> {
        if shape.dim() == 0 {
            return Err(DataError::ShapeMismatch(
                "sample shape has no features".into(),
            ));
        }
        if num_classes == 0 || num_classes > 256 {
            return Err(DataError::InvalidArgument(alloc::format!(
                "class count {num_classes} outside 1..=256"
            )));
        }
        if features.len() != labels.len() * shape.dim() {
            return Err(DataError::CountMismatch {
                images: features.len() / shape.dim(),
                labels: labels.len(),
            });
        }
        if let Some(&bad) = labels.iter().find(|&&l| usize::from(l) >= num_classes) {
            return Err(DataError::LabelOutOfRange { value: bad.into() });
        }
        Ok(Self {
            name: name.into(),
            shape,
            num_classes,
            features,
            labels,
        })
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn with_name(mut self, name: impl Into<String>) -> Self {
        self.name = name.into();
        self
    }

    pub fn shape(&self) -> SampleShape {
        self.shape
    }

    pub fn dim(&self) -> usize {
        self.shape.dim()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn num_classes(&self) -> usize {
        self.num_classes
    }

    pub fn features(&self) -> &[f64] {
        &self.features
    }

    pub fn labels(&self) -> &[u8] {
        &self.labels
    }

    pub fn row(&self, i: usize) -> &[f64] {
        let d = self.dim();
        &self.features[i * d..(i + 1) * d]
    }

    pub fn label(&self, i: usize) -> u8 {
        self.labels[i]
    }

    /// Consume into `(features, labels)`.
    pub fn into_parts(self) -> (Vec<f64>, Vec<u8>) {
        (self.features, self.labels)
    }

    /// Same metadata, new feature matrix of identical size.
    pub fn with_features(&self, features: Vec<f64>) -> Self {
        assert_eq!(features.len(), self.features.len());
        Self {
            features,
            ..self.clone()
        }
    }

    /// Rows at `indices`, in that order.
    pub fn subset(&self, indices: &[usize]) -> Self {
        let d = self.dim();
        let mut features = Vec::with_capacity(indices.len() * d);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            features.extend_from_slice(self.row(i));
            labels.push(self.labels[i]);
        }
        Self {
            name: self.name.clone(),
            shape: self.shape,
            num_classes: self.num_classes,
            features,
            labels,
        }
    }

    /// Number of samples carrying each label.
    pub fn class_counts(&self) -> Vec<usize> {
        let mut counts = alloc::vec![0; self.num_classes];
        for &l in &self.labels {
            counts[usize::from(l)] += 1;
        }
        counts
    }

    /// Commitment over the canonical serialization: shape, class count,
    /// sample count, labels, then features as little-endian f64. The name
    /// is not committed.
    pub fn commitment(&self) -> Digest {
        let mut h = Hasher::new();
        h.update(b"OBDS\x00\x01");
        for v in [
            self.shape.height,
            self.shape.width,
            self.shape.channels,
            self.num_classes,
            self.len(),
        ] {
            h.update(&(v as u64).to_le_bytes());
        }
        h.update(&self.labels);
        let mut buf = Vec::with_capacity(8 * 1024);
        for chunk in self.features.chunks(1024) {
            buf.clear();
            for v in chunk {
                buf.extend_from_slice(&v.to_le_bytes());
            }
            h.update(&buf);
        }
        h.finish()
    }

    /// Concatenate datasets that share shape and class count.
    pub fn concat(parts: &[Dataset]) -> Result<Self, DataError> {
        let first = parts.first().ok_or(DataError::EmptyDataset)?;
        let mut features = Vec::new();
        let mut labels = Vec::new();
        for p in parts {
            if p.shape != first.shape || p.num_classes != first.num_classes {
                return Err(DataError::ShapeMismatch(
                    "concatenated datasets disagree on shape or class count".into(),
                ));
            }
            features.extend_from_slice(&p.features);
            labels.extend_from_slice(&p.labels);
        }
        Ok(Self {
            name: first.name.clone(),
            shape: first.shape,
            num_classes: first.num_classes,
            features,
            labels,
        })
    }
}

/// Index sets of a uniform random split: the first `floor(n * fraction)`
/// positions of a permutation go to train, the rest to test. Both lists are
/// returned in ascending order.
pub fn split_indices(
    n: usize,
    train_fraction: f64,
    stream: &mut RngStream,
) -> Result<(Vec<usize>, Vec<usize>), DataError> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(DataError::InvalidArgument(alloc::format!(
            "train fraction {train_fraction} outside (0, 1)"
        )));
    }
    if n == 0 {
        return Err(DataError::EmptyDataset);
    }
    let perm = stream.permutation(n);
    let cut = crate::floor_count(n as f64 * train_fraction);
    let mut train = perm[..cut].to_vec();
    let mut test = perm[cut..].to_vec();
    train.sort_unstable();
    test.sort_unstable();
    Ok((train, test))
}

/// Split into `(train, test)`.
pub fn split(
    dataset: &Dataset,
    train_fraction: f64,
    stream: &mut RngStream,
) -> Result<(Dataset, Dataset), DataError> {
    let (train, test) = split_indices(dataset.len(), train_fraction, stream)?;
    Ok((dataset.subset(&train), dataset.subset(&test)))
}

/// Gaussian blobs around distinct class centers in `[0, 1]^dim`.
///
/// Class `c` is centered on `0.5 + 0.5 * u_c`, where the unit-scale pattern
/// `u_c` alternates `cos θ_c, -sin θ_c, -cos θ_c, sin θ_c, ...` with
/// `θ_c = 2πc / C`. For `dim >= 2` every class gets its own center. Labels
/// cycle `0, 1, .., C-1, 0, ..`, so classes are exactly balanced.
pub fn synth_blobs(
    num_classes: usize,
    per_class: usize,
    dim: usize,
    spread: f64,
    stream: &mut RngStream,
) -> Result<Dataset, DataError> {
    if num_classes < 2 || per_class == 0 || dim == 0 || !(spread >= 0.0) {
        return Err(DataError::InvalidArgument(
            "blobs need >= 2 classes, >= 1 sample per class, dim >= 1 and spread >= 0".into(),
        ));
    }
    let centers: Vec<Vec<f64>> = (0..num_classes)
        .map(|c| {
            let theta = core::f64::consts::TAU * c as f64 / num_classes as f64;
            let (s, co) = (libm::sin(theta), libm::cos(theta));
            (0..dim)
                .map(|j| {
                    let u = match j % 4 {
                        0 => co,
                        1 => -s,
                        2 => -co,
                        _ => s,
                    };
                    0.5 + 0.5 * u
                })
                .collect()
        })
        .collect();
    let n = num_classes * per_class;
    let mut features = Vec::with_capacity(n * dim);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let c = i % num_classes;
        labels.push(c as u8);
        for &center in &centers[c] {
            features.push(center + stream.gaussian(spread));
        }
    }
    Dataset::new(
        "blobs",
        SampleShape::flat(dim),
        num_classes,
        features,
        labels,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::{NOISE, SPLIT};
    use alloc::vec;

    fn tiny(n: usize) -> Dataset {
        let features = (0..n * 2).map(|v| v as f64).collect();
        let labels = (0..n).map(|i| (i % 3) as u8).collect();
        Dataset::new("tiny", SampleShape::flat(2), 3, features, labels).unwrap()
    }

    #[test]
    fn rejects_bad_labels_and_counts() {
        let err = Dataset::new("x", SampleShape::flat(1), 2, vec![0.0, 1.0], vec![0, 2]);
        assert_eq!(err, Err(DataError::LabelOutOfRange { value: 2 }));
        let err = Dataset::new("x", SampleShape::flat(2), 2, vec![0.0; 3], vec![0, 1]);
        assert!(matches!(err, Err(DataError::CountMismatch { .. })));
    }

    #[test]
    fn split_ten_at_ninety_percent() {
        let d = tiny(10);
        let (train, test) = split_indices(10, 0.9, &mut RngStream::derive(1, SPLIT)).unwrap();
        assert_eq!((train.len(), test.len()), (9, 1));
        let mut all = [train.clone(), test.clone()].concat();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        let (a, b) = split(&d, 0.9, &mut RngStream::derive(1, SPLIT)).unwrap();
        assert_eq!(a, d.subset(&train));
        assert_eq!(b, d.subset(&test));
        assert_eq!(a.num_classes(), 3);
    }

    #[test]
    fn split_sixty_thousand() {
        let (train, test) = split_indices(60_000, 0.9, &mut RngStream::derive(2, SPLIT)).unwrap();
        assert_eq!((train.len(), test.len()), (54_000, 6_000));
    }

    #[test]
    fn split_is_deterministic_and_validated() {
        let a = split_indices(100, 0.7, &mut RngStream::derive(3, SPLIT)).unwrap();
        let b = split_indices(100, 0.7, &mut RngStream::derive(3, SPLIT)).unwrap();
        assert_eq!(a, b);
        let mut s = RngStream::derive(3, SPLIT);
        assert_eq!(split_indices(0, 0.5, &mut s), Err(DataError::EmptyDataset));
        assert!(split_indices(10, 1.0, &mut s).is_err());
        assert!(split_indices(10, 0.0, &mut s).is_err());
    }

    #[test]
    fn complementary_fractions_have_complementary_sizes() {
        // Train under f and test under 1 - f are the same size whenever the
        // floors add up to n.
        for (n, f) in [(10usize, 0.3), (60_000, 0.9), (7, 0.5)] {
            let (tr, te) = split_indices(n, f, &mut RngStream::derive(4, SPLIT)).unwrap();
            let (tr2, te2) = split_indices(n, 1.0 - f, &mut RngStream::derive(4, SPLIT)).unwrap();
            assert_eq!(tr.len() + te.len(), n);
            assert_eq!(tr2.len() + te2.len(), n);
            if crate::floor_count(n as f64 * f) + crate::floor_count(n as f64 * (1.0 - f)) == n {
                assert_eq!(tr.len(), te2.len());
            }
        }
    }

    #[test]
    fn blobs_without_spread_are_constant_per_class() {
        let d = synth_blobs(2, 50, 4, 0.0, &mut RngStream::derive(1, NOISE)).unwrap();
        assert_eq!(d.len(), 100);
        for i in 0..d.len() {
            assert_eq!(d.row(i), d.row(i % 2));
        }
        assert_ne!(d.row(0), d.row(1));
    }

    #[test]
    fn blobs_are_balanced() {
        let d = synth_blobs(10, 10, 8, 0.05, &mut RngStream::derive(1, NOISE)).unwrap();
        assert_eq!(d.len(), 100);
        assert_eq!(d.class_counts(), vec![10; 10]);
        // All centers distinct.
        let zero = synth_blobs(10, 1, 8, 0.0, &mut RngStream::derive(1, NOISE)).unwrap();
        for a in 0..10 {
            for b in a + 1..10 {
                assert_ne!(zero.row(a), zero.row(b));
            }
        }
    }

    #[test]
    fn commitment_tracks_content() {
        let d = tiny(5);
        assert_eq!(d.commitment(), d.clone().with_name("other").commitment());
        let mut f = d.features().to_vec();
        f[3] += 1e-12;
        assert_ne!(d.commitment(), d.with_features(f).commitment());
    }
}
