//! File access: IDX and CIFAR-10 datasets, weight checkpoints and PoL
//! transcripts. Paths ending in `.gz` are read and written through gzip.
//!
//! A dataset on the command line is named by a path stem. `<stem>.bin` (or
//! a stem that is itself an existing `.bin` file) is a CIFAR-10 batch;
//! otherwise the loader looks for the MNIST naming
//! `<stem>-images-idx3-ubyte[.gz]` / `<stem>-labels-idx1-ubyte[.gz]` and
//! then `<stem>-images.idx[.gz]` / `<stem>-labels.idx[.gz]`, which is also
//! what [`write_dataset`] produces.

use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use flate2::read::GzDecoder;
use flate2::write::GzEncoder;
use flate2::Compression;
use obfusc_core::nn::checkpoint::{decode_weights, encode_weights};
use obfusc_core::nn::{ModelWeights, NnError};
use obfusc_core::pol::{PolError, PolTranscript};
use obfusc_core::{cifar, idx, DataError, Dataset};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum IoError {
    #[error("IoError: {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("IoError: no dataset files found for stem {0}")]
    MissingDataset(PathBuf),
    #[error("{0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Nn(#[from] NnError),
    #[error("{0}")]
    Pol(#[from] PolError),
}

impl IoError {
    fn at(path: &Path) -> impl FnOnce(std::io::Error) -> Self + '_ {
        move |source| IoError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

fn is_gz(path: &Path) -> bool {
    path.extension().is_some_and(|e| e == "gz")
}

/// Whole-file read, transparently gunzipping gzip content.
pub fn read_bytes(path: &Path) -> Result<Vec<u8>, IoError> {
    let raw = fs::read(path).map_err(IoError::at(path))?;
    if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(IoError::at(path))?;
        Ok(out)
    } else {
        Ok(raw)
    }
}

/// Whole-file write, gzipped (with a zero timestamp) when the path ends in
/// `.gz`. Parent directories are created.
pub fn write_bytes(path: &Path, bytes: &[u8]) -> Result<(), IoError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(IoError::at(dir))?;
    }
    let data = if is_gz(path) {
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(bytes).map_err(IoError::at(path))?;
        enc.finish().map_err(IoError::at(path))?
    } else {
        bytes.to_vec()
    };
    fs::write(path, data).map_err(IoError::at(path))
}

pub fn load_idx(images: &Path, labels: &Path, num_classes: usize) -> Result<Dataset, IoError> {
    let name = images.display().to_string();
    Ok(idx::decode_dataset(
        &name,
        &read_bytes(images)?,
        &read_bytes(labels)?,
        num_classes,
    )?)
}

pub fn write_idx(dataset: &Dataset, images: &Path, labels: &Path) -> Result<(), IoError> {
    write_bytes(images, &idx::encode_images(dataset))?;
    write_bytes(labels, &idx::encode_labels(dataset.labels()))
}

pub fn load_cifar10(batches: &[PathBuf]) -> Result<Dataset, IoError> {
    let mut loaded = Vec::with_capacity(batches.len());
    for p in batches {
        loaded.push((p.display().to_string(), read_bytes(p)?));
    }
    let name = batches
        .first()
        .map(|p| p.display().to_string())
        .unwrap_or_default();
    Ok(cifar::decode_batches(
        &name,
        loaded.iter().map(|(n, b)| (n.as_str(), b.as_slice())),
    )?)
}

fn with_suffix(stem: &Path, suffix: &str) -> PathBuf {
    let mut s = stem.as_os_str().to_owned();
    s.push(suffix);
    PathBuf::from(s)
}

/// The `(images, labels)` pair [`write_dataset`] uses for `stem`.
pub fn idx_paths(stem: &Path) -> (PathBuf, PathBuf) {
    (
        with_suffix(stem, "-images.idx"),
        with_suffix(stem, "-labels.idx"),
    )
}

fn find_pair(stem: &Path) -> Option<(PathBuf, PathBuf)> {
    let namings = [
        ("-images-idx3-ubyte", "-labels-idx1-ubyte"),
        ("-images.idx", "-labels.idx"),
    ];
    for (img, lbl) in namings {
        for ext in ["", ".gz"] {
            let i = with_suffix(stem, &format!("{img}{ext}"));
            let l = with_suffix(stem, &format!("{lbl}{ext}"));
            if i.is_file() && l.is_file() {
                return Some((i, l));
            }
        }
    }
    None
}

/// Load the dataset named by `stem` (see the module docs for the lookup).
pub fn load_dataset(stem: &Path, num_classes: usize) -> Result<Dataset, IoError> {
    if stem.extension().is_some_and(|e| e == "bin") && stem.is_file() {
        return load_cifar10(&[stem.to_path_buf()]);
    }
    let bin = with_suffix(stem, ".bin");
    if bin.is_file() {
        return load_cifar10(&[bin]);
    }
    let (images, labels) =
        find_pair(stem).ok_or_else(|| IoError::MissingDataset(stem.to_path_buf()))?;
    let data = load_idx(&images, &labels, num_classes)?;
    Ok(data.with_name(stem.display().to_string()))
}

/// Write `<stem>-images.idx` and `<stem>-labels.idx`.
pub fn write_dataset(dataset: &Dataset, stem: &Path) -> Result<(), IoError> {
    let (images, labels) = idx_paths(stem);
    write_idx(dataset, &images, &labels)
}

pub fn read_weights(path: &Path) -> Result<ModelWeights, IoError> {
    Ok(decode_weights(&read_bytes(path)?)?)
}

pub fn write_weights(weights: &ModelWeights, path: &Path) -> Result<(), IoError> {
    write_bytes(path, &encode_weights(weights))
}

pub fn read_transcript(path: &Path) -> Result<PolTranscript, IoError> {
    Ok(PolTranscript::decode(&read_bytes(path)?)?)
}

pub fn write_transcript(transcript: &PolTranscript, path: &Path) -> Result<(), IoError> {
    write_bytes(path, &transcript.encode())
}
