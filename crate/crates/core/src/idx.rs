//! IDX container codec (the MNIST on-disk format).
//!
//! A file is a big-endian magic `0x0000TTNN` (type code `TT`, `NN`
//! dimensions), `NN` big-endian `u32` dimension sizes, then the raw payload.
//! Image files carry `n x h x w` (single channel) or `n x c x h x w`.
//! Unsigned-byte pixels are normalized by 255; float payloads (`0x0D` f32,
//! `0x0E` f64, both big-endian) are taken as-is.

use alloc::vec::Vec;

use crate::dataset::{DataError, Dataset, SampleShape};

pub const TYPE_U8: u8 = 0x08;
pub const TYPE_F32: u8 = 0x0D;
pub const TYPE_F64: u8 = 0x0E;

/// Magic of an unsigned-byte, three-dimensional image file.
pub const IMAGES_U8_MAGIC: u32 = 0x0000_0803;
/// Magic of a label file.
pub const LABELS_MAGIC: u32 = 0x0000_0801;

/// Decoded image payload.
#[derive(Debug, Clone, PartialEq)]
pub struct Images {
    pub count: usize,
    pub shape: SampleShape,
    pub values: Vec<f64>,
}

fn be_u32(bytes: &[u8], at: usize) -> Result<u32, DataError> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes(b.try_into().unwrap()))
        .ok_or(DataError::TruncatedFile)
}

pub fn decode_images(bytes: &[u8]) -> Result<Images, DataError> {
    let magic = be_u32(bytes, 0)?;
    let kind = ((magic >> 8) & 0xff) as u8;
    let ndims = (magic & 0xff) as usize;
    let known_type = matches!(kind, TYPE_U8 | TYPE_F32 | TYPE_F64);
    if magic >> 16 != 0 || !known_type || !(ndims == 3 || ndims == 4) {
        return Err(DataError::WrongMagic { found: magic });
    }
    let mut dims = [0usize; 4];
    for (k, d) in dims.iter_mut().take(ndims).enumerate() {
        *d = be_u32(bytes, 4 + 4 * k)? as usize;
    }
    let (count, shape) = if ndims == 3 {
        (dims[0], SampleShape::new(dims[1], dims[2], 1))
    } else {
        (dims[0], SampleShape::new(dims[2], dims[3], dims[1]))
    };
    let header = 4 + 4 * ndims;
    let total = count
        .checked_mul(shape.dim())
        .ok_or(DataError::TruncatedFile)?;
    let width = match kind {
        TYPE_U8 => 1,
        TYPE_F32 => 4,
        _ => 8,
    };
    let payload = bytes
        .get(header..header + total * width)
        .ok_or(DataError::TruncatedFile)?;
    let values = match kind {
        TYPE_U8 => payload.iter().map(|&b| f64::from(b) / 255.0).collect(),
        TYPE_F32 => payload
            .chunks_exact(4)
            .map(|c| f64::from(f32::from_be_bytes(c.try_into().unwrap())))
            .collect(),
        _ => payload
            .chunks_exact(8)
            .map(|c| f64::from_be_bytes(c.try_into().unwrap()))
            .collect(),
    };
    Ok(Images {
        count,
        shape,
        values,
    })
}

pub fn decode_labels(bytes: &[u8]) -> Result<Vec<u8>, DataError> {
    let magic = be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(DataError::WrongMagic { found: magic });
    }
    let count = be_u32(bytes, 4)? as usize;
    bytes
        .get(8..8 + count)
        .map(<[u8]>::to_vec)
        .ok_or(DataError::TruncatedFile)
}

/// Build a dataset from an image/label file pair.
pub fn decode_dataset(
    name: &str,
    image_bytes: &[u8],
    label_bytes: &[u8],
    num_classes: usize,
) -> Result<Dataset, DataError> {
    let images = decode_images(image_bytes)?;
    let labels = decode_labels(label_bytes)?;
    if images.count != labels.len() {
        return Err(DataError::CountMismatch {
            images: images.count,
            labels: labels.len(),
        });
    }
    Dataset::new(name, images.shape, num_classes, images.values, labels)
}

/// Byte value `k` if `v` is exactly `k / 255`.
fn as_byte(v: f64) -> Option<u8> {
    let k = libm::round(v * 255.0);
    if (0.0..=255.0).contains(&k) && k / 255.0 == v {
        Some(k as u8)
    } else {
        None
    }
}

/// Encode features. Data that are exact multiples of 1/255 are written as
/// unsigned bytes (so raw MNIST re-encodes to the original bytes); anything
/// else, e.g. obfuscated features, is written as f64 to keep reloads exact.
pub fn encode_images(dataset: &Dataset) -> Vec<u8> {
    let bytes: Option<Vec<u8>> = dataset.features().iter().map(|&v| as_byte(v)).collect();
    let kind = if bytes.is_some() { TYPE_U8 } else { TYPE_F64 };
    encode_images_as(dataset, kind, bytes)
}

/// Encode features as big-endian f32 regardless of content. Lossy for f64
/// data; kept for interoperability with float IDX readers.
pub fn encode_images_f32(dataset: &Dataset) -> Vec<u8> {
    encode_images_as(dataset, TYPE_F32, None)
}

fn encode_images_as(dataset: &Dataset, kind: u8, bytes: Option<Vec<u8>>) -> Vec<u8> {
    let shape = dataset.shape();
    let dims: Vec<usize> = if shape.channels == 1 {
        alloc::vec![dataset.len(), shape.height, shape.width]
    } else {
        alloc::vec![dataset.len(), shape.channels, shape.height, shape.width]
    };
    let magic = (u32::from(kind) << 8) | dims.len() as u32;
    let mut out = Vec::with_capacity(4 + 4 * dims.len() + dataset.features().len() * 8);
    out.extend_from_slice(&magic.to_be_bytes());
    for d in dims {
        out.extend_from_slice(&(d as u32).to_be_bytes());
    }
    match (kind, bytes) {
        (TYPE_U8, Some(b)) => out.extend_from_slice(&b),
        (TYPE_F32, _) => {
            for &v in dataset.features() {
                out.extend_from_slice(&(v as f32).to_be_bytes());
            }
        }
        _ => {
            for &v in dataset.features() {
                out.extend_from_slice(&v.to_be_bytes());
            }
        }
    }
    out
}

pub fn encode_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn two_by_two() -> (Vec<u8>, Vec<u8>) {
        let mut img = vec![0, 0, 8, 3, 0, 0, 0, 2, 0, 0, 0, 2, 0, 0, 0, 2];
        img.extend_from_slice(&[0, 255, 128, 0, 10, 20, 30, 40]);
        let lbl = vec![0, 0, 8, 1, 0, 0, 0, 2, 3, 9];
        (img, lbl)
    }

    #[test]
    fn decodes_handcrafted_pair() {
        let (img, lbl) = two_by_two();
        let d = decode_dataset("hand", &img, &lbl, 10).unwrap();
        assert_eq!(d.len(), 2);
        assert_eq!(d.shape(), SampleShape::new(2, 2, 1));
        assert_eq!(d.row(0), &[0.0, 1.0, 128.0 / 255.0, 0.0]);
        assert_eq!(d.labels(), &[3, 9]);
    }

    #[test]
    fn label_magic_on_image_file_is_rejected() {
        let (mut img, _) = two_by_two();
        img[2] = 8;
        img[3] = 1;
        assert_eq!(
            decode_images(&img),
            Err(DataError::WrongMagic { found: 0x0000_0801 })
        );
    }

    #[test]
    fn truncation_and_count_mismatch() {
        let (img, lbl) = two_by_two();
        assert_eq!(
            decode_images(&img[..img.len() - 1]),
            Err(DataError::TruncatedFile)
        );
        let mut short = lbl.clone();
        short[7] = 1;
        short.pop();
        assert_eq!(
            decode_dataset("x", &img, &short, 10),
            Err(DataError::CountMismatch {
                images: 2,
                labels: 1
            })
        );
    }

    #[test]
    fn byte_data_re_encodes_to_original_bytes() {
        let (img, lbl) = two_by_two();
        let d = decode_dataset("hand", &img, &lbl, 10).unwrap();
        assert_eq!(encode_images(&d), img);
        assert_eq!(encode_labels(d.labels()), lbl);
    }

    #[test]
    fn float_data_round_trip_exactly() {
        let mut features = vec![0.1, -0.25, 1.5, 0.3333333333333333, 2.0e-9, 0.0];
        features.extend([0.5; 6]);
        let d = Dataset::new("f", SampleShape::new(1, 3, 2), 4, features, vec![1, 3]).unwrap();
        let bytes = encode_images(&d);
        assert_eq!(bytes[2], TYPE_F64);
        assert_eq!(bytes[3], 4);
        let back = decode_dataset("f", &bytes, &encode_labels(d.labels()), 4).unwrap();
        assert_eq!(back, d);
    }

    #[test]
    fn f32_container_decodes() {
        let d = Dataset::new("f", SampleShape::flat(2), 2, vec![0.5, 0.25], vec![1]).unwrap();
        let back = decode_images(&encode_images_f32(&d)).unwrap();
        assert_eq!(back.values, vec![0.5, 0.25]);
    }
}
