//! CIFAR-10 binary batches: 3073-byte records, one label byte followed by
//! 1024 red, 1024 green and 1024 blue bytes (row-major 32x32 planes).

use alloc::string::String;
use alloc::vec::Vec;

use crate::dataset::{DataError, Dataset, SampleShape};

pub const RECORD_LEN: usize = 3073;
pub const SHAPE: SampleShape = SampleShape::new(32, 32, 3);
pub const NUM_CLASSES: usize = 10;

/// Decode one batch file's bytes into `(features, labels)`. `file` is only
/// used in error messages.
pub fn decode_batch(file: &str, bytes: &[u8]) -> Result<(Vec<f64>, Vec<u8>), DataError> {
    if !bytes.len().is_multiple_of(RECORD_LEN) {
        return Err(DataError::BadRecordLength {
            file: String::from(file),
            len: bytes.len(),
        });
    }
    let n = bytes.len() / RECORD_LEN;
    let mut features = Vec::with_capacity(n * (RECORD_LEN - 1));
    let mut labels = Vec::with_capacity(n);
    for record in bytes.chunks_exact(RECORD_LEN) {
        let label = record[0];
        if usize::from(label) >= NUM_CLASSES {
            return Err(DataError::LabelOutOfRange {
                value: label.into(),
            });
        }
        labels.push(label);
        features.extend(record[1..].iter().map(|&b| f64::from(b) / 255.0));
    }
    Ok((features, labels))
}

/// Concatenate batches in argument order.
pub fn decode_batches<'a>(
    name: &str,
    batches: impl IntoIterator<Item = (&'a str, &'a [u8])>,
) -> Result<Dataset, DataError> {
    let mut features = Vec::new();
    let mut labels = Vec::new();
    for (file, bytes) in batches {
        let (f, l) = decode_batch(file, bytes)?;
        features.extend(f);
        labels.extend(l);
    }
    Dataset::new(name, SHAPE, NUM_CLASSES, features, labels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn single_record() {
        let mut rec = vec![7u8];
        rec.extend((0..3072).map(|i| (i % 256) as u8));
        let d = decode_batches("c", [("b1", rec.as_slice())]).unwrap();
        assert_eq!(d.len(), 1);
        assert_eq!(d.labels(), &[7]);
        assert_eq!(d.dim(), 3072);
        assert_eq!(d.row(0)[1], 1.0 / 255.0);
        // Green plane starts at offset 1024.
        assert_eq!(d.row(0)[1024], 0.0);
    }

    #[test]
    fn bad_length_and_label() {
        let short = vec![0u8; 3072];
        assert_eq!(
            decode_batch("f", &short),
            Err(DataError::BadRecordLength {
                file: "f".into(),
                len: 3072
            })
        );
        let mut rec = vec![0u8; RECORD_LEN];
        rec[0] = 10;
        assert_eq!(
            decode_batch("f", &rec),
            Err(DataError::LabelOutOfRange { value: 10 })
        );
    }

    #[test]
    fn batches_concatenate_in_order() {
        let mut a = vec![1u8; RECORD_LEN];
        a[0] = 1;
        let mut b = vec![2u8; RECORD_LEN * 2];
        b[0] = 2;
        b[RECORD_LEN] = 3;
        let d = decode_batches("c", [("a", a.as_slice()), ("b", b.as_slice())]).unwrap();
        assert_eq!(d.labels(), &[1, 2, 3]);
    }
}
