//! Deterministic core for dataset obfuscation experiments.
//!
//! The crate is `no_std` (with `alloc`): everything here is pure computation
//! over in-memory buffers. File access, the experiment harness and the
//! command line live in the `obfusc` crate.
//!
//! * [`rng`] and [`digest`]: seeded streams and SHA-256 commitments.
//! * [`dataset`], [`idx`], [`cifar`]: samples, splits and byte codecs.
//! * [`sampler`]: `S-X-Y-Z` label-skew / quantity-skew draws.
//! * [`obfuscation`]: additive Gaussian noise and the averaging attack.
//! * [`nn`]: a small bit-reproducible training engine.
//! * [`metrics`]: F-norm distance, distinguishability and PUD reports.
//! * [`pol`]: proof-of-learning transcripts, replay verification and spoofing.
#![no_std]

extern crate alloc;

pub mod cifar;
pub mod dataset;
pub mod digest;
pub mod idx;
pub mod metrics;
pub mod nn;
pub mod obfuscation;
pub mod pol;
pub mod rng;
pub mod sampler;
mod wire;

pub use dataset::{DataError, Dataset, SampleShape};
pub use digest::Digest;
pub use rng::RngStream;

/// `floor(x)` as a count, snapping values within 1e-9 (relative) of an
/// integer onto it so that products like `0.29 * 100` floor to 29.
pub fn floor_count(x: f64) -> usize {
    if !(x > 0.0) {
        return 0;
    }
    let r = libm::round(x);
    let snapped = if libm::fabs(x - r) <= 1e-9 * r.max(1.0) {
        r
    } else {
        libm::floor(x)
    };
    snapped as usize
}
