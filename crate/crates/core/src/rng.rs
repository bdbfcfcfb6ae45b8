//! Seeded random streams.
//!
//! Every random decision in the crate flows through an [`RngStream`] derived
//! from a 64-bit seed and a short domain tag, so that noise, initialisation,
//! shuffling, sampling and splitting never share a sequence.

use alloc::string::String;
use alloc::vec::Vec;

/// Tag for weight initialisation streams.
pub const INIT: &str = "init";
/// Tag for obfuscation noise streams.
pub const NOISE: &str = "noise";
/// Tag for per-epoch batch shuffling.
pub const SHUFFLE: &str = "shuffle";
/// Tag for label choice and subset sampling.
pub const SAMPLE: &str = "sample";
/// Tag for train/test splitting.
pub const SPLIT: &str = "split";

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

/// splitmix64 output function.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(GOLDEN);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

fn fnv1a64(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= u64::from(b);
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    h
}

/// A xoshiro256** generator bound to one purpose.
///
/// Streams are single-owner; concurrent work derives its own stream.
#[derive(Debug, Clone, PartialEq)]
pub struct RngStream {
    state: [u64; 4],
    spare: Option<f64>,
    tag: String,
}

impl RngStream {
    /// Derive the stream for `(seed, tag)`.
    ///
    /// # Panics
    /// If `tag` is empty or not ASCII.
    pub fn derive(seed: u64, tag: &str) -> Self {
        Self::derive_indexed(seed, tag, 0)
    }

    /// Derive a sub-stream, e.g. one shuffle stream per epoch. Index 0 is the
    /// same stream as [`RngStream::derive`].
    pub fn derive_indexed(seed: u64, tag: &str, index: u64) -> Self {
        assert!(
            !tag.is_empty() && tag.is_ascii(),
            "domain tag must be nonempty ASCII"
        );
        let mut x = splitmix64(seed ^ splitmix64(fnv1a64(tag.as_bytes())));
        if index != 0 {
            x = splitmix64(x ^ splitmix64(index.wrapping_mul(GOLDEN)));
        }
        let mut state = [0u64; 4];
        for word in &mut state {
            x = x.wrapping_add(GOLDEN);
            *word = splitmix64(x);
        }
        if state == [0; 4] {
            state[0] = GOLDEN;
        }
        Self {
            state,
            spare: None,
            tag: String::from(tag),
        }
    }

    pub fn tag(&self) -> &str {
        &self.tag
    }

    #[inline]
    pub fn next_u64(&mut self) -> u64 {
        let s = &mut self.state;
        let result = s[1].wrapping_mul(5).rotate_left(7).wrapping_mul(9);
        let t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = s[3].rotate_left(45);
        result
    }

    /// Uniform draw in `[0, 1)` with 53 bits of precision.
    #[inline]
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Unbiased uniform integer in `[0, bound)`. `bound` must be positive.
    pub fn below(&mut self, bound: u64) -> u64 {
        assert!(bound > 0, "empty range");
        // Reject the top partial block so every residue is equally likely.
        let zone = u64::MAX - (u64::MAX - bound + 1) % bound;
        loop {
            let v = self.next_u64();
            if v <= zone {
                return v % bound;
            }
        }
    }

    /// One draw from N(0, sigma^2) via Box-Muller. Pairs are generated two
    /// uniforms at a time and the second variate is kept for the next call.
    /// `sigma == 0` returns `0.0` and leaves the stream untouched.
    pub fn gaussian(&mut self, sigma: f64) -> f64 {
        debug_assert!(sigma >= 0.0);
        if sigma == 0.0 {
            return 0.0;
        }
        if let Some(z) = self.spare.take() {
            return sigma * z;
        }
        // 1 - u lies in (0, 1], so the log is finite.
        let u1 = 1.0 - self.next_f64();
        let u2 = self.next_f64();
        let r = libm::sqrt(-2.0 * libm::log(u1));
        let theta = core::f64::consts::TAU * u2;
        self.spare = Some(r * libm::sin(theta));
        sigma * r * libm::cos(theta)
    }

    /// Fisher-Yates shuffle of `0..n`.
    pub fn permutation(&mut self, n: usize) -> Vec<usize> {
        let mut out: Vec<usize> = (0..n).collect();
        self.shuffle(&mut out);
        out
    }

    pub fn shuffle<T>(&mut self, items: &mut [T]) {
        for i in (1..items.len()).rev() {
            let j = self.below(i as u64 + 1) as usize;
            items.swap(i, j);
        }
    }

    /// `k` distinct indices drawn uniformly from `0..n`, in draw order.
    pub fn choose(&mut self, n: usize, k: usize) -> Vec<usize> {
        assert!(k <= n, "cannot choose {k} of {n}");
        let mut pool: Vec<usize> = (0..n).collect();
        for i in 0..k {
            let j = i + self.below((n - i) as u64) as usize;
            pool.swap(i, j);
        }
        pool.truncate(k);
        pool
    }
}
