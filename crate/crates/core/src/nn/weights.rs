use alloc::string::String;
use alloc::vec::Vec;

use super::arch::ModelArch;
use crate::digest::Digest;
use crate::rng::{RngStream, INIT};

/// One named parameter tensor, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub data: Vec<f64>,
}

/// Model parameters `W`: tensors in the order fixed by the architecture.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    fingerprint: Digest,
    tensors: Vec<Tensor>,
}

impl ModelWeights {
    /// Build from parts. Callers are expected to keep names and shapes
    /// consistent with the fingerprinted architecture.
    pub fn from_parts(fingerprint: Digest, tensors: Vec<Tensor>) -> Self {
        Self {
            fingerprint,
            tensors,
        }
    }

    pub fn zeros(arch: &ModelArch) -> Self {
        let tensors = arch
            .param_layout()
            .into_iter()
            .map(|(name, shape)| {
                let len = shape.iter().product();
                Tensor {
                    name,
                    shape,
                    data: alloc::vec![0.0; len],
                }
            })
            .collect();
        Self {
            fingerprint: arch.fingerprint(),
            tensors,
        }
    }

    pub fn fingerprint(&self) -> Digest {
        self.fingerprint
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor] {
        &mut self.tensors
    }

    pub fn into_tensors(self) -> Vec<Tensor> {
        self.tensors
    }

    /// Total number of scalar parameters.
    pub fn len(&self) -> usize {
        self.tensors.iter().map(|t| t.data.len()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Every scalar, tensor by tensor.
    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.tensors.iter().flat_map(|t| t.data.iter().copied())
    }

    /// Same fingerprint, tensor names and shapes.
    pub fn same_layout(&self, other: &Self) -> bool {
        self.fingerprint == other.fingerprint
            && self.tensors.len() == other.tensors.len()
            && self.tensors.iter().zip(&other.tensors).all(|(a, b)| {
                a.name == b.name && a.shape == b.shape && a.data.len() == b.data.len()
            })
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(f64::is_finite)
    }

    pub fn fill(&mut self, value: f64) {
        for t in &mut self.tensors {
            t.data.fill(value);
        }
    }

    /// Every entry multiplied by `a`.
    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for t in &mut out.tensors {
            for v in &mut t.data {
                *v *= a;
            }
        }
        out
    }

    /// Add `delta` to the scalar at flat position `index`.
    pub fn perturb(&mut self, mut index: usize, delta: f64) {
        for t in &mut self.tensors {
            if index < t.data.len() {
                t.data[index] += delta;
                return;
            }
            index -= t.data.len();
        }
        panic!("parameter index out of range");
    }
}

/// Kaiming-uniform initialisation: weights uniform in `±sqrt(6 / fan_in)`
/// from the `init` stream of `seed`, biases zero.
pub fn init_model(arch: &ModelArch, seed: u64) -> ModelWeights {
    let mut stream = RngStream::derive(seed, INIT);
    let mut weights = ModelWeights::zeros(arch);
    let mut slot = 0;
    for layer in arch.layers() {
        if layer.params().is_none() {
            continue;
        }
        let bound = libm::sqrt(6.0 / layer.fan_in() as f64);
        for v in &mut weights.tensors[slot].data {
            *v = bound * (2.0 * stream.next_f64() - 1.0);
        }
        slot += 2;
    }
    weights
}
