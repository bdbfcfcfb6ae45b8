use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::weights::ModelWeights;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Optimizer {
    Sgd,
    Adam {
        beta1: f64,
        beta2: f64,
        epsilon: f64,
    },
}

impl Optimizer {
    /// Adam(0.9, 0.999, 1e-8).
    pub const fn adam() -> Self {
        Optimizer::Adam {
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
        }
    }
}

impl Default for Optimizer {
    fn default() -> Self {
        Self::adam()
    }
}

/// Everything besides the weights that the next update depends on.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct OptimizerState {
    /// Updates applied so far.
    pub step: u64,
    /// Adam first moments, one buffer per tensor (empty for SGD).
    pub first: Vec<Vec<f64>>,
    /// Adam second moments.
    pub second: Vec<Vec<f64>>,
}

impl OptimizerState {
    pub fn new(optimizer: &Optimizer, weights: &ModelWeights) -> Self {
        let zeros = || {
            weights
                .tensors()
                .iter()
                .map(|t| alloc::vec![0.0; t.data.len()])
                .collect()
        };
        match optimizer {
            Optimizer::Sgd => Self::default(),
            Optimizer::Adam { .. } => Self {
                step: 0,
                first: zeros(),
                second: zeros(),
            },
        }
    }

    pub fn matches(&self, optimizer: &Optimizer, weights: &ModelWeights) -> bool {
        let sized = |m: &[Vec<f64>]| {
            m.len() == weights.tensors().len()
                && m.iter()
                    .zip(weights.tensors())
                    .all(|(a, t)| a.len() == t.data.len())
        };
        match optimizer {
            Optimizer::Sgd => self.first.is_empty() && self.second.is_empty(),
            Optimizer::Adam { .. } => sized(&self.first) && sized(&self.second),
        }
    }
}

/// Apply one update in place.
pub fn apply(
    optimizer: &Optimizer,
    learning_rate: f64,
    state: &mut OptimizerState,
    weights: &mut ModelWeights,
    grads: &ModelWeights,
) {
    state.step += 1;
    match *optimizer {
        Optimizer::Sgd => {
            for (w, g) in weights.tensors_mut().iter_mut().zip(grads.tensors()) {
                for (wv, gv) in w.data.iter_mut().zip(&g.data) {
                    *wv -= learning_rate * gv;
                }
            }
        }
        Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } => {
            let t = state.step as f64;
            let c1 = 1.0 - libm::pow(beta1, t);
            let c2 = 1.0 - libm::pow(beta2, t);
            let tensors = weights.tensors_mut().iter_mut().zip(grads.tensors());
            for (k, (w, g)) in tensors.enumerate() {
                let m = &mut state.first[k];
                let v = &mut state.second[k];
                for i in 0..w.data.len() {
                    let gv = g.data[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * gv;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * gv * gv;
                    let m_hat = m[i] / c1;
                    let v_hat = v[i] / c2;
                    w.data[i] -= learning_rate * m_hat / (libm::sqrt(v_hat) + epsilon);
                }
            }
        }
    }
}
