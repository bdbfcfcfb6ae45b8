//! A small deterministic training engine: dense, 2-D convolution, max-pool,
//! ReLU and a softmax cross-entropy head, trained with SGD or Adam.

use alloc::boxed::Box;
use alloc::string::String;

use thiserror::Error;

pub mod arch;
pub mod checkpoint;
pub mod engine;
pub mod optim;
pub mod train;
pub mod weights;

pub use arch::{Layer, ModelArch, Padding, PRESETS};
pub use engine::Engine;
pub use optim::{Optimizer, OptimizerState};
pub use train::{
    evaluate, loss_and_grads, train, Checkpoint, EpochRecord, EpochTrace, Schedule, TrainConfig,
    Trainer,
};
pub use weights::{init_model, ModelWeights, Tensor};

#[derive(Debug, Error)]
pub enum NnError {
    #[error("ShapeError: {0}")]
    ShapeError(String),
    /// Training diverged; `trace` holds everything recorded before `step`.
    #[error("NonFiniteLoss: training diverged at step {step}")]
    NonFiniteLoss { step: u64, trace: Box<EpochTrace> },
    #[error("InvalidConfig: {0}")]
    InvalidConfig(String),
    #[error("FormatError: {0}")]
    FormatError(String),
}
