//! File formats, the experiment harness and the command line around
//! [`obfusc_core`].
//!
//! * [`io`]: IDX / CIFAR-10 datasets, checkpoints and transcripts on disk.
//! * [`harness`]: desk-scale experiment configs, presets and runners.
//! * [`table`]: result tables, CSV and JSON sidecar output.
//! * [`stats`]: medians and rank correlation for reading results.
//! * [`cli`]: the `obfusc` binary.

pub mod cli;
pub mod harness;
pub mod io;
pub mod stats;
pub mod table;

pub use obfusc_core as core;
