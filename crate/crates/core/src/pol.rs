//! Proof-of-learning: the prover logs periodic checkpoints and commits to
//! its (obfuscated) training set; a verifier replays chosen segments of
//! gradient descent and accepts iff every replayed segment lands within an
//! F-norm threshold of the logged checkpoint.
//!
//! Transcript container (little-endian):
//!
//! ```text
//! "OBPT"  u32 version  [32] arch fingerprint  str arch description
//! u64 epochs  f64 lr  u64 batch  u8 optimizer (0 sgd, 1 adam [f64 b1, b2, eps])
//! u64 seed  u64 interval k  [32] dataset commitment  u32 checkpoint count
//! per checkpoint: u64 step, weight checkpoint container, optimizer state
//! ```

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use thiserror::Error;

use crate::dataset::Dataset;
use crate::digest::Digest;
use crate::metrics::fnorm;
use crate::nn::checkpoint::{read_state, read_weights, write_state, write_weights};
use crate::nn::{
    train, Checkpoint, ModelArch, ModelWeights, NnError, Optimizer, Schedule, TrainConfig, Trainer,
};
use crate::wire::{put_f64, put_str, put_u32, put_u64, Reader};

pub const MAGIC: &[u8; 4] = b"OBPT";
pub const VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum PolError {
    #[error("CommitmentMismatch: dataset digest {found} does not match committed {expected}")]
    CommitmentMismatch { expected: Digest, found: Digest },
    #[error("SegmentOutOfRange: segment {segment} requested, transcript has {available}")]
    SegmentOutOfRange { segment: usize, available: usize },
    #[error("ArchMismatch: checkpoint architecture differs from the transcript's")]
    ArchMismatch,
    #[error("ShapeError: {0}")]
    ShapeError(String),
    #[error("InvalidArgument: {0}")]
    InvalidArgument(String),
    #[error("FormatError: {0}")]
    FormatError(String),
    #[error(transparent)]
    Train(#[from] NnError),
}

/// Everything the prover publishes.
#[derive(Debug, Clone, PartialEq)]
pub struct PolTranscript {
    pub arch: ModelArch,
    pub config: TrainConfig,
    /// Steps between checkpoints.
    pub interval: u64,
    pub commitment: Digest,
    /// Step 0 first; every entry carries optimizer state.
    pub checkpoints: Vec<Checkpoint>,
}

impl PolTranscript {
    /// Number of replayable segments (`checkpoints - 1`).
    pub fn segments(&self) -> usize {
        self.checkpoints.len().saturating_sub(1)
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        put_u32(&mut out, VERSION);
        out.extend_from_slice(self.arch.fingerprint().as_bytes());
        put_str(&mut out, &self.arch.describe());
        let c = &self.config;
        put_u64(&mut out, c.epochs as u64);
        put_f64(&mut out, c.learning_rate);
        put_u64(&mut out, c.batch_size as u64);
        match c.optimizer {
            Optimizer::Sgd => out.push(0),
            Optimizer::Adam {
                beta1,
                beta2,
                epsilon,
            } => {
                out.push(1);
                put_f64(&mut out, beta1);
                put_f64(&mut out, beta2);
                put_f64(&mut out, epsilon);
            }
        }
        put_u64(&mut out, c.seed);
        put_u64(&mut out, self.interval);
        out.extend_from_slice(self.commitment.as_bytes());
        put_u32(&mut out, self.checkpoints.len() as u32);
        for ck in &self.checkpoints {
            put_u64(&mut out, ck.step);
            write_weights(&mut out, &ck.weights);
            write_state(
                &mut out,
                ck.optimizer
                    .as_ref()
                    .expect("transcript checkpoints carry state"),
            );
        }
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Self, PolError> {
        let malformed = |_| PolError::FormatError("truncated or malformed transcript".into());
        let mut r = Reader::new(bytes);
        if r.take(4).map_err(malformed)? != MAGIC {
            return Err(PolError::FormatError("not a transcript".into()));
        }
        let version = r.u32().map_err(malformed)?;
        if version != VERSION {
            return Err(PolError::FormatError(format!(
                "unsupported transcript version {version}"
            )));
        }
        let mut fp = [0u8; 32];
        fp.copy_from_slice(r.take(32).map_err(malformed)?);
        let arch = ModelArch::parse(&r.string().map_err(malformed)?)?;
        if arch.fingerprint() != Digest(fp) {
            return Err(PolError::ArchMismatch);
        }
        let epochs = r.u64().map_err(malformed)? as usize;
        let learning_rate = r.f64().map_err(malformed)?;
        let batch_size = r.u64().map_err(malformed)? as usize;
        let optimizer = match r.u8().map_err(malformed)? {
            0 => Optimizer::Sgd,
            1 => Optimizer::Adam {
                beta1: r.f64().map_err(malformed)?,
                beta2: r.f64().map_err(malformed)?,
                epsilon: r.f64().map_err(malformed)?,
            },
            t => return Err(PolError::FormatError(format!("unknown optimizer tag {t}"))),
        };
        let seed = r.u64().map_err(malformed)?;
        let interval = r.u64().map_err(malformed)?;
        let mut commitment = [0u8; 32];
        commitment.copy_from_slice(r.take(32).map_err(malformed)?);
        let count = r.u32().map_err(malformed)? as usize;
        let mut checkpoints = Vec::with_capacity(count.min(4096));
        for _ in 0..count {
            let step = r.u64().map_err(malformed)?;
            let weights = read_weights(&mut r)?;
            let state = read_state(&mut r)?;
            checkpoints.push(Checkpoint {
                step,
                weights,
                optimizer: Some(state),
            });
        }
        if !r.is_done() {
            return Err(PolError::FormatError(
                "trailing bytes after transcript".into(),
            ));
        }
        let config = TrainConfig {
            epochs,
            learning_rate,
            batch_size,
            optimizer,
            seed,
            checkpoint_every: interval as usize,
        };
        let transcript = Self {
            arch,
            config,
            interval,
            commitment: Digest(commitment),
            checkpoints,
        };
        transcript.check_structure()?;
        Ok(transcript)
    }

    /// Step indices strictly increasing from 0; all checkpoints on the
    /// transcript's architecture.
    pub fn check_structure(&self) -> Result<(), PolError> {
        let fp = self.arch.fingerprint();
        if self.checkpoints.first().map(|c| c.step) != Some(0) {
            return Err(PolError::FormatError(
                "first checkpoint must be step 0".into(),
            ));
        }
        if self.checkpoints.windows(2).any(|w| w[1].step <= w[0].step) {
            return Err(PolError::FormatError(
                "checkpoint steps must increase".into(),
            ));
        }
        for ck in &self.checkpoints {
            if ck.weights.fingerprint() != fp {
                return Err(PolError::ArchMismatch);
            }
            if ck.optimizer.is_none() {
                return Err(PolError::FormatError(
                    "checkpoint lacks optimizer state".into(),
                ));
            }
        }
        Ok(())
    }
}

/// Distance observed on one replayed segment.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SegmentDistance {
    pub segment: usize,
    pub from_step: u64,
    pub to_step: u64,
    pub distance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Verdict {
    pub accepted: bool,
    pub threshold: f64,
    pub segments: Vec<SegmentDistance>,
}

impl Verdict {
    pub fn max_distance(&self) -> f64 {
        self.segments.iter().map(|s| s.distance).fold(0.0, f64::max)
    }

    pub fn distances(&self) -> Vec<f64> {
        self.segments.iter().map(|s| s.distance).collect()
    }
}

/// Train with checkpoints every `interval` steps and publish the transcript.
pub fn prove(
    arch: &ModelArch,
    init: &ModelWeights,
    dataset: &Dataset,
    config: &TrainConfig,
    interval: usize,
) -> Result<(ModelWeights, PolTranscript), PolError> {
    if interval == 0 {
        return Err(PolError::InvalidArgument(
            "checkpoint interval must be at least 1".into(),
        ));
    }
    let config = TrainConfig {
        checkpoint_every: interval,
        ..config.clone()
    };
    let (last, trace) = train(arch, init, dataset, &config, None)?;
    let transcript = PolTranscript {
        arch: arch.clone(),
        config,
        interval: interval as u64,
        commitment: dataset.commitment(),
        checkpoints: trace.checkpoints,
    };
    Ok((last, transcript))
}

/// Re-run segment `segment` (checkpoint `segment` to `segment + 1`) on
/// `dataset`, with the batch schedule re-derived from the transcript seed.
pub fn replay_segment(
    transcript: &PolTranscript,
    dataset: &Dataset,
    segment: usize,
) -> Result<ModelWeights, PolError> {
    if segment >= transcript.segments() {
        return Err(PolError::SegmentOutOfRange {
            segment,
            available: transcript.segments(),
        });
    }
    let from = &transcript.checkpoints[segment];
    let to = &transcript.checkpoints[segment + 1];
    let state = from
        .optimizer
        .clone()
        .ok_or_else(|| PolError::FormatError("checkpoint lacks optimizer state".into()))?;
    if state.step != from.step {
        return Err(PolError::FormatError(
            "optimizer step disagrees with checkpoint step".into(),
        ));
    }
    let mut trainer = Trainer::resume(
        &transcript.arch,
        from.weights.clone(),
        state,
        &transcript.config,
    )
    .map_err(|e| match e {
        NnError::ShapeError(_) => PolError::ArchMismatch,
        other => other.into(),
    })?;
    trainer
        .engine()
        .check_dataset(dataset)
        .map_err(|e| PolError::ShapeError(format!("{e}")))?;
    if dataset.is_empty() {
        return Err(PolError::ShapeError("empty dataset".into()));
    }
    let mut schedule = Schedule::new(
        transcript.config.seed,
        dataset.len(),
        transcript.config.batch_size,
    );
    for step in from.step..to.step {
        trainer.step(dataset, schedule.batch(step))?;
    }
    Ok(trainer.into_weights())
}

fn replay(
    transcript: &PolTranscript,
    dataset: &Dataset,
    segments: &[usize],
    threshold: f64,
) -> Result<Verdict, PolError> {
    if !(threshold >= 0.0) {
        return Err(PolError::InvalidArgument("threshold must be >= 0".into()));
    }
    transcript.check_structure()?;
    if let Some(&bad) = segments.iter().find(|&&s| s >= transcript.segments()) {
        return Err(PolError::SegmentOutOfRange {
            segment: bad,
            available: transcript.segments(),
        });
    }
    let mut out = Vec::with_capacity(segments.len());
    for &segment in segments {
        let replayed = replay_segment(transcript, dataset, segment)?;
        let logged = &transcript.checkpoints[segment + 1];
        let distance = fnorm(&replayed, &logged.weights).map_err(|_| PolError::ArchMismatch)?;
        out.push(SegmentDistance {
            segment,
            from_step: transcript.checkpoints[segment].step,
            to_step: logged.step,
            distance,
        });
    }
    let accepted = out.iter().all(|s| s.distance <= threshold);
    Ok(Verdict {
        accepted,
        threshold,
        segments: out,
    })
}

/// Check the commitment, then replay `segments` and accept iff every
/// replayed distance is at most `threshold`.
pub fn verify(
    transcript: &PolTranscript,
    dataset: &Dataset,
    segments: &[usize],
    threshold: f64,
) -> Result<Verdict, PolError> {
    let found = dataset.commitment();
    if found != transcript.commitment {
        return Err(PolError::CommitmentMismatch {
            expected: transcript.commitment,
            found,
        });
    }
    replay(transcript, dataset, segments, threshold)
}

/// Replay every segment against `spoof` without checking the commitment:
/// a prover who committed to `spoof` but presents someone else's
/// checkpoints.
pub fn spoof_trial(
    transcript: &PolTranscript,
    spoof: &Dataset,
    threshold: f64,
) -> Result<Verdict, PolError> {
    let all: Vec<usize> = (0..transcript.segments()).collect();
    replay(transcript, spoof, &all, threshold)
}

/// All segment indices of `transcript`.
pub fn all_segments(transcript: &PolTranscript) -> Vec<usize> {
    (0..transcript.segments()).collect()
}
