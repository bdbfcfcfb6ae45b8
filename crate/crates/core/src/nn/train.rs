//! `W = F(T)`: the training loop and its batch schedule.

use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::engine::Engine;
use super::optim::{apply, Optimizer, OptimizerState};
use super::weights::ModelWeights;
use super::{ModelArch, NnError};
use crate::dataset::Dataset;
use crate::rng::{RngStream, SHUFFLE};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub optimizer: Optimizer,
    /// Drives the per-epoch shuffles.
    pub seed: u64,
    /// Snapshot cadence in optimizer steps; 0 snapshots at epoch ends only.
    pub checkpoint_every: usize,
}

impl TrainConfig {
    pub fn new(epochs: usize, learning_rate: f64, batch_size: usize, seed: u64) -> Self {
        Self {
            epochs,
            learning_rate,
            batch_size,
            optimizer: Optimizer::adam(),
            seed,
            checkpoint_every: 0,
        }
    }

    pub fn validate(&self) -> Result<(), NnError> {
        if self.batch_size == 0 {
            return Err(NnError::InvalidConfig(
                "batch size must be at least 1".into(),
            ));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(NnError::InvalidConfig(
                "learning rate must be finite and >= 0".into(),
            ));
        }
        if let Optimizer::Adam {
            beta1,
            beta2,
            epsilon,
        } = self.optimizer
        {
            if !(0.0..1.0).contains(&beta1) || !(0.0..1.0).contains(&beta2) || !(epsilon > 0.0) {
                return Err(NnError::InvalidConfig(
                    "Adam needs betas in [0, 1) and epsilon > 0".into(),
                ));
            }
        }
        Ok(())
    }

    /// `ceil(n / batch_size)`: full batches plus a trailing partial one.
    pub fn steps_per_epoch(&self, n: usize) -> usize {
        n.div_ceil(self.batch_size)
    }
}

/// Batch order for every step, reproducible from `(seed, n, batch_size)`.
/// Epoch `e` visits rows in the order of the `e`-th shuffle sub-stream.
#[derive(Debug, Clone)]
pub struct Schedule {
    seed: u64,
    n: usize,
    batch_size: usize,
    cached: Option<(usize, Vec<usize>)>,
}

impl Schedule {
    pub fn new(seed: u64, n: usize, batch_size: usize) -> Self {
        Self {
            seed,
            n,
            batch_size,
            cached: None,
        }
    }

    pub fn steps_per_epoch(&self) -> usize {
        self.n.div_ceil(self.batch_size)
    }

    pub fn epoch_order(&self, epoch: usize) -> Vec<usize> {
        RngStream::derive_indexed(self.seed, SHUFFLE, epoch as u64).permutation(self.n)
    }

    /// Row indices of global step `step`.
    pub fn batch(&mut self, step: u64) -> &[usize] {
        let spe = self.steps_per_epoch() as u64;
        let epoch = (step / spe) as usize;
        let b = (step % spe) as usize;
        if self.cached.as_ref().map(|c| c.0) != Some(epoch) {
            self.cached = Some((epoch, self.epoch_order(epoch)));
        }
        let order = &self.cached.as_ref().unwrap().1;
        let start = b * self.batch_size;
        &order[start..(start + self.batch_size).min(self.n)]
    }
}

/// A weight snapshot after `step` optimizer updates.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub step: u64,
    pub weights: ModelWeights,
    /// Present for step-cadence snapshots, which can be resumed exactly.
    pub optimizer: Option<OptimizerState>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based: record `e` describes the model after `e` epochs.
    pub epoch: usize,
    /// Mean per-sample training loss over the epoch.
    pub train_loss: f64,
    pub eval_accuracy: Option<f64>,
    /// Index into [`EpochTrace::checkpoints`] of the epoch-end snapshot.
    pub checkpoint: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct EpochTrace {
    pub records: Vec<EpochRecord>,
    pub checkpoints: Vec<Checkpoint>,
}

impl EpochTrace {
    /// Epoch-end weights, in epoch order.
    pub fn epoch_weights(&self) -> impl Iterator<Item = &ModelWeights> + '_ {
        self.records
            .iter()
            .filter_map(|r| r.checkpoint.map(|c| &self.checkpoints[c].weights))
    }
}

/// Weights plus optimizer state, advanced one batch at a time.
#[derive(Debug, Clone)]
pub struct Trainer {
    engine: Engine,
    optimizer: Optimizer,
    learning_rate: f64,
    weights: ModelWeights,
    state: OptimizerState,
    grads: ModelWeights,
}

impl Trainer {
    pub fn new(
        arch: &ModelArch,
        init: ModelWeights,
        config: &TrainConfig,
    ) -> Result<Self, NnError> {
        let state = OptimizerState::new(&config.optimizer, &init);
        Self::resume(arch, init, state, config)
    }

    /// Continue from a snapshot taken mid-training.
    pub fn resume(
        arch: &ModelArch,
        weights: ModelWeights,
        state: OptimizerState,
        config: &TrainConfig,
    ) -> Result<Self, NnError> {
        config.validate()?;
        if weights.fingerprint() != arch.fingerprint()
            || !weights.same_layout(&ModelWeights::zeros(arch))
        {
            return Err(NnError::ShapeError(
                "weights do not match the architecture".into(),
            ));
        }
        if !state.matches(&config.optimizer, &weights) {
            return Err(NnError::ShapeError(
                "optimizer state does not match the weights".into(),
            ));
        }
        Ok(Self {
            engine: Engine::new(arch),
            optimizer: config.optimizer,
            learning_rate: config.learning_rate,
            grads: ModelWeights::zeros(arch),
            weights,
            state,
        })
    }

    pub fn weights(&self) -> &ModelWeights {
        &self.weights
    }

    pub fn state(&self) -> &OptimizerState {
        &self.state
    }

    pub fn step_count(&self) -> u64 {
        self.state.step
    }

    pub fn into_weights(self) -> ModelWeights {
        self.weights
    }

    pub fn engine(&mut self) -> &mut Engine {
        &mut self.engine
    }

    /// One optimizer update on the rows `batch`. Returns the batch's mean
    /// loss; a non-finite loss or update leaves the error to the caller.
    pub fn step(&mut self, data: &Dataset, batch: &[usize]) -> Result<f64, NnError> {
        self.grads.fill(0.0);
        let loss = self
            .engine
            .batch_into(&self.weights, data, batch, &mut self.grads)?;
        if !loss.is_finite() {
            return Err(NnError::NonFiniteLoss {
                step: self.state.step,
                trace: Default::default(),
            });
        }
        apply(
            &self.optimizer,
            self.learning_rate,
            &mut self.state,
            &mut self.weights,
            &self.grads,
        );
        if !self.weights.all_finite() {
            return Err(NnError::NonFiniteLoss {
                step: self.state.step - 1,
                trace: Default::default(),
            });
        }
        Ok(loss)
    }

    pub fn checkpoint(&self, with_state: bool) -> Checkpoint {
        Checkpoint {
            step: self.state.step,
            weights: self.weights.clone(),
            optimizer: with_state.then(|| self.state.clone()),
        }
    }
}

/// Train from `init` for `config.epochs` epochs.
///
/// The trace always starts with the step-0 snapshot. With
/// `checkpoint_every = k > 0`, snapshots (with optimizer state) follow every
/// `k` steps and at the final step; with `k = 0`, one per epoch end.
pub fn train(
    arch: &ModelArch,
    init: &ModelWeights,
    train_set: &Dataset,
    config: &TrainConfig,
    eval_set: Option<&Dataset>,
) -> Result<(ModelWeights, EpochTrace), NnError> {
    let mut trainer = Trainer::new(arch, init.clone(), config)?;
    trainer.engine.check_dataset(train_set)?;
    if let Some(e) = eval_set {
        trainer.engine.check_dataset(e)?;
    }
    if train_set.is_empty() {
        return Err(NnError::ShapeError("empty training set".into()));
    }
    let k = config.checkpoint_every as u64;
    let mut schedule = Schedule::new(config.seed, train_set.len(), config.batch_size);
    let spe = schedule.steps_per_epoch() as u64;
    let total = spe * config.epochs as u64;
    let mut trace = EpochTrace {
        records: Vec::with_capacity(config.epochs),
        checkpoints: alloc::vec![trainer.checkpoint(k > 0)],
    };
    for epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        for _ in 0..spe {
            let step = trainer.step_count();
            let batch = schedule.batch(step);
            let len = batch.len();
            let loss = match trainer.step(train_set, batch) {
                Ok(l) => l,
                Err(NnError::NonFiniteLoss { step, .. }) => {
                    return Err(NnError::NonFiniteLoss {
                        step,
                        trace: alloc::boxed::Box::new(trace),
                    })
                }
                Err(e) => return Err(e),
            };
            loss_sum += loss * len as f64;
            let done = trainer.step_count();
            if k > 0 && (done % k == 0 || done == total) {
                trace.checkpoints.push(trainer.checkpoint(true));
            }
        }
        if k == 0 {
            trace.checkpoints.push(trainer.checkpoint(false));
        }
        let done = trainer.step_count();
        let checkpoint = trace
            .checkpoints
            .iter()
            .rposition(|c| c.step == done)
            .filter(|_| done > 0);
        let eval_accuracy = match eval_set {
            Some(e) => Some(trainer.engine.accuracy(&trainer.weights, e)?),
            None => None,
        };
        trace.records.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: loss_sum / train_set.len() as f64,
            eval_accuracy,
            checkpoint,
        });
    }
    Ok((trainer.into_weights(), trace))
}

/// `A(W)`: arg-max accuracy on `test_set`.
pub fn evaluate(
    arch: &ModelArch,
    weights: &ModelWeights,
    test_set: &Dataset,
) -> Result<f64, NnError> {
    Engine::new(arch).accuracy(weights, test_set)
}

/// Mean loss and gradient over the rows `indices` of `data`.
pub fn loss_and_grads(
    arch: &ModelArch,
    weights: &ModelWeights,
    data: &Dataset,
    indices: &[usize],
) -> Result<(f64, ModelWeights), NnError> {
    Engine::new(arch).loss_and_grads(weights, data, indices)
}
