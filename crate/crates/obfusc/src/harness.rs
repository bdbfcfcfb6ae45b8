//! Desk-scale experiment runner.
//!
//! Every run starts the same way: load the pool, split it into the global
//! training pool `T_t` and test set `T_e` with the `split` stream, cap both,
//! then draw each configured `S-X-Y-Z` set from `T_t`. Within a run seed
//! `s`, every model starts from `init_model(arch, s)`, shuffles with `s`,
//! and the dataset in noise slot `k` is obfuscated with [`noise_seed`]`(s, k)`.
//! Slot 0 is the reference (or the only spec); target `j` uses slot `j + 1`.
//! The same noise seed is used at every sigma, so a sigma sweep rescales
//! one fixed noise draw.

use std::collections::BTreeMap;
use std::path::PathBuf;

use obfusc_core::dataset::split;
use obfusc_core::metrics::{fnorm, gap, pud_report, trace_compare, MetricsError};
use obfusc_core::nn::{
    evaluate, init_model, train, ModelArch, ModelWeights, NnError, Optimizer, TrainConfig,
};
use obfusc_core::obfuscation::{mean_squared_error, obfuscate, ObfuscationError, ObfuscationSpec};
use obfusc_core::pol::{all_segments, prove, spoof_trial, verify, PolError};
use obfusc_core::rng::{splitmix64, SAMPLE, SPLIT};
use obfusc_core::sampler::{SamplerError, SamplingSpec};
use obfusc_core::{digest, DataError, Dataset, RngStream};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::io::{self, IoError};
use crate::table::{Metadata, ResultTable, Row};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("ConfigError: {0}")]
    Config(String),
    #[error("{0}")]
    Io(#[from] IoError),
    #[error("{0}")]
    Data(#[from] DataError),
    #[error("{0}")]
    Sampler(#[from] SamplerError),
    #[error("{0}")]
    Obfuscation(#[from] ObfuscationError),
    #[error("{0}")]
    Nn(#[from] NnError),
    #[error("{0}")]
    Metrics(#[from] MetricsError),
    #[error("{0}")]
    Pol(#[from] PolError),
}

fn config_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExperimentKind {
    AccuracySweep,
    DivergenceSweep,
    Dynamics,
    PolSpoof,
    AveragingAttack,
}

impl ExperimentKind {
    pub fn name(self) -> &'static str {
        match self {
            Self::AccuracySweep => "accuracy-sweep",
            Self::DivergenceSweep => "divergence-sweep",
            Self::Dynamics => "dynamics",
            Self::PolSpoof => "pol-spoof",
            Self::AveragingAttack => "averaging-attack",
        }
    }
}

/// Where the pool comes from. Relative paths resolve against the working
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case", deny_unknown_fields)]
pub enum DataSource {
    /// A dataset stem, as accepted by [`io::load_dataset`].
    Stem {
        path: PathBuf,
    },
    Idx {
        images: PathBuf,
        labels: PathBuf,
    },
    Cifar10 {
        batches: Vec<PathBuf>,
    },
    Blobs {
        classes: usize,
        per_class: usize,
        dim: usize,
        spread: f64,
        seed: u64,
    },
}

impl DataSource {
    pub fn load(&self, classes: usize) -> Result<Dataset, HarnessError> {
        Ok(match self {
            Self::Stem { path } => io::load_dataset(path, classes)?,
            Self::Idx { images, labels } => io::load_idx(images, labels, classes)?,
            Self::Cifar10 { batches } => io::load_cifar10(batches)?,
            Self::Blobs {
                classes,
                per_class,
                dim,
                spread,
                seed,
            } => obfusc_core::dataset::synth_blobs(
                *classes,
                *per_class,
                *dim,
                *spread,
                &mut RngStream::derive(*seed, SAMPLE),
            )?,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Role {
    Reference,
    Target,
}

/// One `S-X-Y-Z` draw with its role in the experiment.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpecEntry {
    pub role: Role,
    pub spec: String,
    pub seed: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub anchor_labels: Option<Vec<u8>>,
}

impl SpecEntry {
    pub fn new(role: Role, spec: &str, seed: u64) -> Self {
        Self {
            role,
            spec: spec.into(),
            seed,
            anchor_labels: None,
        }
    }

    pub fn pinned(mut self, labels: &[u8]) -> Self {
        self.anchor_labels = Some(labels.to_vec());
        self
    }

    pub fn sampling(&self) -> Result<SamplingSpec, HarnessError> {
        let mut s: SamplingSpec = self.spec.parse()?;
        s.seed = self.seed;
        s.anchor_labels = self.anchor_labels.clone();
        Ok(s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OptimizerChoice {
    #[default]
    Adam,
    Sgd,
}

impl OptimizerChoice {
    pub fn optimizer(self) -> Optimizer {
        match self {
            Self::Adam => Optimizer::adam(),
            Self::Sgd => Optimizer::Sgd,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PolSettings {
    /// Checkpoint interval in optimizer steps.
    pub interval: usize,
    pub threshold: f64,
}

fn default_classes() -> usize {
    10
}

fn default_fraction() -> f64 {
    0.9
}

fn default_proportion() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub id: String,
    pub kind: ExperimentKind,
    pub data: DataSource,
    #[serde(default = "default_classes")]
    pub classes: usize,
    #[serde(default = "default_fraction")]
    pub train_fraction: f64,
    pub split_seed: u64,
    #[serde(default)]
    pub max_train: Option<usize>,
    #[serde(default)]
    pub max_test: Option<usize>,
    pub preset: String,
    pub epochs: usize,
    pub learning_rate: f64,
    pub batch_size: usize,
    #[serde(default)]
    pub optimizer: OptimizerChoice,
    pub sigmas: Vec<f64>,
    /// Obfuscated proportion `R`.
    #[serde(default = "default_proportion")]
    pub proportion: f64,
    #[serde(default)]
    pub clip: bool,
    pub specs: Vec<SpecEntry>,
    pub seeds: Vec<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pol: Option<PolSettings>,
    /// Disclosure counts `N` for the averaging attack.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub disclosures: Vec<usize>,
    /// Departures from the reference experimental settings, echoed into metadata.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub deviations: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self, HarnessError> {
        let config: Self = serde_json::from_str(text).map_err(|e| config_error(e.to_string()))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("config serializes");
        s.push('\n');
        s
    }

    pub fn validate(&self) -> Result<(), HarnessError> {
        if self.sigmas.is_empty() {
            return Err(config_error("sigma grid is empty"));
        }
        if self.sigmas.windows(2).any(|w| w[1] < w[0]) {
            return Err(config_error("sigma grid must be sorted ascending"));
        }
        if self.sigmas.iter().any(|s| !(*s >= 0.0 && s.is_finite())) {
            return Err(config_error("sigmas must be finite and >= 0"));
        }
        if self.seeds.is_empty() {
            return Err(config_error("seeds are empty"));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(config_error("train_fraction must lie in (0, 1)"));
        }
        if self.specs.is_empty() {
            return Err(config_error("no sampling specs"));
        }
        for s in &self.specs {
            s.sampling()?.validate()?;
        }
        self.train_config(0).validate()?;
        ObfuscationSpec {
            sigma: 0.0,
            proportion: self.proportion,
            clip: self.clip,
            seed: 0,
        }
        .validate()?;
        let references = self
            .specs
            .iter()
            .filter(|s| s.role == Role::Reference)
            .count();
        let needs_reference = matches!(
            self.kind,
            ExperimentKind::DivergenceSweep | ExperimentKind::Dynamics | ExperimentKind::PolSpoof
        );
        if needs_reference && references != 1 {
            return Err(config_error(format!(
                "{} needs exactly one reference spec",
                self.kind.name()
            )));
        }
        match self.kind {
            ExperimentKind::PolSpoof => {
                let pol = self
                    .pol
                    .ok_or_else(|| config_error("pol-spoof needs pol settings"))?;
                if pol.interval == 0 || !(pol.threshold >= 0.0) {
                    return Err(config_error("pol interval must be >= 1 and threshold >= 0"));
                }
            }
            ExperimentKind::AveragingAttack
                if self.disclosures.is_empty() || self.disclosures.contains(&0) =>
            {
                return Err(config_error(
                    "averaging-attack needs disclosure counts >= 1",
                ));
            }
            _ => {}
        }
        Ok(())
    }

    pub fn train_config(&self, seed: u64) -> TrainConfig {
        TrainConfig {
            optimizer: self.optimizer.optimizer(),
            ..TrainConfig::new(self.epochs, self.learning_rate, self.batch_size, seed)
        }
    }

    pub fn obfuscation(&self, sigma: f64, seed: u64) -> ObfuscationSpec {
        ObfuscationSpec {
            sigma,
            proportion: self.proportion,
            clip: self.clip,
            seed,
        }
    }

    pub fn reference(&self) -> Option<&SpecEntry> {
        self.specs.iter().find(|s| s.role == Role::Reference)
    }

    pub fn targets(&self) -> impl Iterator<Item = &SpecEntry> {
        self.specs.iter().filter(|s| s.role == Role::Target)
    }

    /// SHA-256 of the compact JSON encoding.
    pub fn fingerprint(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        digest::digest(&json).to_string()
    }
}

/// Obfuscation seed for noise slot `slot` under run seed `seed`.
pub fn noise_seed(seed: u64, slot: u64) -> u64 {
    if slot == 0 {
        seed
    } else {
        splitmix64(seed ^ splitmix64(slot))
    }
}

/// The split and capped pools plus the model architecture.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub train: Dataset,
    pub test: Dataset,
    pub arch: ModelArch,
}

fn cap(data: Dataset, max: Option<usize>, stream: &mut RngStream) -> Dataset {
    match max {
        Some(m) if m < data.len() => {
            let mut idx = stream.choose(data.len(), m);
            idx.sort_unstable();
            data.subset(&idx)
        }
        _ => data,
    }
}

/// Load, split with the `split` stream of `split_seed`, then cap train and
/// test (in that order) with uniform subsets from the same stream.
pub fn prepare(config: &ExperimentConfig) -> Result<Prepared, HarnessError> {
    let pool = config.data.load(config.classes)?;
    let mut stream = RngStream::derive(config.split_seed, SPLIT);
    let (train_pool, test) = split(&pool, config.train_fraction, &mut stream)?;
    let train_pool = cap(train_pool, config.max_train, &mut stream);
    let test = cap(test, config.max_test, &mut stream);
    let arch = ModelArch::preset(&config.preset, train_pool.shape(), pool.num_classes())?;
    Ok(Prepared {
        train: train_pool,
        test,
        arch,
    })
}

/// Draws for the reference (if any) and every other spec, in config order.
struct Draws {
    reference: Option<(SpecEntry, Dataset)>,
    others: Vec<(SpecEntry, Dataset)>,
}

fn draw_all(config: &ExperimentConfig, pool: &Dataset) -> Result<Draws, HarnessError> {
    let reference = match config.reference() {
        Some(entry) => Some((entry.clone(), entry.sampling()?.draw(pool)?)),
        None => None,
    };
    let anchor = match config.reference() {
        Some(entry) => entry.sampling()?.labels(
            pool.num_classes(),
            &mut RngStream::derive(entry.seed, SAMPLE),
        )?,
        None => Vec::new(),
    };
    let mut others = Vec::new();
    for entry in config.specs.iter().filter(|s| s.role == Role::Target) {
        let spec = entry.sampling()?;
        let data = if reference.is_some() {
            spec.draw_counterpart(pool, &anchor)?
        } else {
            spec.draw(pool)?
        };
        others.push((entry.clone(), data));
    }
    Ok(Draws { reference, others })
}

struct Ctx<'a> {
    config: &'a ExperimentConfig,
    prep: &'a Prepared,
    rows: Vec<Row>,
    pud: Vec<obfusc_core::metrics::PudReport>,
}

impl Ctx<'_> {
    #[allow(clippy::too_many_arguments)]
    fn push(
        &mut self,
        spec: &str,
        role: &str,
        sigma: f64,
        seed: u64,
        metric: &str,
        index: Option<u64>,
        value: f64,
    ) {
        self.rows.push(Row {
            experiment: self.config.id.clone(),
            spec: spec.into(),
            role: role.into(),
            sigma,
            seed,
            metric: metric.into(),
            index,
            value,
        });
    }

    fn fit(&self, data: &Dataset, seed: u64) -> Result<ModelWeights, HarnessError> {
        let arch = &self.prep.arch;
        let cfg = self.config.train_config(seed);
        Ok(train(arch, &init_model(arch, seed), data, &cfg, None)?.0)
    }

    fn obfuscated(
        &self,
        data: &Dataset,
        sigma: f64,
        seed: u64,
        slot: u64,
    ) -> Result<Dataset, HarnessError> {
        Ok(obfuscate(
            data,
            &self.config.obfuscation(sigma, noise_seed(seed, slot)),
        )?)
    }
}

fn spec_name(entry: &SpecEntry) -> String {
    // Normalize through the parser so "S-1.0-1-0.50" prints as "S-1-1-0.5".
    entry
        .sampling()
        .map(|s| s.to_string())
        .unwrap_or_else(|_| entry.spec.clone())
}

/// Train on each obfuscated spec draw, evaluate on `T_e`.
pub fn run_accuracy_sweep(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    run_kind(config, ExperimentKind::AccuracySweep)
}

/// `D(W_r, W_o)` for the obfuscated reference and each target, `Δ` of each
/// target against the obfuscated reference, and test accuracy of every model.
pub fn run_divergence_sweep(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    run_kind(config, ExperimentKind::DivergenceSweep)
}

/// Per-epoch accuracy and `D` series, reference vs obfuscated sets.
pub fn run_dynamics(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    run_kind(config, ExperimentKind::Dynamics)
}

/// PoL: prove on the obfuscated reference, verify honestly, then replay
/// every segment on each obfuscated target.
pub fn run_pol_spoof(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    run_kind(config, ExperimentKind::PolSpoof)
}

/// Reconstruction error of averaging `N` independent disclosures.
pub fn run_averaging_attack(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    run_kind(config, ExperimentKind::AveragingAttack)
}

/// Run whatever `config.kind` names.
pub fn run(config: &ExperimentConfig) -> Result<ResultTable, HarnessError> {
    run_kind(config, config.kind)
}

fn run_kind(config: &ExperimentConfig, kind: ExperimentKind) -> Result<ResultTable, HarnessError> {
    if config.kind != kind {
        return Err(config_error(format!(
            "config kind is {}, not {}",
            config.kind.name(),
            kind.name()
        )));
    }
    config.validate()?;
    let prep = prepare(config)?;
    let draws = draw_all(config, &prep.train)?;
    let mut ctx = Ctx {
        config,
        prep: &prep,
        rows: Vec::new(),
        pud: Vec::new(),
    };
    match kind {
        ExperimentKind::AccuracySweep => accuracy_sweep(&mut ctx, &draws)?,
        ExperimentKind::DivergenceSweep => divergence_sweep(&mut ctx, &draws)?,
        ExperimentKind::Dynamics => dynamics(&mut ctx, &draws)?,
        ExperimentKind::PolSpoof => pol_spoof(&mut ctx, &draws)?,
        ExperimentKind::AveragingAttack => averaging_attack(&mut ctx, &draws)?,
    }
    let Ctx { rows, pud, .. } = ctx;
    let mut table = ResultTable {
        rows,
        metadata: Metadata {
            experiment: config.id.clone(),
            kind: kind.name().into(),
            fingerprint: config.fingerprint(),
            config: serde_json::to_value(config).expect("config serializes"),
            deviations: config.deviations.clone(),
            pud,
        },
    };
    table.sort();
    Ok(table)
}

fn all_specs(draws: &Draws) -> Vec<&(SpecEntry, Dataset)> {
    draws.reference.iter().chain(draws.others.iter()).collect()
}

fn accuracy_sweep(ctx: &mut Ctx, draws: &Draws) -> Result<(), HarnessError> {
    let config = ctx.config;
    for (entry, data) in all_specs(draws) {
        let name = spec_name(entry);
        let role = role_name(entry.role);
        for &seed in &config.seeds {
            for &sigma in &config.sigmas {
                let obf = ctx.obfuscated(data, sigma, seed, 0)?;
                let w = ctx.fit(&obf, seed)?;
                let acc = evaluate(&ctx.prep.arch, &w, &ctx.prep.test)?;
                ctx.push(&name, role, sigma, seed, "accuracy", None, acc);
            }
        }
    }
    Ok(())
}

fn role_name(role: Role) -> &'static str {
    match role {
        Role::Reference => "reference",
        Role::Target => "target",
    }
}

fn divergence_sweep(ctx: &mut Ctx, draws: &Draws) -> Result<(), HarnessError> {
    let config = ctx.config;
    let (ref_entry, ref_data) = draws.reference.as_ref().expect("validated");
    let ref_name = spec_name(ref_entry);
    for &seed in &config.seeds {
        let w_ref = ctx.fit(ref_data, seed)?;
        let acc = evaluate(&ctx.prep.arch, &w_ref, &ctx.prep.test)?;
        ctx.push(&ref_name, "reference", 0.0, seed, "accuracy", None, acc);
        for &sigma in &config.sigmas {
            let same = ctx.obfuscated(ref_data, sigma, seed, 0)?;
            let recon = mean_squared_error(same.features(), ref_data.features());
            let w_same = ctx.fit(&same, seed)?;
            let d_same = fnorm(&w_ref, &w_same)?;
            let acc_same = evaluate(&ctx.prep.arch, &w_same, &ctx.prep.test)?;
            ctx.push(&ref_name, "same", sigma, seed, "fnorm", None, d_same);
            ctx.push(&ref_name, "same", sigma, seed, "accuracy", None, acc_same);
            ctx.push(&ref_name, "same", sigma, seed, "recon_mse", None, recon);
            let mut first_delta = None;
            for (j, (entry, data)) in draws.others.iter().enumerate() {
                let name = spec_name(entry);
                let obf = ctx.obfuscated(data, sigma, seed, j as u64 + 1)?;
                let w = ctx.fit(&obf, seed)?;
                let d = fnorm(&w_ref, &w)?;
                let delta = gap(d_same, d);
                first_delta.get_or_insert(delta);
                let acc = evaluate(&ctx.prep.arch, &w, &ctx.prep.test)?;
                ctx.push(&name, "target", sigma, seed, "fnorm", None, d);
                ctx.push(&name, "target", sigma, seed, "delta", None, delta);
                ctx.push(&name, "target", sigma, seed, "accuracy", None, acc);
            }
            let mut meta = BTreeMap::new();
            meta.insert("experiment".into(), config.id.clone());
            meta.insert("seed".into(), seed.to_string());
            meta.insert("spec".into(), ref_name.clone());
            if let Some((entry, _)) = draws.others.first() {
                meta.insert("delta_against".into(), spec_name(entry));
            }
            ctx.pud.push(pud_report(
                sigma,
                recon,
                acc_same,
                first_delta.unwrap_or(0.0),
                meta,
            )?);
        }
    }
    Ok(())
}

fn dynamics(ctx: &mut Ctx, draws: &Draws) -> Result<(), HarnessError> {
    let config = ctx.config;
    let arch = &ctx.prep.arch;
    let (ref_entry, ref_data) = draws.reference.as_ref().expect("validated");
    let ref_name = spec_name(ref_entry);
    let run =
        |data: &Dataset, seed: u64| -> Result<(f64, Vec<ModelWeights>, Vec<f64>), HarnessError> {
            let init = init_model(arch, seed);
            let init_acc = evaluate(arch, &init, &ctx.prep.test)?;
            let (_, trace) = train(
                arch,
                &init,
                data,
                &config.train_config(seed),
                Some(&ctx.prep.test),
            )?;
            let accs = trace
                .records
                .iter()
                .map(|r| r.eval_accuracy.expect("eval set attached"))
                .collect();
            Ok((init_acc, trace.epoch_weights().cloned().collect(), accs))
        };
    for &seed in &config.seeds {
        let (init_acc, ref_weights, ref_accs) = run(ref_data, seed)?;
        ctx.push(
            &ref_name,
            "reference",
            0.0,
            seed,
            "accuracy",
            Some(0),
            init_acc,
        );
        for (e, acc) in ref_accs.iter().enumerate() {
            ctx.push(
                &ref_name,
                "reference",
                0.0,
                seed,
                "accuracy",
                Some(e as u64 + 1),
                *acc,
            );
        }
        for &sigma in &config.sigmas {
            let mut series = vec![(
                "same",
                ref_name.clone(),
                ctx.obfuscated(ref_data, sigma, seed, 0)?,
            )];
            for (j, (entry, data)) in draws.others.iter().enumerate() {
                series.push((
                    "target",
                    spec_name(entry),
                    ctx.obfuscated(data, sigma, seed, j as u64 + 1)?,
                ));
            }
            for (role, name, data) in series {
                let (_, weights, accs) = run(&data, seed)?;
                let d = trace_compare(&ref_weights, &weights)?;
                for (e, (acc, d)) in accs.iter().zip(&d).enumerate() {
                    let epoch = Some(e as u64 + 1);
                    ctx.push(&name, role, sigma, seed, "accuracy", epoch, *acc);
                    ctx.push(&name, role, sigma, seed, "fnorm", epoch, *d);
                }
            }
        }
    }
    Ok(())
}

fn pol_spoof(ctx: &mut Ctx, draws: &Draws) -> Result<(), HarnessError> {
    let config = ctx.config;
    let pol = config.pol.expect("validated");
    let arch = &ctx.prep.arch;
    let (ref_entry, ref_data) = draws.reference.as_ref().expect("validated");
    let ref_name = spec_name(ref_entry);
    for &seed in &config.seeds {
        for &sigma in &config.sigmas {
            let genuine = ctx.obfuscated(ref_data, sigma, seed, 0)?;
            let (_, transcript) = prove(
                arch,
                &init_model(arch, seed),
                &genuine,
                &config.train_config(seed),
                pol.interval,
            )?;
            let honest = verify(
                &transcript,
                &genuine,
                &all_segments(&transcript),
                pol.threshold,
            )?;
            for s in &honest.segments {
                ctx.push(
                    &ref_name,
                    "reference",
                    sigma,
                    seed,
                    "honest_d",
                    Some(s.segment as u64),
                    s.distance,
                );
            }
            ctx.push(
                &ref_name,
                "reference",
                sigma,
                seed,
                "accepted",
                None,
                f64::from(u8::from(honest.accepted)),
            );
            for (j, (entry, data)) in draws.others.iter().enumerate() {
                let name = spec_name(entry);
                let spoof = ctx.obfuscated(data, sigma, seed, j as u64 + 1)?;
                let verdict = spoof_trial(&transcript, &spoof, pol.threshold)?;
                for s in &verdict.segments {
                    ctx.push(
                        &name,
                        "target",
                        sigma,
                        seed,
                        "spoof_d",
                        Some(s.segment as u64),
                        s.distance,
                    );
                }
                ctx.push(
                    &name,
                    "target",
                    sigma,
                    seed,
                    "accepted",
                    None,
                    f64::from(u8::from(verdict.accepted)),
                );
            }
        }
    }
    Ok(())
}

fn averaging_attack(ctx: &mut Ctx, draws: &Draws) -> Result<(), HarnessError> {
    let config = ctx.config;
    let mut counts = config.disclosures.clone();
    counts.sort_unstable();
    counts.dedup();
    let max = *counts.last().expect("validated");
    for (entry, data) in all_specs(draws) {
        let name = spec_name(entry);
        let role = role_name(entry.role);
        for &seed in &config.seeds {
            for &sigma in &config.sigmas {
                // Running sum in disclosure order: the same arithmetic as
                // `reconstruct_by_averaging` over the first `n` disclosures,
                // without holding them all.
                let mut sum = vec![0.0; data.features().len()];
                let mut next = 0;
                for n in 1..=max {
                    let d = ctx.obfuscated(data, sigma, seed, n as u64 - 1)?;
                    for (acc, &v) in sum.iter_mut().zip(d.features()) {
                        *acc += v;
                    }
                    if counts[next] == n {
                        let mean: Vec<f64> = sum.iter().map(|s| s / n as f64).collect();
                        let mse = mean_squared_error(&mean, data.features());
                        ctx.push(&name, role, sigma, seed, "recon_mse", Some(n as u64), mse);
                        next += 1;
                    }
                }
            }
        }
    }
    Ok(())
}

fn mnist(id: &str, kind: ExperimentKind, specs: Vec<SpecEntry>) -> ExperimentConfig {
    ExperimentConfig {
        id: id.into(),
        kind,
        data: DataSource::Stem {
            path: PathBuf::from("data/mnist/mnist10k"),
        },
        classes: 10,
        train_fraction: 0.9,
        split_seed: 0,
        max_train: Some(5000),
        max_test: Some(1000),
        preset: "desk-mlp".into(),
        epochs: 15,
        learning_rate: 1e-3,
        batch_size: 128,
        optimizer: OptimizerChoice::Adam,
        sigmas: vec![0.0, 0.2, 0.4, 0.6, 0.8, 1.0],
        proportion: 1.0,
        clip: false,
        specs,
        seeds: vec![1, 2, 3],
        pol: None,
        disclosures: Vec::new(),
        deviations: vec![
            "desk scale: 5,000-sample training pool, 1,000 test samples, 15 epochs, desk-mlp"
                .into(),
            "learning rate 1e-3 instead of 1e-4 to compensate for 12x fewer epochs".into(),
        ],
        output: Some(PathBuf::from(format!("results/{id}.csv"))),
    }
}

pub const PRESETS: [&str; 7] = [
    "exp1",
    "exp2",
    "exp3",
    "exp4",
    "dynamics",
    "pol-spoof",
    "averaging",
];

/// Desk-scale MNIST versions of the reference experiments.
pub fn preset(name: &str) -> Option<ExperimentConfig> {
    use ExperimentKind::*;
    use Role::*;
    let config = match name {
        "exp1" => mnist(
            "exp1",
            AccuracySweep,
            vec![
                SpecEntry::new(Target, "S-1-1-0.5", 11),
                SpecEntry::new(Target, "S-0.8-1-0.625", 12),
                SpecEntry::new(Target, "S-0.5-1-1", 13),
            ],
        ),
        "exp2" => mnist(
            "exp2",
            AccuracySweep,
            vec![
                SpecEntry::new(Target, "S-0.8-1-1", 21),
                SpecEntry::new(Target, "S-0.8-1-0.5", 21),
                SpecEntry::new(Target, "S-0.8-1-0.1", 21),
            ],
        ),
        "exp3" => {
            let mut c = mnist(
                "exp3",
                DivergenceSweep,
                vec![
                    SpecEntry::new(Reference, "S-0.5-1-0.5", 31).pinned(&[0, 1, 2, 3, 4]),
                    SpecEntry::new(Target, "S-0.5-0.5-0.5", 32).pinned(&[3, 4, 5, 6, 7]),
                    SpecEntry::new(Target, "S-0.5-0.1-0.5", 33).pinned(&[4, 5, 6, 7, 8]),
                ],
            );
            c.deviations.push(
                "S-0.5-0.1-0.5 is pinned to labels 4-8 (one shared label) although floor(C*X*Y) = 0"
                    .into(),
            );
            c
        }
        "exp4" => {
            let mut c = mnist(
                "exp4",
                DivergenceSweep,
                vec![
                    SpecEntry::new(Reference, "S-1-1-0.5", 41),
                    SpecEntry::new(Target, "S-1-1-0.25", 42),
                    SpecEntry::new(Target, "S-1-1-0.05", 43),
                ],
            );
            c.deviations.push(
                "S-1-0.1-0.05 run as S-1-1-0.05: X = 1 covers every label, so Y = 0.1 is infeasible"
                    .into(),
            );
            c
        }
        "dynamics" => {
            let mut c = mnist(
                "dynamics",
                Dynamics,
                vec![
                    SpecEntry::new(Reference, "S-1-1-0.5", 51),
                    SpecEntry::new(Target, "S-0.5-1-1", 52),
                ],
            );
            c.sigmas = vec![0.0, 1.0];
            c
        }
        "pol-spoof" => {
            let mut c = mnist(
                "pol-spoof",
                PolSpoof,
                vec![
                    SpecEntry::new(Reference, "S-0.5-1-0.5", 61).pinned(&[0, 1, 2, 3, 4]),
                    SpecEntry::new(Target, "S-0.5-0-0.5", 62).pinned(&[5, 6, 7, 8, 9]),
                ],
            );
            c.sigmas = vec![0.1, 0.5, 1.0];
            c.epochs = 3;
            c.pol = Some(PolSettings {
                interval: 10,
                threshold: 1e-6,
            });
            c
        }
        "averaging" => {
            let mut c = mnist(
                "averaging",
                AveragingAttack,
                vec![SpecEntry::new(Target, "S-1-1-0.1", 71)],
            );
            c.sigmas = vec![0.5, 1.0];
            c.disclosures = vec![1, 4, 16, 64];
            c.seeds = vec![1];
            c.deviations.clear();
            c
        }
        _ => return None,
    };
    Some(config)
}
