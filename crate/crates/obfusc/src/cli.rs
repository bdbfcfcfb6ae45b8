//! The `obfusc` command line.
//!
//! Exit codes: 0 on success, 1 when flags fail validation (nothing has been
//! written yet), 2 when the pipeline itself fails. Diagnostics go to
//! stderr as one line; data goes to stdout with 17 significant digits.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use obfusc_core::dataset::split;
use obfusc_core::metrics::fnorm;
use obfusc_core::nn::{
    evaluate, init_model, train, ModelArch, ModelWeights, Optimizer, TrainConfig,
};
use obfusc_core::obfuscation::{mean_squared_error, obfuscate, ObfuscationSpec};
use obfusc_core::pol::{all_segments, prove, spoof_trial, verify, Verdict};
use obfusc_core::rng::SPLIT;
use obfusc_core::sampler::SamplingSpec;
use obfusc_core::{Dataset, RngStream};

use crate::harness::{self, ExperimentConfig};
use crate::io;
use crate::table::{emit, fmt_f64};

#[derive(Debug, Parser)]
#[command(
    name = "obfusc",
    version,
    about = "Dataset obfuscation, training and proof-of-learning toolkit"
)]
pub struct Cli {
    /// Class count C used when reading IDX label files.
    #[arg(long, global = true, default_value_t = 10)]
    pub classes: usize,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Split a pool into train and test sets.
    Split {
        /// Fraction of rows assigned to the training set.
        #[arg(long, default_value_t = 0.9)]
        fraction: f64,
        #[arg(long)]
        seed: u64,
        pool: PathBuf,
        train_out: PathBuf,
        test_out: PathBuf,
    },
    /// Draw an S-X-Y-Z dataset from a pool.
    Sample {
        /// Label degree X.
        #[arg(long)]
        x: f64,
        /// Label overlapping ratio Y (used with --counterpart-of).
        #[arg(long, default_value_t = 1.0)]
        y: f64,
        /// Sampling ratio Z.
        #[arg(long)]
        z: f64,
        #[arg(long)]
        seed: u64,
        /// Pin the label set (comma-separated).
        #[arg(long, value_delimiter = ',')]
        labels: Option<Vec<u8>>,
        /// Draw a counterpart sharing floor(C*X*Y) labels with this set.
        #[arg(long, value_delimiter = ',', conflicts_with = "labels")]
        counterpart_of: Option<Vec<u8>>,
        pool: PathBuf,
        out: PathBuf,
    },
    /// Add N(0, sigma^2) noise to a proportion R of the samples.
    Obfuscate {
        #[arg(long)]
        sigma: f64,
        /// Obfuscated proportion R.
        #[arg(long, default_value_t = 1.0)]
        r: f64,
        /// Clamp noisy features to [0, 1].
        #[arg(long)]
        clip: bool,
        #[arg(long)]
        seed: u64,
        input: PathBuf,
        out: PathBuf,
    },
    /// Train a model and write its final checkpoint.
    Train {
        #[command(flatten)]
        train: TrainArgs,
        /// Report test accuracy per epoch on this dataset.
        #[arg(long)]
        eval: Option<PathBuf>,
        data: PathBuf,
        out: PathBuf,
    },
    /// Test accuracy of a checkpoint.
    Eval {
        #[arg(long)]
        preset: String,
        checkpoint: PathBuf,
        data: PathBuf,
    },
    /// F-norm distance between two checkpoints.
    Fnorm { a: PathBuf, b: PathBuf },
    /// Proof-of-learning prover and verifier.
    Pol {
        #[command(subcommand)]
        command: PolCommand,
    },
    /// Attacks on obfuscated disclosures.
    Attack {
        #[command(subcommand)]
        command: AttackCommand,
    },
    /// Desk-scale experiments.
    Exp {
        #[command(subcommand)]
        command: ExpCommand,
    },
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum OptimizerArg {
    Adam,
    Sgd,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Architecture preset (linear, desk-mlp, desk-cnn, paper-cnn).
    #[arg(long)]
    preset: String,
    #[arg(long)]
    epochs: usize,
    #[arg(long)]
    lr: f64,
    #[arg(long)]
    batch: usize,
    #[arg(long, value_enum, default_value_t = OptimizerArg::Adam)]
    optimizer: OptimizerArg,
    /// Seeds the initial weights and the batch shuffles.
    #[arg(long)]
    seed: u64,
}

impl TrainArgs {
    fn config(&self) -> Result<TrainConfig, CliError> {
        let optimizer = match self.optimizer {
            OptimizerArg::Adam => Optimizer::adam(),
            OptimizerArg::Sgd => Optimizer::Sgd,
        };
        let config = TrainConfig {
            optimizer,
            ..TrainConfig::new(self.epochs, self.lr, self.batch, self.seed)
        };
        config
            .validate()
            .map_err(|e| CliError::Validation(e.to_string()))?;
        check_preset(&self.preset)?;
        Ok(config)
    }
}

#[derive(Debug, Subcommand)]
pub enum PolCommand {
    /// Train with periodic checkpoints and write the transcript.
    Prove {
        #[command(flatten)]
        train: TrainArgs,
        /// Checkpoint interval k in optimizer steps.
        #[arg(long)]
        interval: usize,
        data: PathBuf,
        transcript: PathBuf,
    },
    /// Check the commitment, replay segments and compare checkpoints.
    Verify {
        /// Maximum accepted F-norm per segment.
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        /// Segments to replay (comma-separated); all when omitted.
        #[arg(long, value_delimiter = ',')]
        segments: Option<Vec<usize>>,
        transcript: PathBuf,
        data: PathBuf,
    },
    /// Replay every segment on another dataset, ignoring the commitment.
    Spoof {
        #[arg(long, default_value_t = 0.0)]
        threshold: f64,
        transcript: PathBuf,
        data: PathBuf,
    },
}

#[derive(Debug, Subcommand)]
pub enum AttackCommand {
    /// Average disclosures and report the MSE against the raw set.
    Average {
        /// Write the averaged estimate to this dataset stem.
        #[arg(long)]
        out: Option<PathBuf>,
        reference: PathBuf,
        #[arg(required = true)]
        disclosures: Vec<PathBuf>,
    },
}

#[derive(Debug, Subcommand)]
pub enum ExpCommand {
    /// Run an experiment config; writes CSV plus a JSON sidecar.
    Run {
        /// Output CSV path; overrides the config's `output`.
        #[arg(long)]
        out: Option<PathBuf>,
        config: PathBuf,
    },
    /// Write a shipped preset config as JSON.
    Preset {
        /// exp1, exp2, exp3, exp4, dynamics, pol-spoof or averaging.
        name: String,
        out: PathBuf,
    },
}

#[derive(Debug)]
pub enum CliError {
    Validation(String),
    Pipeline(String),
}

impl CliError {
    pub fn code(&self) -> i32 {
        match self {
            CliError::Validation(_) => 1,
            CliError::Pipeline(_) => 2,
        }
    }
}

fn pipeline(e: impl std::fmt::Display) -> CliError {
    CliError::Pipeline(e.to_string())
}

fn invalid(msg: impl Into<String>) -> CliError {
    CliError::Validation(msg.into())
}

fn check_preset(name: &str) -> Result<(), CliError> {
    if obfusc_core::nn::PRESETS.contains(&name) {
        Ok(())
    } else {
        Err(invalid(format!(
            "unknown preset {name:?}; expected one of {}",
            obfusc_core::nn::PRESETS.join(", ")
        )))
    }
}

fn load(path: &Path, classes: usize) -> Result<Dataset, CliError> {
    io::load_dataset(path, classes).map_err(pipeline)
}

fn arch_for(preset: &str, data: &Dataset) -> Result<ModelArch, CliError> {
    ModelArch::preset(preset, data.shape(), data.num_classes()).map_err(pipeline)
}

fn print_verdict(out: &mut impl Write, verdict: &Verdict) -> std::io::Result<()> {
    for s in &verdict.segments {
        writeln!(
            out,
            "segment {} steps {}..{} fnorm {}",
            s.segment,
            s.from_step,
            s.to_step,
            fmt_f64(s.distance)
        )?;
    }
    let word = if verdict.accepted { "accept" } else { "reject" };
    writeln!(
        out,
        "verdict {word} max {}",
        fmt_f64(verdict.max_distance())
    )
}

/// Execute a parsed command, writing data lines to `out`.
pub fn execute(cli: Cli, out: &mut impl Write) -> Result<(), CliError> {
    let classes = cli.classes;
    if !(2..=256).contains(&classes) {
        return Err(invalid("--classes must lie in [2, 256]"));
    }
    let w = |r: std::io::Result<()>| r.map_err(pipeline);
    match cli.command {
        Command::Split {
            fraction,
            seed,
            pool,
            train_out,
            test_out,
        } => {
            if !(fraction > 0.0 && fraction < 1.0) {
                return Err(invalid("--fraction must lie in (0, 1)"));
            }
            let data = load(&pool, classes)?;
            let (tr, te) =
                split(&data, fraction, &mut RngStream::derive(seed, SPLIT)).map_err(pipeline)?;
            io::write_dataset(&tr, &train_out).map_err(pipeline)?;
            io::write_dataset(&te, &test_out).map_err(pipeline)?;
            w(writeln!(out, "train {} test {}", tr.len(), te.len()))
        }
        Command::Sample {
            x,
            y,
            z,
            seed,
            labels,
            counterpart_of,
            pool,
            out: dest,
        } => {
            let mut spec = SamplingSpec::new(x, y, z, seed).map_err(|e| invalid(e.to_string()))?;
            spec.anchor_labels = labels;
            let data = load(&pool, classes)?;
            let drawn = match counterpart_of {
                Some(anchor) => spec.draw_counterpart(&data, &anchor),
                None => spec.draw(&data),
            }
            .map_err(pipeline)?;
            io::write_dataset(&drawn, &dest).map_err(pipeline)?;
            let covered: Vec<String> = drawn
                .class_counts()
                .iter()
                .enumerate()
                .filter(|(_, &c)| c > 0)
                .map(|(l, _)| l.to_string())
                .collect();
            w(writeln!(
                out,
                "{spec} entries {} labels {}",
                drawn.len(),
                covered.join(",")
            ))
        }
        Command::Obfuscate {
            sigma,
            r,
            clip,
            seed,
            input,
            out: dest,
        } => {
            let spec = ObfuscationSpec {
                sigma,
                proportion: r,
                clip,
                seed,
            };
            spec.validate()
                .map_err(|_| invalid("--sigma must be finite and >= 0, --r in [0, 1]"))?;
            let data = load(&input, classes)?;
            let obf = obfuscate(&data, &spec).map_err(pipeline)?;
            io::write_dataset(&obf, &dest).map_err(pipeline)?;
            let mse = mean_squared_error(obf.features(), data.features());
            w(writeln!(out, "{}", fmt_f64(mse)))
        }
        Command::Train {
            train: args,
            eval,
            data,
            out: dest,
        } => {
            let config = args.config()?;
            let data = load(&data, classes)?;
            let eval_set = eval.map(|p| load(&p, classes)).transpose()?;
            let arch = arch_for(&args.preset, &data)?;
            let init = init_model(&arch, args.seed);
            let (weights, trace) =
                train(&arch, &init, &data, &config, eval_set.as_ref()).map_err(pipeline)?;
            for r in &trace.records {
                let acc = r.eval_accuracy.map(fmt_f64).unwrap_or_else(|| "-".into());
                eprintln!(
                    "epoch {} loss {} accuracy {acc}",
                    r.epoch,
                    fmt_f64(r.train_loss)
                );
            }
            io::write_weights(&weights, &dest).map_err(pipeline)?;
            match eval_set {
                Some(e) => {
                    let acc = evaluate(&arch, &weights, &e).map_err(pipeline)?;
                    w(writeln!(out, "{}", fmt_f64(acc)))
                }
                None => Ok(()),
            }
        }
        Command::Eval {
            preset,
            checkpoint,
            data,
        } => {
            check_preset(&preset)?;
            let data = load(&data, classes)?;
            let weights = io::read_weights(&checkpoint).map_err(pipeline)?;
            let arch = arch_for(&preset, &data)?;
            let acc = evaluate(&arch, &weights, &data).map_err(pipeline)?;
            w(writeln!(out, "{}", fmt_f64(acc)))
        }
        Command::Fnorm { a, b } => {
            let a: ModelWeights = io::read_weights(&a).map_err(pipeline)?;
            let b = io::read_weights(&b).map_err(pipeline)?;
            let d = fnorm(&a, &b).map_err(pipeline)?;
            w(writeln!(out, "{}", fmt_f64(d)))
        }
        Command::Pol { command } => match command {
            PolCommand::Prove {
                train: args,
                interval,
                data,
                transcript,
            } => {
                let config = args.config()?;
                if interval == 0 {
                    return Err(invalid("--interval must be at least 1"));
                }
                let data = load(&data, classes)?;
                let arch = arch_for(&args.preset, &data)?;
                let init = init_model(&arch, args.seed);
                let (_, t) = prove(&arch, &init, &data, &config, interval).map_err(pipeline)?;
                io::write_transcript(&t, &transcript).map_err(pipeline)?;
                w(writeln!(
                    out,
                    "checkpoints {} commitment {}",
                    t.checkpoints.len(),
                    t.commitment
                ))
            }
            PolCommand::Verify {
                threshold,
                segments,
                transcript,
                data,
            } => {
                if !(threshold >= 0.0) {
                    return Err(invalid("--threshold must be >= 0"));
                }
                let t = io::read_transcript(&transcript).map_err(pipeline)?;
                let data = load(&data, classes)?;
                let segments = segments.unwrap_or_else(|| all_segments(&t));
                let verdict = verify(&t, &data, &segments, threshold).map_err(pipeline)?;
                w(print_verdict(out, &verdict))
            }
            PolCommand::Spoof {
                threshold,
                transcript,
                data,
            } => {
                if !(threshold >= 0.0) {
                    return Err(invalid("--threshold must be >= 0"));
                }
                let t = io::read_transcript(&transcript).map_err(pipeline)?;
                let data = load(&data, classes)?;
                let verdict = spoof_trial(&t, &data, threshold).map_err(pipeline)?;
                w(print_verdict(out, &verdict))
            }
        },
        Command::Attack {
            command:
                AttackCommand::Average {
                    out: dest,
                    reference,
                    disclosures,
                },
        } => {
            let reference = load(&reference, classes)?;
            let sets = disclosures
                .iter()
                .map(|p| load(p, classes))
                .collect::<Result<Vec<_>, _>>()?;
            let (estimate, mse) =
                obfusc_core::obfuscation::reconstruct_by_averaging(&sets, &reference)
                    .map_err(pipeline)?;
            if let Some(dest) = dest {
                io::write_dataset(&estimate, &dest).map_err(pipeline)?;
            }
            w(writeln!(out, "{}", fmt_f64(mse)))
        }
        Command::Exp { command } => match command {
            ExpCommand::Run { out: dest, config } => {
                let text = std::fs::read_to_string(&config)
                    .map_err(|e| pipeline(format!("IoError: {}: {e}", config.display())))?;
                let config =
                    ExperimentConfig::from_json(&text).map_err(|e| invalid(e.to_string()))?;
                let dest = dest
                    .or_else(|| config.output.clone())
                    .ok_or_else(|| invalid("no output path: pass --out or set `output`"))?;
                let table = harness::run(&config).map_err(pipeline)?;
                emit(&table, &dest).map_err(pipeline)?;
                w(writeln!(
                    out,
                    "{} rows {}",
                    dest.display(),
                    table.rows.len()
                ))
            }
            ExpCommand::Preset { name, out: dest } => {
                let config = harness::preset(&name).ok_or_else(|| {
                    invalid(format!(
                        "unknown experiment preset {name:?}; expected one of {}",
                        harness::PRESETS.join(", ")
                    ))
                })?;
                io::write_bytes(&dest, config.to_json().as_bytes()).map_err(pipeline)
            }
        },
    }
}

/// Parse `args` and run; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return 0;
            }
            let text = e.to_string();
            let line = text.lines().next().unwrap_or("invalid arguments");
            eprintln!("{line}");
            return 1;
        }
    };
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match execute(cli, &mut lock) {
        Ok(()) => 0,
        Err(e) => {
            let (CliError::Validation(msg) | CliError::Pipeline(msg)) = &e;
            eprintln!("error: {}", msg.lines().next().unwrap_or(""));
            e.code()
        }
    }
}
