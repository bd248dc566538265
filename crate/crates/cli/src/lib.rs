//! Command-line driver: `label`, `train`, `correct`, `evaluate`, `bench` and
//! `synth`, all configured from one TOML file with flag overrides.

pub mod commands;
pub mod config;
pub mod error;

use std::io::Write;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};
use flipguard::metrics::{render_breakdown, render_comparison};
use flipguard::synth::SynthConfig;
use flipguard::SumValidation;

use crate::commands::DataSource;
use crate::config::{require, MapSource, RunConfig};
pub use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(
    name = "flipguard",
    version,
    about = "Post-hoc detection and correction of cross-superclass errors"
)]
pub struct Cli {
    /// TOML run configuration.
    #[arg(long, global = true, value_name = "PATH")]
    pub config: Option<PathBuf>,
    /// Seed for training and generation; overrides the config.
    #[arg(long, global = true, value_name = "N")]
    pub seed: Option<u64>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Probability-vector dataset (JSONL).
    #[arg(long, value_name = "PATH")]
    pub dataset: Option<PathBuf>,
    /// Superclass map: a JSON file or `preset:<animal|isic|sicap>`.
    #[arg(long, value_name = "MAP")]
    pub map: Option<String>,
    /// Rescale vectors whose sum is off instead of rejecting them.
    #[arg(long)]
    pub renormalize: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Count correct, human-like and non-human predictions.
    Label {
        #[command(flatten)]
        data: DataArgs,
        /// Write the summary as JSON.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Train the detector, the typer and the MCP baseline.
    Train {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        model_dir: Option<PathBuf>,
    },
    /// Run the pipeline and write one verdict per record.
    Correct {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        model_dir: Option<PathBuf>,
        /// Verdict JSONL output.
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
        /// Use ground-truth labels in place of the learned gates.
        #[arg(long)]
        oracle: bool,
    },
    /// Compare base and pipeline predictions on labeled data.
    Evaluate {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "PATH")]
        verdicts: Option<PathBuf>,
        /// MCP baseline file to score alongside the detector.
        #[arg(long, value_name = "PATH")]
        mcp: Option<PathBuf>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Time the learned pipeline per sample.
    Bench {
        #[command(flatten)]
        data: DataArgs,
        #[arg(long, value_name = "DIR")]
        model_dir: Option<PathBuf>,
        /// Fail when the per-sample time exceeds this many milliseconds.
        #[arg(long, value_name = "MS")]
        budget_ms: Option<f64>,
        #[arg(long, value_name = "MS")]
        base_latency_ms: Option<f64>,
        #[arg(long, value_name = "N")]
        repetitions: Option<usize>,
        #[arg(long, value_name = "PATH")]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic dataset with its map and metadata.
    Synth {
        /// Dataset JSONL output; the map and metadata go next to it.
        #[arg(long, value_name = "PATH")]
        out: PathBuf,
        /// Start from a preset mixture (animal, isic, sicap).
        #[arg(long)]
        preset: Option<String>,
        #[arg(long, value_name = "N")]
        n_samples: Option<usize>,
        #[arg(long)]
        separability: Option<f64>,
    },
}

impl DataArgs {
    fn source(self, config: &RunConfig) -> CliResult<DataSource> {
        let dataset = require(self.dataset, &config.paths.dataset, "dataset")?;
        let map = require(self.map, &config.paths.map, "superclass map")?;
        Ok(DataSource {
            dataset,
            map: MapSource::parse(&map),
            sum_validation: if self.renormalize {
                SumValidation::Renormalize
            } else {
                config.input.sum_validation
            },
        })
    }
}

fn synth_config(
    base: &SynthConfig,
    preset: Option<String>,
    n_samples: Option<usize>,
    separability: Option<f64>,
) -> CliResult<SynthConfig> {
    let n = n_samples.unwrap_or(base.n_samples);
    let mut config = match preset.as_deref() {
        None => base.clone(),
        Some("animal") => SynthConfig::animal(n, base.seed),
        Some("isic") => SynthConfig::isic(n, base.seed),
        Some("sicap") => SynthConfig::sicap(n, base.seed),
        Some(other) => {
            return Err(CliError::Usage(format!(
                "unknown synth preset `{other}` (animal, isic, sicap)"
            )))
        }
    };
    config.n_samples = n;
    if let Some(s) = separability {
        config.separability = s;
    }
    config
        .validate()
        .map_err(|e| CliError::Usage(format!("synth: {e}")))?;
    Ok(config)
}

/// Runs one parsed invocation, writing human-readable output to `out`.
pub fn run(cli: Cli, out: &mut dyn Write) -> CliResult<()> {
    let mut config = match &cli.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    if let Some(seed) = cli.seed.or(config.seed) {
        config.apply_seed(seed);
    }
    config.validate()?;
    let io = |e| CliError::Runtime(format!("cannot write output: {e}"));

    match cli.command {
        Command::Label { data, out: json } => {
            let source = data.source(&config)?;
            let summary = commands::label(&source)?;
            if let Some(path) = json {
                commands::write_json(&path, &summary)?;
            }
            let map = source.map.load()?;
            write!(out, "{}", commands::render_label(&summary, &map)).map_err(io)?;
        }
        Command::Train { data, model_dir } => {
            let source = data.source(&config)?;
            let dir = require(model_dir, &config.paths.model_dir, "model directory")?;
            let report = commands::train(&source, &dir, &config.detector, &config.typer)?;
            writeln!(
                out,
                "trained on {} records; detector threshold {:.4}, typer threshold {:.4}; artifacts in {}",
                report.n_records,
                report.detector.decision_threshold,
                report.typer.decision_threshold,
                dir.display()
            )
            .map_err(io)?;
        }
        Command::Correct {
            data,
            model_dir,
            out: verdicts,
            oracle,
        } => {
            let source = data.source(&config)?;
            let path = require(verdicts, &config.paths.verdicts, "verdict output path")?;
            let dir = model_dir.or(config.paths.model_dir.clone());
            let summary = commands::correct(&source, dir.as_deref(), &path, oracle)?;
            let a = summary.actions;
            writeln!(
                out,
                "{} verdicts: pass_through={} safe_failure={} intervention={}",
                summary.n_records, a.pass_through, a.safe_failure, a.intervention
            )
            .map_err(io)?;
        }
        Command::Evaluate {
            data,
            verdicts,
            mcp,
            out: json,
        } => {
            let source = data.source(&config)?;
            let path = require(verdicts, &config.paths.verdicts, "verdicts file")?;
            let report = commands::evaluate_files(&source, &path, mcp.as_deref())?;
            if let Some(p) = json {
                commands::write_json(&p, &report)?;
            }
            writeln!(
                out,
                "{}\n{}",
                render_comparison(&report.base, &report.pipeline, &report.delta, "Superclass"),
                render_breakdown(&report.base_breakdown, &report.pipeline_breakdown)
            )
            .map_err(io)?;
        }
        Command::Bench {
            data,
            model_dir,
            budget_ms,
            base_latency_ms,
            repetitions,
            out: json,
        } => {
            let source = data.source(&config)?;
            let dir = require(model_dir, &config.paths.model_dir, "model directory")?;
            let budget = budget_ms.unwrap_or(config.bench.budget_ms);
            let base = base_latency_ms.unwrap_or(config.bench.base_latency_ms);
            if !(budget > 0.0 && base > 0.0) {
                return Err(CliError::Usage(
                    "budget and base latency must be positive".into(),
                ));
            }
            let reps = repetitions.unwrap_or(config.bench.repetitions);
            let report = commands::bench(&source, &dir, base, budget, reps)?;
            if let Some(p) = json {
                commands::write_json(&p, &report)?;
            }
            let o = report.overhead;
            writeln!(
                out,
                "pipeline {:.6} ms/sample, base {} ms/sample, overhead {:.3}%",
                o.pipeline_ms_per_sample, o.base_ms_per_sample, o.overhead_pct
            )
            .map_err(io)?;
            if !report.within_budget {
                return Err(CliError::Runtime(format!(
                    "pipeline time {:.6} ms/sample exceeds the {} ms budget",
                    o.pipeline_ms_per_sample, budget
                )));
            }
        }
        Command::Synth {
            out: path,
            preset,
            n_samples,
            separability,
        } => {
            let synth = synth_config(&config.synth, preset, n_samples, separability)?;
            let sidecar = commands::synth(&synth, &path)?;
            let c = sidecar.counts;
            writeln!(
                out,
                "wrote {} records to {} (correct {}, human-like {}, non-human {})",
                synth.n_samples,
                path.display(),
                c.correct,
                c.human_like,
                c.non_human
            )
            .map_err(io)?;
        }
    }
    Ok(())
}
