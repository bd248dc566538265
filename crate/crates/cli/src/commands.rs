//! Subcommand implementations. Each returns its machine-readable report;
//! printing is left to the caller.

use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Duration;

use flipguard::detector::{build_detector_training_set, fit_mcp, McpBaseline};
use flipguard::gate::{GateModel, TrainingMeta, TuningReport};
use flipguard::gbdt::{logit, PRIOR_EPS};
use flipguard::metrics::{
    compare_reports, error_breakdown, evaluate, BinaryConfusion, BinaryReport, BreakdownTable,
    DeltaReport, EvalReport,
};
use flipguard::policy::{
    final_predictions, measure_overhead, run_oracle_pipeline, run_pipeline, ActionCounts,
    OverheadReport, PipelineVerdict,
};
use flipguard::synth::{generate, KindCounts, SynthConfig, SynthSidecar};
use flipguard::typer::build_typer_training_set;
use flipguard::{
    load_dataset, train_detector, train_typer, Dataset, DetectorModel, GbdtModel, StageConfig,
    SumValidation, SuperclassMap, TyperModel,
};
use log::warn;
use serde::{Deserialize, Serialize};

use crate::config::{open_input, MapSource};
use crate::error::{CliError, CliResult};

pub const DETECTOR_FILE: &str = "detector.json";
pub const TYPER_FILE: &str = "typer.json";
pub const MCP_FILE: &str = "mcp.json";
pub const TRAIN_REPORT_FILE: &str = "train_report.json";

/// Dataset location plus the map it is read against.
#[derive(Debug, Clone)]
pub struct DataSource {
    pub dataset: PathBuf,
    pub map: MapSource,
    pub sum_validation: SumValidation,
}

impl DataSource {
    /// Checks that every referenced file exists before any work starts.
    pub fn check(&self) -> CliResult<()> {
        if let MapSource::File(p) = &self.map {
            open_input(p, "superclass map")?;
        }
        open_input(&self.dataset, "dataset")?;
        Ok(())
    }

    pub fn load(&self) -> CliResult<Dataset> {
        let map = self.map.load()?;
        let file = open_input(&self.dataset, "dataset")?;
        Ok(load_dataset(
            BufReader::new(file),
            &map,
            self.sum_validation,
        )?)
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut bytes = serde_json::to_vec_pretty(value).map_err(flipguard::Error::from)?;
    bytes.push(b'\n');
    write_bytes(path, &bytes)
}

fn write_bytes(path: &Path, bytes: &[u8]) -> CliResult<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
    }
    fs::write(path, bytes).map_err(|e| CliError::io(path, e))
}

fn read_bytes(path: &Path, what: &str) -> CliResult<Vec<u8>> {
    open_input(path, what)?;
    fs::read(path).map_err(|e| CliError::io(path, e))
}

// ---------------------------------------------------------------- label

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelSummary {
    pub n_records: u64,
    pub counts: KindCounts,
    pub n_errors: u64,
    /// Share of errors that are non-human; absent without errors.
    pub nh_share_of_errors: Option<f64>,
    pub report: EvalReport,
    pub breakdown: BreakdownTable,
}

pub fn label(source: &DataSource) -> CliResult<LabelSummary> {
    source.check()?;
    let dataset = source.load()?;
    let kinds = dataset.error_kinds()?;
    let counts = KindCounts::tally(&kinds);
    let base = base_predictions(&dataset)?;
    let n_errors = counts.errors();
    Ok(LabelSummary {
        n_records: dataset.len() as u64,
        counts,
        n_errors,
        nh_share_of_errors: (n_errors > 0).then(|| counts.non_human as f64 / n_errors as f64),
        report: evaluate(&base, &dataset)?,
        breakdown: error_breakdown(&base, &dataset)?,
    })
}

fn base_predictions(dataset: &Dataset) -> CliResult<Vec<usize>> {
    Ok(dataset
        .records()
        .iter()
        .map(|r| r.predicted_class())
        .collect::<flipguard::Result<_>>()?)
}

// ---------------------------------------------------------------- train

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StageReport {
    pub threshold_policy: String,
    pub decision_threshold: f64,
    pub degenerate: bool,
    pub warnings: Vec<String>,
    pub training_meta: TrainingMeta,
    pub loss_trace: Vec<f64>,
    /// Held-out fold used to pick the threshold (precision-floor policy only).
    pub tuning: Option<TuningReport>,
    /// Flag quality on the gate's own training rows.
    pub training_fit: Option<BinaryReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub n_records: u64,
    pub n_classes: usize,
    pub counts: KindCounts,
    pub detector: StageReport,
    pub typer: StageReport,
    pub mcp: McpBaseline,
}

pub struct TrainedModels {
    pub detector: DetectorModel,
    pub typer: TyperModel,
    pub mcp: McpBaseline,
    pub report: TrainReport,
}

fn fit_report(
    gate: &GateModel,
    rows: &[Vec<f64>],
    labels: &[bool],
) -> CliResult<Option<BinaryReport>> {
    if rows.is_empty() {
        return Ok(None);
    }
    let flags = rows
        .iter()
        .map(|r| gate.flag(r))
        .collect::<flipguard::Result<Vec<_>>>()?;
    let confusion = BinaryConfusion::from_flags(&flags, labels)?;
    Ok(Some(BinaryReport::from_confusion(confusion)?))
}

pub fn train_models(
    dataset: &Dataset,
    detector_config: &StageConfig,
    typer_config: &StageConfig,
) -> CliResult<TrainedModels> {
    if dataset.is_empty() {
        return Err(flipguard::Error::EmptyDataset.into());
    }
    let counts = KindCounts::tally(&dataset.error_kinds()?);

    let det = train_detector(dataset, detector_config)?;
    let (rows, labels) = build_detector_training_set(dataset)?;
    let detector_report = StageReport {
        threshold_policy: detector_config.threshold.to_string(),
        decision_threshold: det.model.gate().decision_threshold,
        degenerate: det.degenerate,
        warnings: det.warnings.clone(),
        training_meta: det.model.gate().training_meta,
        loss_trace: det.loss_trace.clone(),
        tuning: det.tuning.clone(),
        training_fit: fit_report(det.model.gate(), &rows, &labels)?,
    };

    let (typer, typer_report) = match train_typer(dataset, typer_config) {
        Ok(fit) => {
            let (rows, labels, _) = build_typer_training_set(dataset)?;
            let report = StageReport {
                threshold_policy: typer_config.threshold.to_string(),
                decision_threshold: fit.model.gate().decision_threshold,
                degenerate: fit.degenerate,
                warnings: fit.warnings.clone(),
                training_meta: fit.model.gate().training_meta,
                loss_trace: fit.loss_trace.clone(),
                tuning: fit.tuning.clone(),
                training_fit: fit_report(fit.model.gate(), &rows, &labels)?,
            };
            (fit.model, report)
        }
        Err(flipguard::Error::EmptyTrainingSet(reason)) => {
            // Nothing to learn from: a typer that never asks for a flip.
            let gbdt = GbdtModel::constant(
                logit(PRIOR_EPS),
                typer_config.features.n_features(dataset.n_classes()),
            );
            let gate = GateModel::new(gbdt, 0.5, typer_config.features);
            let warning = format!("typer untrained ({reason}); every detected error is kept");
            let report = StageReport {
                threshold_policy: typer_config.threshold.to_string(),
                decision_threshold: gate.decision_threshold,
                degenerate: true,
                warnings: vec![warning],
                training_meta: gate.training_meta,
                loss_trace: Vec::new(),
                tuning: None,
                training_fit: None,
            };
            (TyperModel(gate), report)
        }
        Err(e) => return Err(e.into()),
    };
    for w in detector_report
        .warnings
        .iter()
        .chain(&typer_report.warnings)
    {
        warn!("{w}");
    }

    let mcp = fit_mcp(dataset)?;
    Ok(TrainedModels {
        report: TrainReport {
            n_records: dataset.len() as u64,
            n_classes: dataset.n_classes(),
            counts,
            detector: detector_report,
            typer: typer_report,
            mcp,
        },
        detector: det.model,
        typer,
        mcp,
    })
}

pub fn train(
    source: &DataSource,
    model_dir: &Path,
    detector_config: &StageConfig,
    typer_config: &StageConfig,
) -> CliResult<TrainReport> {
    source.check()?;
    let dataset = source.load()?;
    let models = train_models(&dataset, detector_config, typer_config)?;
    write_bytes(&model_dir.join(DETECTOR_FILE), &models.detector.to_json())?;
    write_bytes(&model_dir.join(TYPER_FILE), &models.typer.to_json())?;
    write_json(&model_dir.join(MCP_FILE), &models.mcp)?;
    write_json(&model_dir.join(TRAIN_REPORT_FILE), &models.report)?;
    Ok(models.report)
}

pub fn load_models(model_dir: &Path) -> CliResult<(DetectorModel, TyperModel)> {
    let detector =
        DetectorModel::from_json(&read_bytes(&model_dir.join(DETECTOR_FILE), "detector")?)?;
    let typer = TyperModel::from_json(&read_bytes(&model_dir.join(TYPER_FILE), "typer")?)?;
    Ok((detector, typer))
}

// ---------------------------------------------------------------- correct

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CorrectSummary {
    pub n_records: u64,
    pub oracle: bool,
    pub actions: ActionCounts,
}

pub fn write_verdicts(path: &Path, verdicts: &[PipelineVerdict]) -> CliResult<()> {
    let mut out = Vec::new();
    for v in verdicts {
        serde_json::to_writer(&mut out, v).map_err(flipguard::Error::from)?;
        out.push(b'\n');
    }
    write_bytes(path, &out)
}

pub fn read_verdicts(path: &Path) -> CliResult<Vec<PipelineVerdict>> {
    let reader = BufReader::new(open_input(path, "verdicts")?);
    let mut verdicts = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| CliError::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let v = serde_json::from_str(&line).map_err(|e| flipguard::Error::Line {
            line: i + 1,
            reason: e.to_string(),
        })?;
        verdicts.push(v);
    }
    Ok(verdicts)
}

pub fn correct(
    source: &DataSource,
    model_dir: Option<&Path>,
    out: &Path,
    oracle: bool,
) -> CliResult<CorrectSummary> {
    source.check()?;
    let verdicts = if oracle {
        run_oracle_pipeline(&source.load()?)?
    } else {
        let dir = model_dir.ok_or_else(|| {
            CliError::Usage("no model directory given (--model-dir or paths.model_dir)".into())
        })?;
        let (detector, typer) = load_models(dir)?;
        run_pipeline(&source.load()?, &detector, &typer)?
    };
    write_verdicts(out, &verdicts)?;
    Ok(CorrectSummary {
        n_records: verdicts.len() as u64,
        oracle,
        actions: ActionCounts::tally(&verdicts),
    })
}

// ---------------------------------------------------------------- evaluate

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    /// Detector flags (the verdicts' `D`) scored against actual errors.
    pub detector: BinaryReport,
    pub mcp: Option<BinaryReport>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvaluationReport {
    pub base: EvalReport,
    pub pipeline: EvalReport,
    pub delta: DeltaReport,
    pub base_breakdown: BreakdownTable,
    pub pipeline_breakdown: BreakdownTable,
    pub actions: ActionCounts,
    pub detection: DetectionReport,
}

/// Puts verdicts in dataset order; every record needs exactly one verdict
/// whose base prediction agrees with the record.
fn align_verdicts(
    dataset: &Dataset,
    verdicts: Vec<PipelineVerdict>,
) -> CliResult<Vec<PipelineVerdict>> {
    let mismatch = |msg: String| CliError::Runtime(format!("verdicts do not match dataset: {msg}"));
    if verdicts.len() != dataset.len() {
        return Err(mismatch(format!(
            "{} verdicts for {} records",
            verdicts.len(),
            dataset.len()
        )));
    }
    let mut by_id: HashMap<String, PipelineVerdict> = HashMap::with_capacity(verdicts.len());
    for v in verdicts {
        if let Some(dup) = by_id.insert(v.id.clone(), v) {
            return Err(mismatch(format!("duplicate verdict id `{}`", dup.id)));
        }
    }
    let k = dataset.n_classes();
    dataset
        .records()
        .iter()
        .map(|r| {
            let v = by_id
                .remove(&r.id)
                .ok_or_else(|| mismatch(format!("no verdict for record `{}`", r.id)))?;
            if v.base_pred != r.predicted_class()? || v.final_pred >= k {
                return Err(mismatch(format!(
                    "verdict `{}` disagrees with its record",
                    r.id
                )));
            }
            Ok(v)
        })
        .collect()
}

pub fn evaluate_verdicts(
    dataset: &Dataset,
    verdicts: Vec<PipelineVerdict>,
    mcp: Option<&McpBaseline>,
) -> CliResult<EvaluationReport> {
    dataset.require_labels()?;
    let verdicts = align_verdicts(dataset, verdicts)?;
    let base_preds = base_predictions(dataset)?;
    let final_preds = final_predictions(&verdicts);
    let base = evaluate(&base_preds, dataset)?;
    let pipeline = evaluate(&final_preds, dataset)?;
    let delta = compare_reports(&base, &pipeline)?;

    let actual: Vec<bool> = dataset
        .error_kinds()?
        .iter()
        .map(|k| k.is_error())
        .collect();
    let detector_flags: Vec<bool> = verdicts.iter().map(|v| v.detector_flag).collect();
    let detector =
        BinaryReport::from_confusion(BinaryConfusion::from_flags(&detector_flags, &actual)?)?;
    let mcp = match mcp {
        Some(m) => {
            let flags = dataset
                .records()
                .iter()
                .map(|r| m.flag(r))
                .collect::<flipguard::Result<Vec<_>>>()?;
            Some(BinaryReport::from_confusion(BinaryConfusion::from_flags(
                &flags, &actual,
            )?)?)
        }
        None => None,
    };
    Ok(EvaluationReport {
        base_breakdown: error_breakdown(&base_preds, dataset)?,
        pipeline_breakdown: error_breakdown(&final_preds, dataset)?,
        actions: ActionCounts::tally(&verdicts),
        base,
        pipeline,
        delta,
        detection: DetectionReport { detector, mcp },
    })
}

pub fn evaluate_files(
    source: &DataSource,
    verdicts: &Path,
    mcp: Option<&Path>,
) -> CliResult<EvaluationReport> {
    source.check()?;
    open_input(verdicts, "verdicts")?;
    let baseline: Option<McpBaseline> = match mcp {
        Some(path) => Some(
            serde_json::from_slice(&read_bytes(path, "MCP baseline")?)
                .map_err(flipguard::Error::from)?,
        ),
        None => None,
    };
    let dataset = source.load()?;
    evaluate_verdicts(&dataset, read_verdicts(verdicts)?, baseline.as_ref())
}

// ---------------------------------------------------------------- bench

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchReport {
    pub n_records: u64,
    pub n_classes: usize,
    pub repetitions: usize,
    pub budget_ms: f64,
    pub within_budget: bool,
    pub overhead: OverheadReport,
}

pub fn bench_models(
    dataset: &Dataset,
    detector: &DetectorModel,
    typer: &TyperModel,
    base_latency_ms: f64,
    budget_ms: f64,
    repetitions: usize,
) -> CliResult<BenchReport> {
    let base = Duration::from_secs_f64(base_latency_ms / 1e3);
    let overhead = measure_overhead(dataset, detector, typer, base, repetitions)?;
    Ok(BenchReport {
        n_records: dataset.len() as u64,
        n_classes: dataset.n_classes(),
        repetitions: repetitions.max(flipguard::policy::MIN_REPETITIONS),
        budget_ms,
        within_budget: overhead.pipeline_ms_per_sample <= budget_ms,
        overhead,
    })
}

pub fn bench(
    source: &DataSource,
    model_dir: &Path,
    base_latency_ms: f64,
    budget_ms: f64,
    repetitions: usize,
) -> CliResult<BenchReport> {
    source.check()?;
    let (detector, typer) = load_models(model_dir)?;
    let dataset = source.load()?;
    bench_models(
        &dataset,
        &detector,
        &typer,
        base_latency_ms,
        budget_ms,
        repetitions,
    )
}

// ---------------------------------------------------------------- synth

/// Files written by `synth` next to the dataset path.
pub fn synth_paths(out: &Path) -> (PathBuf, PathBuf) {
    let stem = out
        .file_stem()
        .unwrap_or_default()
        .to_string_lossy()
        .into_owned();
    let dir = out.parent().unwrap_or(Path::new(""));
    (
        dir.join(format!("{stem}.map.json")),
        dir.join(format!("{stem}.meta.json")),
    )
}

pub fn synth(config: &SynthConfig, out: &Path) -> CliResult<SynthSidecar> {
    let generated = generate(config)?;
    let (map_path, meta_path) = synth_paths(out);
    let mut data = Vec::new();
    generated.dataset.write_jsonl(&mut data)?;
    write_bytes(out, &data)?;
    write_json(&map_path, generated.dataset.superclasses())?;
    let sidecar = generated.sidecar(config);
    write_json(&meta_path, &sidecar)?;
    Ok(sidecar)
}

/// Renders a label summary for the terminal.
pub fn render_label(summary: &LabelSummary, map: &SuperclassMap) -> String {
    let mut out = Vec::new();
    let c = &summary.counts;
    let _ = writeln!(out, "records      {}", summary.n_records);
    let _ = writeln!(out, "correct      {}", c.correct);
    let _ = writeln!(out, "human-like   {}", c.human_like);
    let _ = writeln!(out, "non-human    {}", c.non_human);
    if let Some(share) = summary.nh_share_of_errors {
        let _ = writeln!(
            out,
            "NH share of errors {}",
            flipguard::metrics::format_pct(share)
        );
    }
    let names = map.superclass_names();
    let _ = writeln!(out, "errors (rows: true superclass, columns: predicted):");
    let header: Vec<String> = names.iter().map(|n| format!("{n:>10}")).collect();
    let _ = writeln!(out, "  {:<12}{}", "", header.join(""));
    for (t, name) in names.iter().enumerate() {
        let cells: Vec<String> = summary.breakdown.cells[t]
            .iter()
            .map(|c| format!("{c:>10}"))
            .collect();
        let _ = writeln!(out, "  {name:<12}{}", cells.join(""));
    }
    String::from_utf8(out).expect("ascii output")
}
