//! Evaluation: class and superclass accuracy, MCC, precision/recall/F1 and
//! the HL/NH error breakdown, plus plain-text renderings of the comparison
//! and breakdown tables.

use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{Dataset, ErrorKind};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct BinaryConfusion {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl BinaryConfusion {
    pub fn new(tp: u64, fp: u64, tn: u64, fn_: u64) -> Self {
        Self { tp, fp, tn, fn_ }
    }

    /// Tallies `predicted` flags against `actual` labels (positive = true).
    pub fn from_flags(predicted: &[bool], actual: &[bool]) -> Result<Self> {
        if predicted.len() != actual.len() {
            return Err(Error::LengthMismatch(format!(
                "{} predictions for {} labels",
                predicted.len(),
                actual.len()
            )));
        }
        let mut c = Self::default();
        for (&p, &a) in predicted.iter().zip(actual) {
            match (p, a) {
                (true, true) => c.tp += 1,
                (true, false) => c.fp += 1,
                (false, false) => c.tn += 1,
                (false, true) => c.fn_ += 1,
            }
        }
        Ok(c)
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// Classes swapped: positives become negatives.
    pub fn swapped(&self) -> Self {
        Self::new(self.tn, self.fn_, self.tp, self.fp)
    }
}

/// Matthews correlation coefficient; 0 when any marginal is empty.
pub fn mcc_binary(c: &BinaryConfusion) -> Result<f64> {
    if c.total() == 0 {
        return Err(Error::UndefinedMetric("all-zero confusion matrix".into()));
    }
    let (tp, fp, tn, fn_) = (c.tp as f64, c.fp as f64, c.tn as f64, c.fn_ as f64);
    let denom = ((tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_)).sqrt();
    if denom == 0.0 {
        return Ok(0.0);
    }
    Ok(((tp * tn - fp * fn_) / denom).clamp(-1.0, 1.0))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PrecisionRecall {
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

/// Precision, recall and F1 of the positive class; zero-denominator
/// components report 0.
pub fn precision_recall_f1(c: &BinaryConfusion) -> Result<PrecisionRecall> {
    if c.total() == 0 {
        return Err(Error::UndefinedMetric("all-zero confusion matrix".into()));
    }
    let ratio = |num: u64, den: u64| {
        if den == 0 {
            0.0
        } else {
            num as f64 / den as f64
        }
    };
    let precision = ratio(c.tp, c.tp + c.fp);
    let recall = ratio(c.tp, c.tp + c.fn_);
    let f1 = if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    };
    Ok(PrecisionRecall {
        precision,
        recall,
        f1,
    })
}

/// Summary of a binary detector against ground truth.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BinaryReport {
    pub confusion: BinaryConfusion,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub mcc: f64,
}

impl BinaryReport {
    pub fn from_confusion(confusion: BinaryConfusion) -> Result<Self> {
        let prf = precision_recall_f1(&confusion)?;
        Ok(Self {
            confusion,
            accuracy: (confusion.tp + confusion.tn) as f64 / confusion.total() as f64,
            precision: prf.precision,
            recall: prf.recall,
            f1: prf.f1,
            mcc: mcc_binary(&confusion)?,
        })
    }
}

/// Generalized (R_K) Matthews correlation over a square confusion matrix
/// indexed `[true][predicted]`; 0 when the denominator vanishes.
pub fn mcc_multiclass(confusion: &[Vec<u64>]) -> f64 {
    let k = confusion.len();
    let mut true_counts = vec![0.0; k];
    let mut pred_counts = vec![0.0; k];
    let mut correct = 0.0;
    let mut total = 0.0;
    for (t, row) in confusion.iter().enumerate() {
        for (p, &count) in row.iter().enumerate() {
            let c = count as f64;
            true_counts[t] += c;
            pred_counts[p] += c;
            total += c;
            if t == p {
                correct += c;
            }
        }
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let cov_tp = correct * total - dot(&pred_counts, &true_counts);
    let cov_pp = total * total - dot(&pred_counts, &pred_counts);
    let cov_tt = total * total - dot(&true_counts, &true_counts);
    let denom = (cov_pp * cov_tt).sqrt();
    if denom == 0.0 {
        0.0
    } else {
        (cov_tp / denom).clamp(-1.0, 1.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub n_total: u64,
    pub n_correct: u64,
    pub n_hl: u64,
    pub n_nh: u64,
    pub class_accuracy: f64,
    pub superclass_accuracy: f64,
    /// Multiclass MCC; absent when the report was built from counts alone.
    pub mcc: Option<f64>,
}

impl EvalReport {
    /// Report from outcome counts only (no confusion matrix, so no MCC).
    pub fn from_counts(n_correct: u64, n_hl: u64, n_nh: u64) -> Result<Self> {
        let n_total = n_correct + n_hl + n_nh;
        if n_total == 0 {
            return Err(Error::EmptyDataset);
        }
        Ok(Self {
            n_total,
            n_correct,
            n_hl,
            n_nh,
            class_accuracy: n_correct as f64 / n_total as f64,
            superclass_accuracy: (n_correct + n_hl) as f64 / n_total as f64,
            mcc: None,
        })
    }

    pub fn with_mcc(mut self, mcc: f64) -> Self {
        self.mcc = Some(mcc);
        self
    }

    pub fn n_errors(&self) -> u64 {
        self.n_hl + self.n_nh
    }
}

fn check_predictions(predictions: &[usize], dataset: &Dataset) -> Result<()> {
    if predictions.len() != dataset.len() {
        return Err(Error::LengthMismatch(format!(
            "{} predictions for {} records",
            predictions.len(),
            dataset.len()
        )));
    }
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    dataset.require_labels()?;
    let k = dataset.n_classes();
    if let Some(&bad) = predictions.iter().find(|&&p| p >= k) {
        return Err(Error::Shape {
            expected: k,
            got: bad + 1,
        });
    }
    Ok(())
}

fn truths(dataset: &Dataset) -> impl Iterator<Item = usize> + '_ {
    dataset
        .records()
        .iter()
        .map(|r| r.true_label.expect("labels checked"))
}

/// Scores one final prediction per record against the dataset's true labels.
pub fn evaluate(predictions: &[usize], dataset: &Dataset) -> Result<EvalReport> {
    check_predictions(predictions, dataset)?;
    let map = dataset.superclasses();
    let k = dataset.n_classes();
    let mut confusion = vec![vec![0u64; k]; k];
    let (mut correct, mut hl, mut nh) = (0, 0, 0);
    for (&pred, truth) in predictions.iter().zip(truths(dataset)) {
        confusion[truth][pred] += 1;
        match ErrorKind::classify(pred, truth, map) {
            ErrorKind::Correct => correct += 1,
            ErrorKind::HumanLike => hl += 1,
            ErrorKind::NonHuman => nh += 1,
        }
    }
    Ok(EvalReport::from_counts(correct, hl, nh)?.with_mcc(mcc_multiclass(&confusion)))
}

/// Error counts keyed by (true superclass, predicted superclass). Diagonal
/// cells hold human-like errors, off-diagonal cells non-human ones.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BreakdownTable {
    pub superclass_names: Vec<String>,
    pub cells: Vec<Vec<u64>>,
}

impl BreakdownTable {
    pub fn from_cells(superclass_names: Vec<String>, cells: Vec<Vec<u64>>) -> Result<Self> {
        let m = superclass_names.len();
        if cells.len() != m || cells.iter().any(|row| row.len() != m) {
            return Err(Error::LengthMismatch(format!("breakdown must be {m}x{m}")));
        }
        Ok(Self {
            superclass_names,
            cells,
        })
    }

    pub fn human_like(&self) -> u64 {
        (0..self.cells.len()).map(|i| self.cells[i][i]).sum()
    }

    pub fn non_human(&self) -> u64 {
        self.total() - self.human_like()
    }

    pub fn total(&self) -> u64 {
        self.cells.iter().flatten().sum()
    }
}

pub fn error_breakdown(predictions: &[usize], dataset: &Dataset) -> Result<BreakdownTable> {
    check_predictions(predictions, dataset)?;
    let map = dataset.superclasses();
    let m = map.n_superclasses();
    let mut cells = vec![vec![0u64; m]; m];
    for (&pred, truth) in predictions.iter().zip(truths(dataset)) {
        if pred != truth {
            cells[map.superclass_of(truth)][map.superclass_of(pred)] += 1;
        }
    }
    BreakdownTable::from_cells(map.superclass_names().to_vec(), cells)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MetricDelta {
    pub base: f64,
    pub pipeline: f64,
    pub absolute: f64,
    /// `(pipeline - base) / base`; absent when `base == 0`.
    pub relative: Option<f64>,
}

impl MetricDelta {
    pub fn new(base: f64, pipeline: f64) -> Self {
        Self {
            base,
            pipeline,
            absolute: pipeline - base,
            relative: (base != 0.0).then(|| (pipeline - base) / base),
        }
    }

    /// Relative change in percent.
    pub fn relative_pct(&self) -> Option<f64> {
        self.relative.map(|r| r * 100.0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaReport {
    pub n_correct: MetricDelta,
    pub n_nh: MetricDelta,
    pub n_hl: MetricDelta,
    pub class_accuracy: MetricDelta,
    pub superclass_accuracy: MetricDelta,
    pub mcc: Option<MetricDelta>,
}

pub fn compare_reports(base: &EvalReport, pipeline: &EvalReport) -> Result<DeltaReport> {
    if base.n_total != pipeline.n_total {
        return Err(Error::LengthMismatch(format!(
            "base covers {} samples, pipeline {}",
            base.n_total, pipeline.n_total
        )));
    }
    let counts = |f: fn(&EvalReport) -> u64| MetricDelta::new(f(base) as f64, f(pipeline) as f64);
    Ok(DeltaReport {
        n_correct: counts(|r| r.n_correct),
        n_nh: counts(|r| r.n_nh),
        n_hl: counts(|r| r.n_hl),
        class_accuracy: MetricDelta::new(base.class_accuracy, pipeline.class_accuracy),
        superclass_accuracy: MetricDelta::new(
            base.superclass_accuracy,
            pipeline.superclass_accuracy,
        ),
        mcc: match (base.mcc, pipeline.mcc) {
            (Some(b), Some(p)) => Some(MetricDelta::new(b, p)),
            _ => None,
        },
    })
}

/// Rounds half away from zero to `decimals` places.
pub fn round_half_up(value: f64, decimals: u32) -> f64 {
    let scale = 10f64.powi(decimals as i32);
    (value * scale).round() / scale
}

/// Percentage with two decimals, e.g. `0.76864` -> `"76.86%"`.
pub fn format_pct(fraction: f64) -> String {
    format!("{:.2}%", round_half_up(fraction * 100.0, 2))
}

fn format_count(n: u64) -> String {
    let digits = n.to_string();
    let mut out = String::new();
    for (i, ch) in digits.chars().enumerate() {
        if i > 0 && (digits.len() - i).is_multiple_of(3) {
            out.push(',');
        }
        out.push(ch);
    }
    out
}

fn format_delta(delta: &MetricDelta) -> String {
    match delta.relative_pct() {
        Some(pct) => format!("{:.2}%", round_half_up(pct, 2)),
        None => "n/a".into(),
    }
}

/// Base-versus-pipeline comparison table with relative deltas.
pub fn render_comparison(
    base: &EvalReport,
    pipeline: &EvalReport,
    delta: &DeltaReport,
    superclass_label: &str,
) -> String {
    let mut rows: Vec<[String; 4]> = vec![
        [
            "Metric".into(),
            "Base".into(),
            "Pipeline".into(),
            "Delta (%)".into(),
        ],
        [
            "# Correct".into(),
            format_count(base.n_correct),
            format_count(pipeline.n_correct),
            format_delta(&delta.n_correct),
        ],
        [
            "NH errors".into(),
            format_count(base.n_nh),
            format_count(pipeline.n_nh),
            format_delta(&delta.n_nh),
        ],
        [
            "HL errors".into(),
            format_count(base.n_hl),
            format_count(pipeline.n_hl),
            format_delta(&delta.n_hl),
        ],
        [
            "Class Acc.".into(),
            format_pct(base.class_accuracy),
            format_pct(pipeline.class_accuracy),
            format_delta(&delta.class_accuracy),
        ],
        [
            format!("{superclass_label} Acc."),
            format_pct(base.superclass_accuracy),
            format_pct(pipeline.superclass_accuracy),
            format_delta(&delta.superclass_accuracy),
        ],
    ];
    if let (Some(b), Some(p), Some(d)) = (base.mcc, pipeline.mcc, delta.mcc.as_ref()) {
        rows.push([
            "MCC".into(),
            format!("{b:.4}"),
            format!("{p:.4}"),
            format_delta(d),
        ]);
    }
    render_rows(&rows)
}

/// Side-by-side error breakdown (rows: true superclass, columns: predicted).
pub fn render_breakdown(base: &BreakdownTable, pipeline: &BreakdownTable) -> String {
    let names = &base.superclass_names;
    let mut header = vec![String::new()];
    for side in ["Base", "Pipeline"] {
        for name in names {
            header.push(format!("{side}: pred {name}"));
        }
    }
    let mut rows = vec![header];
    for (t, name) in names.iter().enumerate() {
        let mut row = vec![format!("True {name}")];
        for table in [base, pipeline] {
            for p in 0..names.len() {
                let tag = if t == p { "HL" } else { "NH" };
                row.push(format!("{} ({tag})", format_count(table.cells[t][p])));
            }
        }
        rows.push(row);
    }
    render_rows(&rows)
}

fn render_rows<R: AsRef<[String]>>(rows: &[R]) -> String {
    let n_cols = rows.iter().map(|r| r.as_ref().len()).max().unwrap_or(0);
    let widths: Vec<usize> = (0..n_cols)
        .map(|c| {
            rows.iter()
                .filter_map(|r| r.as_ref().get(c))
                .map(|s| s.chars().count())
                .max()
                .unwrap_or(0)
        })
        .collect();
    let mut out = String::new();
    for (i, row) in rows.iter().enumerate() {
        let cells: Vec<String> = row
            .as_ref()
            .iter()
            .zip(&widths)
            .enumerate()
            .map(|(c, (s, &w))| {
                if c == 0 {
                    format!("{s:<w$}")
                } else {
                    format!("{s:>w$}")
                }
            })
            .collect();
        let _ = writeln!(out, "{}", cells.join(" | ").trim_end());
        if i == 0 {
            let _ = writeln!(
                out,
                "{}",
                "-".repeat(widths.iter().sum::<usize>() + 3 * (n_cols.saturating_sub(1)))
            );
        }
    }
    out
}
