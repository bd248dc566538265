//! Superclass flip and the three-way mitigation pipeline.
//!
//! | D | T | action       | final prediction          |
//! |---|---|--------------|---------------------------|
//! | 0 | - | pass-through | base                      |
//! | 1 | 0 | safe failure | base                      |
//! | 1 | 1 | intervention | best class outside base's superclass |

use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::detector::DetectorModel;
use crate::error::{Error, Result};
use crate::typer::TyperModel;
use crate::types::{argmax, label_error_kind, Dataset, ErrorKind, ProbRecord, SuperclassMap};

/// Most probable class outside the superclass of `base_pred`; lowest index
/// on ties. With more than two superclasses every other superclass is a
/// candidate.
pub fn superclass_flip(probs: &[f64], base_pred: usize, map: &SuperclassMap) -> Result<usize> {
    if probs.len() != map.n_classes() {
        return Err(Error::Shape {
            expected: map.n_classes(),
            got: probs.len(),
        });
    }
    if base_pred >= probs.len() {
        return Err(Error::Shape {
            expected: probs.len(),
            got: base_pred + 1,
        });
    }
    let own = map.superclass_of(base_pred);
    let alternatives: Vec<usize> = (0..probs.len())
        .filter(|&c| map.superclass_of(c) != own)
        .collect();
    if alternatives.is_empty() {
        return Err(Error::PolicyInapplicable(format!(
            "every class belongs to superclass `{}`",
            map.superclass_names()[own]
        )));
    }
    let restricted: Vec<f64> = alternatives.iter().map(|&c| probs[c]).collect();
    let best = argmax(&restricted).ok_or_else(|| Error::InvalidRecord {
        id: None,
        reason: "non-finite probability".into(),
    })?;
    Ok(alternatives[best])
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Action {
    PassThrough,
    SafeFailure,
    Intervention,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(into = "VerdictLine", try_from = "VerdictLine")]
pub struct PipelineVerdict {
    pub id: String,
    pub base_pred: usize,
    pub detector_flag: bool,
    /// `None` when the typer did not run (`D = 0`).
    pub typer_flag: Option<bool>,
    pub action: Action,
    pub final_pred: usize,
}

#[derive(Serialize, Deserialize)]
struct VerdictLine {
    id: String,
    base_pred: usize,
    #[serde(rename = "D")]
    d: u8,
    #[serde(rename = "T")]
    t: Option<u8>,
    action: Action,
    final_pred: usize,
}

impl From<PipelineVerdict> for VerdictLine {
    fn from(v: PipelineVerdict) -> Self {
        VerdictLine {
            id: v.id,
            base_pred: v.base_pred,
            d: v.detector_flag.into(),
            t: v.typer_flag.map(u8::from),
            action: v.action,
            final_pred: v.final_pred,
        }
    }
}

impl TryFrom<VerdictLine> for PipelineVerdict {
    type Error = String;

    fn try_from(line: VerdictLine) -> std::result::Result<Self, String> {
        let bit = |v: u8, name: &str| match v {
            0 => Ok(false),
            1 => Ok(true),
            other => Err(format!("{name} must be 0 or 1, got {other}")),
        };
        let verdict = PipelineVerdict {
            id: line.id,
            base_pred: line.base_pred,
            detector_flag: bit(line.d, "D")?,
            typer_flag: line.t.map(|t| bit(t, "T")).transpose()?,
            action: line.action,
            final_pred: line.final_pred,
        };
        verdict.check()?;
        Ok(verdict)
    }
}

impl PipelineVerdict {
    /// Checks the branch invariants linking D, T, action and final_pred.
    pub fn check(&self) -> std::result::Result<(), String> {
        let expected = match (self.detector_flag, self.typer_flag) {
            (false, None) => Action::PassThrough,
            (true, Some(false)) => Action::SafeFailure,
            (true, Some(true)) => Action::Intervention,
            (d, t) => return Err(format!("verdict `{}`: inconsistent D={d} T={t:?}", self.id)),
        };
        if self.action != expected {
            return Err(format!(
                "verdict `{}`: action {:?} does not match D/T",
                self.id, self.action
            ));
        }
        if self.action != Action::Intervention && self.final_pred != self.base_pred {
            return Err(format!(
                "verdict `{}`: final_pred changed without intervention",
                self.id
            ));
        }
        Ok(())
    }
}

/// Applies the branch logic given `D` and a lazily evaluated `T`.
fn decide(
    record: &ProbRecord,
    map: &SuperclassMap,
    detector_flag: bool,
    typer: impl FnOnce() -> Result<bool>,
) -> Result<PipelineVerdict> {
    let base_pred = record.predicted_class()?;
    let (typer_flag, action, final_pred) = if !detector_flag {
        (None, Action::PassThrough, base_pred)
    } else if !typer()? {
        (Some(false), Action::SafeFailure, base_pred)
    } else {
        (
            Some(true),
            Action::Intervention,
            superclass_flip(&record.probs, base_pred, map)?,
        )
    };
    Ok(PipelineVerdict {
        id: record.id.clone(),
        base_pred,
        detector_flag,
        typer_flag,
        action,
        final_pred,
    })
}

fn check_dims(dataset: &Dataset, detector: &DetectorModel, typer: &TyperModel) -> Result<()> {
    let k = dataset.n_classes();
    for n in [detector.gate().n_classes(), typer.gate().n_classes()] {
        if n != k {
            return Err(Error::Shape {
                expected: n,
                got: k,
            });
        }
    }
    Ok(())
}

/// Learned pipeline: one verdict per record, in input order. The typer runs
/// only on detector-flagged records. True labels are never read.
pub fn run_pipeline(
    dataset: &Dataset,
    detector: &DetectorModel,
    typer: &TyperModel,
) -> Result<Vec<PipelineVerdict>> {
    check_dims(dataset, detector, typer)?;
    let map = dataset.superclasses();
    dataset
        .records()
        .iter()
        .map(|r| decide(r, map, detector.detect(r)?, || typer.classify_error(r)))
        .collect()
}

/// Ground-truth pipeline: `D = 1` iff the base prediction is wrong, `T = 1`
/// iff the error is non-human. An upper bound for the learned pipeline.
pub fn run_oracle_pipeline(dataset: &Dataset) -> Result<Vec<PipelineVerdict>> {
    dataset.require_labels()?;
    let map = dataset.superclasses();
    dataset
        .records()
        .iter()
        .map(|r| {
            let kind = label_error_kind(r, map)?;
            decide(r, map, kind.is_error(), || Ok(kind == ErrorKind::NonHuman))
        })
        .collect()
}

pub fn final_predictions(verdicts: &[PipelineVerdict]) -> Vec<usize> {
    verdicts.iter().map(|v| v.final_pred).collect()
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ActionCounts {
    pub pass_through: u64,
    pub safe_failure: u64,
    pub intervention: u64,
}

impl ActionCounts {
    pub fn tally(verdicts: &[PipelineVerdict]) -> Self {
        let mut c = Self::default();
        for v in verdicts {
            match v.action {
                Action::PassThrough => c.pass_through += 1,
                Action::SafeFailure => c.safe_failure += 1,
                Action::Intervention => c.intervention += 1,
            }
        }
        c
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OverheadReport {
    pub pipeline_ms_per_sample: f64,
    pub base_ms_per_sample: f64,
    /// Pipeline time relative to base latency, in percent.
    pub overhead_pct: f64,
}

impl OverheadReport {
    pub fn new(pipeline_ms_per_sample: f64, base_ms_per_sample: f64) -> Result<Self> {
        if !(base_ms_per_sample > 0.0 && base_ms_per_sample.is_finite()) {
            return Err(Error::Config(format!(
                "base latency must be positive, got {base_ms_per_sample} ms"
            )));
        }
        Ok(Self {
            pipeline_ms_per_sample,
            base_ms_per_sample,
            overhead_pct: 100.0 * pipeline_ms_per_sample / base_ms_per_sample,
        })
    }
}

pub const MIN_REPETITIONS: usize = 5;

/// Wall-clock cost of the learned pipeline (detector, conditional typer and
/// flip; no serialization), amortized per sample. Runs at least
/// [`MIN_REPETITIONS`] passes and keeps the median per-sample mean.
pub fn measure_overhead(
    dataset: &Dataset,
    detector: &DetectorModel,
    typer: &TyperModel,
    base_latency_per_sample: Duration,
    repetitions: usize,
) -> Result<OverheadReport> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let base_ms = base_latency_per_sample.as_secs_f64() * 1e3;
    if base_ms <= 0.0 {
        return Err(Error::Config("base latency must be positive".into()));
    }
    check_dims(dataset, detector, typer)?;
    let n = dataset.len() as f64;
    let mut per_sample_ms: Vec<f64> = (0..repetitions.max(MIN_REPETITIONS))
        .map(|_| {
            let start = Instant::now();
            let verdicts = run_pipeline(dataset, detector, typer);
            let elapsed = start.elapsed();
            std::hint::black_box(verdicts).map(|_| elapsed.as_secs_f64() * 1e3 / n)
        })
        .collect::<Result<_>>()?;
    per_sample_ms.sort_by(f64::total_cmp);
    let mid = per_sample_ms.len() / 2;
    let median = if per_sample_ms.len() % 2 == 1 {
        per_sample_ms[mid]
    } else {
        (per_sample_ms[mid - 1] + per_sample_ms[mid]) / 2.0
    };
    OverheadReport::new(median, base_ms)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSet;
    use crate::gate::GateModel;
    use crate::gbdt::GbdtModel;
    use crate::types::SumValidation;

    fn map4() -> SuperclassMap {
        SuperclassMap::from_sizes(&[2, 2]).unwrap()
    }

    #[test]
    fn flip_examples() {
        let map = map4();
        assert_eq!(superclass_flip(&[0.1, 0.2, 0.5, 0.2], 2, &map).unwrap(), 1);
        assert_eq!(superclass_flip(&[0.4, 0.1, 0.3, 0.2], 0, &map).unwrap(), 2);
        let three = SuperclassMap::from_sizes(&[1, 1, 1]).unwrap();
        assert_eq!(superclass_flip(&[0.5, 0.3, 0.2], 0, &three).unwrap(), 1);
        assert_eq!(superclass_flip(&[0.5, 0.2, 0.3], 0, &three).unwrap(), 2);
        // ties inside the alternative superclass go to the lowest index
        assert_eq!(superclass_flip(&[0.4, 0.2, 0.2, 0.2], 0, &map).unwrap(), 2);
        assert!(superclass_flip(&[0.5, 0.5], 0, &map).is_err());
    }

    fn constant_gate(flag: bool) -> GateModel {
        // logistic(+-10) is far from the 0.5 threshold
        GateModel::new(
            GbdtModel::constant(if flag { 10.0 } else { -10.0 }, 4),
            0.5,
            FeatureSet::Raw,
        )
    }

    fn one_record(probs: &[f64], label: Option<usize>) -> Dataset {
        Dataset::new(
            vec![ProbRecord::new("r", probs.to_vec(), label)],
            map4(),
            SumValidation::Strict,
        )
        .unwrap()
    }

    #[test]
    fn pipeline_branches() {
        let ds = one_record(&[0.1, 0.2, 0.5, 0.2], None);
        let run = |d: bool, t: bool| {
            run_pipeline(
                &ds,
                &DetectorModel(constant_gate(d)),
                &TyperModel(constant_gate(t)),
            )
            .unwrap()
            .remove(0)
        };
        let v = run(false, true);
        assert_eq!(
            (v.action, v.typer_flag, v.final_pred),
            (Action::PassThrough, None, 2)
        );
        let v = run(true, false);
        assert_eq!(
            (v.action, v.typer_flag, v.final_pred),
            (Action::SafeFailure, Some(false), 2)
        );
        let v = run(true, true);
        assert_eq!(
            (v.action, v.typer_flag, v.final_pred),
            (Action::Intervention, Some(true), 1)
        );
        for v in [run(false, false), run(true, false), run(true, true)] {
            v.check().unwrap();
        }
    }

    #[test]
    fn pipeline_rejects_dimension_mismatch() {
        let ds = one_record(&[0.1, 0.2, 0.5, 0.2], None);
        let wide = GateModel::new(GbdtModel::constant(0.0, 5), 0.5, FeatureSet::Raw);
        let err = run_pipeline(&ds, &DetectorModel(wide), &TyperModel(constant_gate(true)));
        assert!(matches!(err, Err(Error::Shape { .. })));
    }

    #[test]
    fn oracle_examples() {
        let correct = run_oracle_pipeline(&one_record(&[0.6, 0.1, 0.2, 0.1], Some(0))).unwrap();
        assert_eq!(correct[0].action, Action::PassThrough);

        let nh = run_oracle_pipeline(&one_record(&[0.1, 0.1, 0.6, 0.2], Some(0))).unwrap();
        assert_eq!(nh[0].action, Action::Intervention);
        assert_eq!(map4().superclass_of(nh[0].final_pred), 0);

        let hl = run_oracle_pipeline(&one_record(&[0.1, 0.6, 0.2, 0.1], Some(0))).unwrap();
        assert_eq!((hl[0].action, hl[0].final_pred), (Action::SafeFailure, 1));

        assert!(run_oracle_pipeline(&one_record(&[0.6, 0.1, 0.2, 0.1], None)).is_err());
    }

    #[test]
    fn verdict_line_format() {
        let v = PipelineVerdict {
            id: "x".into(),
            base_pred: 2,
            detector_flag: true,
            typer_flag: Some(true),
            action: Action::Intervention,
            final_pred: 1,
        };
        let line = serde_json::to_string(&v).unwrap();
        assert_eq!(
            line,
            r#"{"id":"x","base_pred":2,"D":1,"T":1,"action":"intervention","final_pred":1}"#
        );
        assert_eq!(serde_json::from_str::<PipelineVerdict>(&line).unwrap(), v);
        let pass =
            r#"{"id":"y","base_pred":0,"D":0,"T":null,"action":"pass_through","final_pred":0}"#;
        assert!(serde_json::from_str::<PipelineVerdict>(pass).is_ok());
        let bad =
            r#"{"id":"y","base_pred":0,"D":0,"T":null,"action":"pass_through","final_pred":3}"#;
        assert!(serde_json::from_str::<PipelineVerdict>(bad).is_err());
    }

    #[test]
    fn overhead_arithmetic() {
        let r = OverheadReport::new(0.1, 6.25).unwrap();
        assert!((r.overhead_pct - 1.6).abs() < 1e-12);
        assert!((OverheadReport::new(0.1, 0.1).unwrap().overhead_pct - 100.0).abs() < 1e-12);
        assert!(OverheadReport::new(0.1, 0.0).is_err());
    }

    #[test]
    fn overhead_needs_records() {
        let empty = Dataset::new(vec![], map4(), SumValidation::Strict).unwrap();
        let err = measure_overhead(
            &empty,
            &DetectorModel(constant_gate(true)),
            &TyperModel(constant_gate(true)),
            Duration::from_micros(6250),
            5,
        );
        assert!(matches!(err, Err(Error::EmptyDataset)));
    }
}
