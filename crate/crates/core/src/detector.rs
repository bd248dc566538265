//! Error detector `D(x)`: flags base predictions that are likely wrong.
//! Also hosts the maximum-class-probability (MCP) baseline.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::{train_gate, GateFit, GateModel, StageConfig};
use crate::types::{Dataset, ProbRecord};

/// Trained detector. Serializes to the shared gate artifact layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct DetectorModel(pub GateModel);

impl DetectorModel {
    pub fn gate(&self) -> &GateModel {
        &self.0
    }

    pub fn score(&self, record: &ProbRecord) -> Result<f64> {
        self.0.score(&record.probs)
    }

    /// `D = 1` iff the GBDT score reaches the decision threshold.
    pub fn detect(&self, record: &ProbRecord) -> Result<bool> {
        self.0.flag(&record.probs)
    }

    pub fn to_json(&self) -> Vec<u8> {
        self.0.to_json()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        GateModel::from_json(bytes).map(Self)
    }
}

/// Features (raw probability vectors) and labels: 0 for correct base
/// predictions, 1 for any misclassification.
pub fn build_detector_training_set(dataset: &Dataset) -> Result<(Vec<Vec<f64>>, Vec<bool>)> {
    let kinds = dataset.error_kinds()?;
    let rows = dataset.records().iter().map(|r| r.probs.clone()).collect();
    Ok((rows, kinds.iter().map(|k| k.is_error()).collect()))
}

#[derive(Debug, Clone)]
pub struct DetectorFit {
    pub model: DetectorModel,
    pub loss_trace: Vec<f64>,
    pub degenerate: bool,
    pub tuning: Option<crate::gate::TuningReport>,
    pub warnings: Vec<String>,
}

impl From<GateFit> for DetectorFit {
    fn from(fit: GateFit) -> Self {
        Self {
            model: DetectorModel(fit.model),
            loss_trace: fit.loss_trace,
            degenerate: fit.degenerate,
            tuning: fit.tuning,
            warnings: fit.warnings,
        }
    }
}

pub fn train_detector(dataset: &Dataset, config: &StageConfig) -> Result<DetectorFit> {
    let (rows, labels) = build_detector_training_set(dataset)?;
    if rows.is_empty() {
        return Err(Error::EmptyDataset);
    }
    train_gate(&rows, &labels, config).map(DetectorFit::from)
}

/// Flags a prediction whose top-1 probability falls strictly below the mean
/// top-1 probability of a reference set.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McpBaseline {
    pub mean_confidence: f64,
}

impl McpBaseline {
    pub fn flag(&self, record: &ProbRecord) -> Result<bool> {
        Ok(record.top_confidence()? < self.mean_confidence)
    }
}

pub fn fit_mcp(dataset: &Dataset) -> Result<McpBaseline> {
    if dataset.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let mut sum = 0.0;
    for record in dataset.records() {
        sum += record.top_confidence()?;
    }
    Ok(McpBaseline {
        mean_confidence: sum / dataset.len() as f64,
    })
}

pub fn mcp_flag(baseline: &McpBaseline, record: &ProbRecord) -> Result<bool> {
    baseline.flag(record)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::FeatureSet;
    use crate::gate::ThresholdPolicy;
    use crate::gbdt::{logit, GbdtModel};
    use crate::types::{SumValidation, SuperclassMap};

    fn map4() -> SuperclassMap {
        SuperclassMap::from_sizes(&[2, 2]).unwrap()
    }

    fn three_kinds() -> Dataset {
        let records = vec![
            ProbRecord::new("c", vec![0.6, 0.1, 0.2, 0.1], Some(0)),
            ProbRecord::new("hl", vec![0.1, 0.6, 0.2, 0.1], Some(0)),
            ProbRecord::new("nh", vec![0.1, 0.1, 0.6, 0.2], Some(0)),
        ];
        Dataset::new(records, map4(), SumValidation::Strict).unwrap()
    }

    #[test]
    fn training_labels_mark_any_error() {
        let (rows, labels) = build_detector_training_set(&three_kinds()).unwrap();
        assert_eq!(rows.len(), 3);
        assert_eq!(labels, vec![false, true, true]);

        let all_correct = Dataset::new(
            vec![ProbRecord::new("a", vec![0.7, 0.1, 0.1, 0.1], Some(0))],
            map4(),
            SumValidation::Strict,
        )
        .unwrap();
        assert_eq!(
            build_detector_training_set(&all_correct).unwrap().1,
            vec![false]
        );
    }

    #[test]
    fn unlabeled_records_are_listed() {
        let ds = Dataset::new(
            vec![ProbRecord::new("u1", vec![0.7, 0.1, 0.1, 0.1], None)],
            map4(),
            SumValidation::Strict,
        )
        .unwrap();
        let err = build_detector_training_set(&ds).unwrap_err();
        assert!(err.to_string().contains("u1"));
    }

    fn detector_with_score(score: f64) -> DetectorModel {
        DetectorModel(GateModel::new(
            GbdtModel::constant(logit(score), 4),
            0.5,
            FeatureSet::Raw,
        ))
    }

    #[test]
    fn detect_threshold_boundary() {
        let r = ProbRecord::new("x", vec![0.25; 4], None);
        assert!(detector_with_score(0.7).detect(&r).unwrap());
        assert_eq!(detector_with_score(0.5).score(&r).unwrap(), 0.5);
        assert!(detector_with_score(0.5).detect(&r).unwrap());
        assert!(!detector_with_score(0.49).detect(&r).unwrap());
        let short = ProbRecord::new("y", vec![0.5, 0.5], None);
        assert!(matches!(
            detector_with_score(0.7).detect(&short),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn fixed_policy_keeps_threshold() {
        let mut records = Vec::new();
        for i in 0..20 {
            let wrong = i % 4 == 0;
            let probs = if wrong {
                vec![0.3, 0.35, 0.2, 0.15]
            } else {
                vec![0.9, 0.05, 0.03, 0.02]
            };
            records.push(ProbRecord::new(i.to_string(), probs, Some(0)));
        }
        let ds = Dataset::new(records, map4(), SumValidation::Strict).unwrap();
        let config = StageConfig {
            threshold: ThresholdPolicy::Fixed(0.5),
            ..StageConfig::detector_default()
        };
        let fit = train_detector(&ds, &config).unwrap();
        assert_eq!(fit.model.gate().decision_threshold, 0.5);
        assert_eq!(fit.model.gate().training_meta.n_positive, 5);
    }

    #[test]
    fn single_class_is_degenerate_with_half_threshold() {
        let records = (0..10)
            .map(|i| ProbRecord::new(i.to_string(), vec![0.7, 0.1, 0.1, 0.1], Some(0)))
            .collect();
        let ds = Dataset::new(records, map4(), SumValidation::Strict).unwrap();
        let fit = train_detector(&ds, &StageConfig::detector_default()).unwrap();
        assert!(fit.degenerate);
        assert!(!fit.warnings.is_empty());
        assert_eq!(fit.model.gate().decision_threshold, 0.5);
    }

    #[test]
    fn mcp_examples() {
        let records = [0.9, 0.7, 0.5]
            .iter()
            .enumerate()
            .map(|(i, &top)| {
                let rest = (1.0 - top) / 3.0;
                ProbRecord::new(i.to_string(), vec![top, rest, rest, rest], Some(0))
            })
            .collect();
        let ds = Dataset::new(records, map4(), SumValidation::Strict).unwrap();
        let mcp = fit_mcp(&ds).unwrap();
        assert!((mcp.mean_confidence - 0.7).abs() < 1e-12);

        let exact = McpBaseline {
            mean_confidence: 0.7,
        };
        let at = ProbRecord::new("a", vec![0.7, 0.1, 0.1, 0.1], None);
        let below = ProbRecord::new("b", vec![0.69, 0.11, 0.1, 0.1], None);
        assert!(!mcp_flag(&exact, &at).unwrap());
        assert!(mcp_flag(&exact, &below).unwrap());

        let empty = Dataset::new(vec![], map4(), SumValidation::Strict).unwrap();
        assert!(matches!(fit_mcp(&empty), Err(Error::EmptyDataset)));
    }
}
