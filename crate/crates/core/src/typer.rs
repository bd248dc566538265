//! Error typer `T(x)`: for a (suspected) error, predicts human-like (0) or
//! non-human (1).

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::{train_gate, GateModel, StageConfig, TuningReport};
use crate::types::{Dataset, ErrorKind, ProbRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TyperModel(pub GateModel);

impl TyperModel {
    pub fn gate(&self) -> &GateModel {
        &self.0
    }

    pub fn score(&self, record: &ProbRecord) -> Result<f64> {
        self.0.score(&record.probs)
    }

    /// `T = 1` (non-human) iff the score reaches the decision threshold.
    pub fn classify_error(&self, record: &ProbRecord) -> Result<bool> {
        self.0.flag(&record.probs)
    }

    pub fn to_json(&self) -> Vec<u8> {
        self.0.to_json()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        GateModel::from_json(bytes).map(Self)
    }
}

/// Training rows for the typer: misclassified records only, labeled
/// human-like -> 0 and non-human -> 1. Also returns each row's record index.
pub fn build_typer_training_set(
    dataset: &Dataset,
) -> Result<(Vec<Vec<f64>>, Vec<bool>, Vec<usize>)> {
    let kinds = dataset.error_kinds()?;
    let mut rows = Vec::new();
    let mut labels = Vec::new();
    let mut origin = Vec::new();
    for (i, (record, kind)) in dataset.records().iter().zip(&kinds).enumerate() {
        if kind.is_error() {
            rows.push(record.probs.clone());
            labels.push(*kind == ErrorKind::NonHuman);
            origin.push(i);
        }
    }
    if rows.is_empty() {
        return Err(Error::EmptyTrainingSet(
            "no misclassified records to train the error typer on".into(),
        ));
    }
    Ok((rows, labels, origin))
}

#[derive(Debug, Clone)]
pub struct TyperFit {
    pub model: TyperModel,
    pub loss_trace: Vec<f64>,
    pub degenerate: bool,
    pub tuning: Option<TuningReport>,
    pub warnings: Vec<String>,
}

pub fn train_typer(dataset: &Dataset, config: &StageConfig) -> Result<TyperFit> {
    let (rows, labels, _) = build_typer_training_set(dataset)?;
    let fit = train_gate(&rows, &labels, config)?;
    Ok(TyperFit {
        model: TyperModel(fit.model),
        loss_trace: fit.loss_trace,
        degenerate: fit.degenerate,
        tuning: fit.tuning,
        warnings: fit.warnings,
    })
}
