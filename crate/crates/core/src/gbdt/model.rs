use serde::{Deserialize, Serialize};
use serde_json::Value;

use super::tree::Tree;
use crate::error::{Error, Result};

pub const FORMAT_VERSION: u64 = 1;

/// Logistic function, kept strictly inside (0, 1).
pub fn logistic(raw: f64) -> f64 {
    const EDGE: f64 = 1e-15;
    (1.0 / (1.0 + (-raw).exp())).clamp(EDGE, 1.0 - EDGE)
}

pub fn logit(p: f64) -> f64 {
    (p / (1.0 - p)).ln()
}

/// Additive ensemble of regression trees scored through the logistic link:
/// `p = logistic(base_score + learning_rate * sum(tree outputs))`.
#[derive(Debug, Clone, PartialEq)]
pub struct GbdtModel {
    pub(crate) trees: Vec<Tree>,
    pub(crate) base_score: f64,
    pub(crate) learning_rate: f64,
    pub(crate) n_features: usize,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format_version: u64,
    n_features: usize,
    base_score: f64,
    learning_rate: f64,
    trees: Vec<Tree>,
}

impl GbdtModel {
    /// A model without trees; predicts `logistic(base_score)` everywhere.
    pub fn constant(base_score: f64, n_features: usize) -> Self {
        Self {
            trees: Vec::new(),
            base_score,
            learning_rate: 1.0,
            n_features,
        }
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    pub fn base_score(&self) -> f64 {
        self.base_score
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    fn check_input(&self, features: &[f64]) -> Result<()> {
        if features.len() != self.n_features {
            return Err(Error::Shape {
                expected: self.n_features,
                got: features.len(),
            });
        }
        if features.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidRecord {
                id: None,
                reason: "non-finite feature value".into(),
            });
        }
        Ok(())
    }

    /// Raw additive score (log-odds) before the logistic link.
    pub fn predict_raw(&self, features: &[f64]) -> Result<f64> {
        self.check_input(features)?;
        Ok(self.raw_unchecked(features))
    }

    pub(crate) fn raw_unchecked(&self, features: &[f64]) -> f64 {
        let sum: f64 = self.trees.iter().map(|t| t.predict(features)).sum();
        self.base_score + self.learning_rate * sum
    }

    pub fn predict_proba(&self, features: &[f64]) -> Result<f64> {
        self.predict_raw(features).map(logistic)
    }

    /// Largest absolute leaf value over all trees (0 without trees).
    pub fn max_leaf_magnitude(&self) -> f64 {
        self.trees
            .iter()
            .flat_map(|t| t.leaves())
            .fold(0.0, |m, v| m.max(v.abs()))
    }

    fn to_file(&self) -> ModelFile {
        ModelFile {
            format_version: FORMAT_VERSION,
            n_features: self.n_features,
            base_score: self.base_score,
            learning_rate: self.learning_rate,
            trees: self.trees.clone(),
        }
    }

    pub fn to_value(&self) -> Value {
        serde_json::to_value(self.to_file()).expect("model serializes to JSON")
    }

    pub fn serialize(&self) -> Vec<u8> {
        serde_json::to_vec(&self.to_file()).expect("model serializes to JSON")
    }

    pub fn deserialize(bytes: &[u8]) -> Result<Self> {
        if bytes.iter().all(u8::is_ascii_whitespace) {
            return Err(Error::Truncated);
        }
        let value: Value = serde_json::from_slice(bytes).map_err(|e| {
            if e.is_eof() {
                Error::Truncated
            } else {
                Error::Json(e)
            }
        })?;
        Self::from_value(value)
    }

    pub fn from_value(value: Value) -> Result<Self> {
        let version = value
            .get("format_version")
            .ok_or_else(|| Error::MalformedModel("missing format_version".into()))?
            .as_u64()
            .ok_or_else(|| Error::MalformedModel("format_version is not an integer".into()))?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        let file: ModelFile = serde_json::from_value(value)?;
        if !(file.learning_rate > 0.0 && file.learning_rate <= 1.0) {
            return Err(Error::MalformedModel(format!(
                "learning_rate {} outside (0, 1]",
                file.learning_rate
            )));
        }
        if !file.base_score.is_finite() {
            return Err(Error::MalformedModel("non-finite base_score".into()));
        }
        for (i, tree) in file.trees.iter().enumerate() {
            tree.check(file.n_features)
                .map_err(|e| Error::MalformedModel(format!("tree {i}: {e}")))?;
        }
        Ok(Self {
            trees: file.trees,
            base_score: file.base_score,
            learning_rate: file.learning_rate,
            n_features: file.n_features,
        })
    }
}

impl Serialize for GbdtModel {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.to_file().serialize(s)
    }
}

impl<'de> Deserialize<'de> for GbdtModel {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let value = Value::deserialize(d)?;
        GbdtModel::from_value(value).map_err(serde::de::Error::custom)
    }
}
