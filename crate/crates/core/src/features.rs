use serde::{Deserialize, Serialize};

/// Feature vector fed to the learned gates.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FeatureSet {
    /// The probability vector as is.
    #[default]
    Raw,
    /// Probabilities followed by the top-1 probability and the top-1 minus
    /// top-2 margin.
    RawWithConfidence,
}

impl FeatureSet {
    pub fn n_features(self, n_classes: usize) -> usize {
        match self {
            FeatureSet::Raw => n_classes,
            FeatureSet::RawWithConfidence => n_classes + 2,
        }
    }

    pub fn extract(self, probs: &[f64]) -> Vec<f64> {
        match self {
            FeatureSet::Raw => probs.to_vec(),
            FeatureSet::RawWithConfidence => {
                let (mut first, mut second) = (f64::NEG_INFINITY, f64::NEG_INFINITY);
                for &p in probs {
                    if p > first {
                        second = first;
                        first = p;
                    } else if p > second {
                        second = p;
                    }
                }
                if !second.is_finite() {
                    second = first;
                }
                let mut out = Vec::with_capacity(probs.len() + 2);
                out.extend_from_slice(probs);
                out.push(first);
                out.push(first - second);
                out
            }
        }
    }
}
