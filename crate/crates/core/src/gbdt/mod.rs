//! Gradient-boosted regression trees for binary classification.
//!
//! Trees are grown greedily on exact (pre-sorted) feature values using the
//! gradient and hessian of the weighted logistic loss; leaves carry Newton
//! weights `-G / (H + l2)`. Each round's tree is shrunk by the learning rate
//! and, if it would raise the training loss, halved until it does not (or
//! dropped), so the recorded loss trace never increases.

mod model;
mod split;
mod tree;

use log::warn;
use rand::rngs::StdRng;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

pub use model::{logistic, logit, GbdtModel, FORMAT_VERSION};
pub use split::{find_best_split, leaf_weight, split_gain, Split};
pub use tree::{Node, Tree};

use crate::error::{Error, Result};
use tree::TreeParams;

/// Prior probabilities are clamped to `[PRIOR_EPS, 1 - PRIOR_EPS]` before the
/// logit so single-class data still yields a finite base score.
pub const PRIOR_EPS: f64 = 1e-6;

const MAX_STEP_HALVINGS: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GbdtConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    pub learning_rate: f64,
    /// Fraction of rows drawn (without replacement) for each tree.
    pub subsample: f64,
    /// Loss weight of label-1 rows; `None` means negatives / positives.
    pub positive_class_weight: Option<f64>,
    pub l2_regularization: f64,
    pub seed: u64,
}

impl Default for GbdtConfig {
    fn default() -> Self {
        Self {
            n_trees: 200,
            max_depth: 3,
            min_samples_leaf: 5,
            learning_rate: 0.1,
            subsample: 1.0,
            positive_class_weight: None,
            l2_regularization: 1.0,
            seed: 0,
        }
    }
}

impl GbdtConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_trees == 0 || self.max_depth == 0 || self.min_samples_leaf == 0 {
            return fail("n_trees, max_depth and min_samples_leaf must be >= 1".into());
        }
        if !(self.learning_rate > 0.0 && self.learning_rate <= 1.0) {
            return fail(format!(
                "learning_rate {} outside (0, 1]",
                self.learning_rate
            ));
        }
        if !(self.subsample > 0.0 && self.subsample <= 1.0) {
            return fail(format!("subsample {} outside (0, 1]", self.subsample));
        }
        if let Some(w) = self.positive_class_weight {
            if !(w > 0.0 && w.is_finite()) {
                return fail(format!("positive_class_weight {w} must be positive"));
            }
        }
        if !(self.l2_regularization >= 0.0 && self.l2_regularization.is_finite()) {
            return fail(format!(
                "l2_regularization {} must be non-negative",
                self.l2_regularization
            ));
        }
        Ok(())
    }
}

/// Result of a training run.
#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: GbdtModel,
    /// Weighted mean logistic loss on the training rows: entry 0 is the
    /// constant model, entry `i` follows boosting round `i`.
    pub loss_trace: Vec<f64>,
    /// Set when the labels held a single class and a constant model was fit.
    pub degenerate: bool,
    pub positive_class_weight: f64,
}

/// Numerically stable `ln(1 + e^x)`.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn weighted_loss(raw: &[f64], labels: &[bool], weights: &[f64]) -> f64 {
    let mut total = 0.0;
    let mut weight_sum = 0.0;
    for ((&x, &y), &w) in raw.iter().zip(labels).zip(weights) {
        let y = if y { 1.0 } else { 0.0 };
        total += w * (softplus(x) - y * x);
        weight_sum += w;
    }
    total / weight_sum
}

fn to_columns(features: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let n_features = features[0].len();
    if n_features == 0 {
        return Err(Error::Shape {
            expected: 1,
            got: 0,
        });
    }
    let mut columns = vec![Vec::with_capacity(features.len()); n_features];
    for (i, row) in features.iter().enumerate() {
        if row.len() != n_features {
            return Err(Error::Shape {
                expected: n_features,
                got: row.len(),
            });
        }
        for (col, &v) in columns.iter_mut().zip(row) {
            if !v.is_finite() {
                return Err(Error::InvalidRecord {
                    id: Some(format!("row {i}")),
                    reason: "non-finite feature value".into(),
                });
            }
            col.push(v);
        }
    }
    Ok(columns)
}

/// Fits a boosted ensemble to `features` (row-major, `N x F`) and binary
/// `labels`. Deterministic for a fixed config (including seed).
pub fn train(features: &[Vec<f64>], labels: &[bool], config: &GbdtConfig) -> Result<TrainOutcome> {
    config.validate()?;
    if features.len() != labels.len() {
        return Err(Error::LengthMismatch(format!(
            "{} feature rows but {} labels",
            features.len(),
            labels.len()
        )));
    }
    let n = labels.len();
    if n < 2 {
        return Err(Error::InsufficientData(format!(
            "need at least 2 training rows, got {n}"
        )));
    }
    let columns = to_columns(features)?;
    let n_features = columns.len();

    let n_pos = labels.iter().filter(|&&y| y).count();
    let n_neg = n - n_pos;
    let pos_weight = config
        .positive_class_weight
        .unwrap_or(if n_pos > 0 && n_neg > 0 {
            n_neg as f64 / n_pos as f64
        } else {
            1.0
        });
    let weights: Vec<f64> = labels
        .iter()
        .map(|&y| if y { pos_weight } else { 1.0 })
        .collect();
    let prior = pos_weight * n_pos as f64 / (pos_weight * n_pos as f64 + n_neg as f64);
    let base_score = logit(prior.clamp(PRIOR_EPS, 1.0 - PRIOR_EPS));

    let mut raw = vec![base_score; n];
    let mut loss = weighted_loss(&raw, labels, &weights);
    let mut loss_trace = vec![loss];
    let mut model = GbdtModel {
        trees: Vec::new(),
        base_score,
        learning_rate: config.learning_rate,
        n_features,
    };

    if n_pos == 0 || n_neg == 0 {
        warn!("single-class labels ({n_pos} positive of {n}); fitting a constant model");
        return Ok(TrainOutcome {
            model,
            loss_trace,
            degenerate: true,
            positive_class_weight: pos_weight,
        });
    }

    let presorted: Vec<Vec<usize>> = columns
        .iter()
        .map(|col| {
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| col[a].total_cmp(&col[b]));
            order
        })
        .collect();
    let params = TreeParams {
        max_depth: config.max_depth,
        min_samples_leaf: config.min_samples_leaf,
        l2: config.l2_regularization,
    };
    let sample_size = ((n as f64 * config.subsample).round() as usize).clamp(1, n);
    let mut rng = StdRng::seed_from_u64(config.seed);
    let mut gradients = vec![0.0; n];
    let mut hessians = vec![0.0; n];
    let mut in_sample = vec![true; n];
    let mut outputs = vec![0.0; n];
    let mut candidate = vec![0.0; n];
    let mut row_buf = vec![0.0; n_features];

    for _round in 0..config.n_trees {
        for i in 0..n {
            let p = logistic(raw[i]);
            let y = if labels[i] { 1.0 } else { 0.0 };
            gradients[i] = weights[i] * (p - y);
            hessians[i] = weights[i] * p * (1.0 - p);
        }
        let sorted: Vec<Vec<usize>> = if sample_size < n {
            in_sample.iter_mut().for_each(|s| *s = false);
            for i in rand::seq::index::sample(&mut rng, n, sample_size) {
                in_sample[i] = true;
            }
            presorted
                .iter()
                .map(|order| order.iter().copied().filter(|&i| in_sample[i]).collect())
                .collect()
        } else {
            presorted.clone()
        };

        let mut tree = tree::grow(&columns, &gradients, &hessians, sorted, &params);
        for (i, out) in outputs.iter_mut().enumerate() {
            for (f, col) in columns.iter().enumerate() {
                row_buf[f] = col[i];
            }
            *out = tree.predict(&row_buf);
        }

        let mut scale = 1.0;
        let mut accepted = false;
        for _ in 0..=MAX_STEP_HALVINGS {
            for i in 0..n {
                candidate[i] = raw[i] + config.learning_rate * scale * outputs[i];
            }
            let next = weighted_loss(&candidate, labels, &weights);
            if next <= loss {
                loss = next;
                accepted = true;
                break;
            }
            scale *= 0.5;
        }
        if accepted {
            if scale != 1.0 {
                tree.scale_leaves(scale);
            }
            std::mem::swap(&mut raw, &mut candidate);
            model.trees.push(tree);
        }
        loss_trace.push(loss);
    }

    Ok(TrainOutcome {
        model,
        loss_trace,
        degenerate: false,
        positive_class_weight: pos_weight,
    })
}
