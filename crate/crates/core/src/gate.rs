//! Shared machinery of the two learned binary gates (error detector and error
//! typer): a GBDT scorer, a decision threshold and how that threshold is
//! picked.

use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::features::FeatureSet;
use crate::gbdt::{self, GbdtConfig, GbdtModel};
use crate::metrics::{BinaryConfusion, BinaryReport};

/// Fraction of the gate's training rows held out to tune the threshold.
pub const TUNING_FRACTION: f64 = 0.2;
const TUNING_SEED_SALT: u64 = 0x5EED_7A1E;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ThresholdPolicy {
    Fixed(f64),
    /// Highest tuning-fold F1 among thresholds whose precision reaches the
    /// floor; ties go to the lowest threshold.
    PrecisionFloor(f64),
}

impl ThresholdPolicy {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ThresholdPolicy::Fixed(t) if !(t > 0.0 && t < 1.0) => {
                Err(Error::Config(format!("fixed threshold {t} outside (0, 1)")))
            }
            ThresholdPolicy::PrecisionFloor(p) if !(0.0..=1.0).contains(&p) => {
                Err(Error::Config(format!("precision floor {p} outside [0, 1]")))
            }
            _ => Ok(()),
        }
    }
}

impl fmt::Display for ThresholdPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ThresholdPolicy::Fixed(t) => write!(f, "fixed:{t}"),
            ThresholdPolicy::PrecisionFloor(p) => write!(f, "precision_floor:{p}"),
        }
    }
}

impl FromStr for ThresholdPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (kind, value) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("threshold policy `{s}` is not `kind:value`")))?;
        let value: f64 = value
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("threshold policy `{s}` has a bad number")))?;
        let policy = match kind.trim() {
            "fixed" => ThresholdPolicy::Fixed(value),
            "precision_floor" => ThresholdPolicy::PrecisionFloor(value),
            other => {
                return Err(Error::Config(format!(
                    "unknown threshold policy `{other}` (fixed | precision_floor)"
                )))
            }
        };
        policy.validate()?;
        Ok(policy)
    }
}

impl Serialize for ThresholdPolicy {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for ThresholdPolicy {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

/// Training settings of one gate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StageConfig {
    #[serde(default)]
    pub gbdt: GbdtConfig,
    pub threshold: ThresholdPolicy,
    #[serde(default)]
    pub features: FeatureSet,
}

impl StageConfig {
    pub fn detector_default() -> Self {
        Self {
            gbdt: GbdtConfig::default(),
            threshold: ThresholdPolicy::PrecisionFloor(0.6),
            features: FeatureSet::Raw,
        }
    }

    pub fn typer_default() -> Self {
        Self {
            gbdt: GbdtConfig::default(),
            threshold: ThresholdPolicy::Fixed(0.5),
            features: FeatureSet::Raw,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.gbdt.validate()?;
        self.threshold.validate()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrainingMeta {
    pub n_negative: u64,
    pub n_positive: u64,
}

/// A trained gate; `flag(v)` holds iff `score(v) >= decision_threshold`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GateModel {
    pub gbdt: GbdtModel,
    pub decision_threshold: f64,
    pub features: FeatureSet,
    pub training_meta: TrainingMeta,
}

impl GateModel {
    pub fn new(gbdt: GbdtModel, decision_threshold: f64, features: FeatureSet) -> Self {
        Self {
            gbdt,
            decision_threshold,
            features,
            training_meta: TrainingMeta {
                n_negative: 0,
                n_positive: 0,
            },
        }
    }

    /// Number of classes (probability-vector length) the gate expects.
    pub fn n_classes(&self) -> usize {
        match self.features {
            FeatureSet::Raw => self.gbdt.n_features(),
            FeatureSet::RawWithConfidence => self.gbdt.n_features().saturating_sub(2),
        }
    }

    pub fn score(&self, probs: &[f64]) -> Result<f64> {
        if probs.len() != self.n_classes() {
            return Err(Error::Shape {
                expected: self.n_classes(),
                got: probs.len(),
            });
        }
        self.gbdt.predict_proba(&self.features.extract(probs))
    }

    pub fn flag(&self, probs: &[f64]) -> Result<bool> {
        Ok(self.score(probs)? >= self.decision_threshold)
    }

    pub fn to_json(&self) -> Vec<u8> {
        serde_json::to_vec(self).expect("gate serializes to JSON")
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let gate: GateModel = serde_json::from_slice(bytes)?;
        if !(gate.decision_threshold > 0.0 && gate.decision_threshold < 1.0) {
            return Err(Error::MalformedModel(format!(
                "decision_threshold {} outside (0, 1)",
                gate.decision_threshold
            )));
        }
        Ok(gate)
    }
}

/// How the threshold was tuned, reported on the held-out fold.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningReport {
    pub precision_floor: f64,
    pub floor_met: bool,
    pub threshold: f64,
    pub n_fit: usize,
    pub n_tune: usize,
    pub fold: BinaryReport,
}

#[derive(Debug, Clone)]
pub struct GateFit {
    pub model: GateModel,
    pub loss_trace: Vec<f64>,
    pub degenerate: bool,
    pub tuning: Option<TuningReport>,
    pub warnings: Vec<String>,
}

/// Splits indices stratum by stratum: each stratum is shuffled and its first
/// `round(len * fraction)` members go to the first part. Both parts come back
/// in ascending index order.
///
/// Fails when a non-empty stratum would end up entirely on one side.
pub fn stratified_split(
    strata: &[usize],
    fraction: f64,
    rng: &mut StdRng,
) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction {fraction} outside (0, 1)"
        )));
    }
    let n_strata = strata.iter().copied().max().map_or(0, |m| m + 1);
    let mut groups = vec![Vec::new(); n_strata];
    for (i, &s) in strata.iter().enumerate() {
        groups[s].push(i);
    }
    let (mut first, mut second) = (Vec::new(), Vec::new());
    for (s, mut group) in groups.into_iter().enumerate() {
        if group.is_empty() {
            continue;
        }
        let take = (group.len() as f64 * fraction).round() as usize;
        if take == 0 || take == group.len() {
            return Err(Error::StratumTooSmall(format!(
                "stratum {s} has {} members; a {fraction} split leaves one side empty",
                group.len()
            )));
        }
        group.shuffle(rng);
        first.extend_from_slice(&group[..take]);
        second.extend_from_slice(&group[take..]);
    }
    first.sort_unstable();
    second.sort_unstable();
    Ok((first, second))
}

/// Picks the threshold with the best F1 among those reaching `floor`
/// precision. When none does, returns a threshold just above every score
/// (flags nothing) and `false`.
pub fn choose_threshold(scores: &[f64], labels: &[bool], floor: f64) -> (f64, bool) {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]));
    let positives = labels.iter().filter(|&&y| y).count() as f64;

    let mut best: Option<(f64, f64)> = None; // (f1, threshold)
    let (mut tp, mut fp) = (0.0, 0.0);
    let mut i = 0;
    while i < order.len() {
        let s = scores[order[i]];
        while i < order.len() && scores[order[i]] == s {
            if labels[order[i]] {
                tp += 1.0;
            } else {
                fp += 1.0;
            }
            i += 1;
        }
        let precision = tp / (tp + fp);
        if precision < floor {
            continue;
        }
        let recall = if positives > 0.0 { tp / positives } else { 0.0 };
        let f1 = if precision + recall > 0.0 {
            2.0 * precision * recall / (precision + recall)
        } else {
            0.0
        };
        // thresholds decrease along the sweep, so `>=` keeps the lowest on ties
        if best.is_none_or(|(b, _)| f1 >= b) {
            best = Some((f1, s));
        }
    }
    match best {
        Some((_, t)) => (t, true),
        None => {
            let max = scores.iter().copied().fold(0.5, f64::max);
            (max.next_up(), false)
        }
    }
}

fn extract_all(rows: &[Vec<f64>], features: FeatureSet) -> Vec<Vec<f64>> {
    rows.iter().map(|p| features.extract(p)).collect()
}

fn meta(labels: &[bool]) -> TrainingMeta {
    let n_positive = labels.iter().filter(|&&y| y).count() as u64;
    TrainingMeta {
        n_negative: labels.len() as u64 - n_positive,
        n_positive,
    }
}

/// Trains a gate on probability vectors `rows` with binary `labels`.
pub fn train_gate(rows: &[Vec<f64>], labels: &[bool], config: &StageConfig) -> Result<GateFit> {
    config.validate()?;
    let features = extract_all(rows, config.features);
    let training_meta = meta(labels);
    let mut warnings = Vec::new();

    let single_class = training_meta.n_positive == 0 || training_meta.n_negative == 0;
    let floor = match config.threshold {
        ThresholdPolicy::PrecisionFloor(p) if !single_class => Some(p),
        _ => None,
    };

    if let Some(floor) = floor {
        let strata: Vec<usize> = labels.iter().map(|&y| usize::from(y)).collect();
        let mut rng = StdRng::seed_from_u64(config.gbdt.seed ^ TUNING_SEED_SALT);
        match stratified_split(&strata, 1.0 - TUNING_FRACTION, &mut rng) {
            Ok((fit_idx, tune_idx)) => {
                let fit_x: Vec<Vec<f64>> = fit_idx.iter().map(|&i| features[i].clone()).collect();
                let fit_y: Vec<bool> = fit_idx.iter().map(|&i| labels[i]).collect();
                let outcome = gbdt::train(&fit_x, &fit_y, &config.gbdt)?;
                let scores: Vec<f64> = tune_idx
                    .iter()
                    .map(|&i| outcome.model.predict_proba(&features[i]))
                    .collect::<Result<_>>()?;
                let tune_y: Vec<bool> = tune_idx.iter().map(|&i| labels[i]).collect();
                let (threshold, floor_met) = choose_threshold(&scores, &tune_y, floor);
                if !floor_met {
                    let msg = format!(
                        "no threshold reaches precision {floor} on the tuning fold; gate flags nothing"
                    );
                    warn!("{msg}");
                    warnings.push(msg);
                }
                let flags: Vec<bool> = scores.iter().map(|&s| s >= threshold).collect();
                let fold =
                    BinaryReport::from_confusion(BinaryConfusion::from_flags(&flags, &tune_y)?)?;
                return Ok(GateFit {
                    model: GateModel {
                        gbdt: outcome.model,
                        decision_threshold: threshold,
                        features: config.features,
                        training_meta,
                    },
                    loss_trace: outcome.loss_trace,
                    degenerate: outcome.degenerate,
                    tuning: Some(TuningReport {
                        precision_floor: floor,
                        floor_met,
                        threshold,
                        n_fit: fit_idx.len(),
                        n_tune: tune_idx.len(),
                        fold,
                    }),
                    warnings,
                });
            }
            Err(e) => {
                let msg = format!("cannot hold out a tuning fold ({e}); using threshold 0.5");
                warn!("{msg}");
                warnings.push(msg);
            }
        }
    }

    let outcome = gbdt::train(&features, labels, &config.gbdt)?;
    let threshold = match config.threshold {
        ThresholdPolicy::Fixed(t) if !outcome.degenerate => t,
        _ => 0.5,
    };
    if outcome.degenerate {
        warnings.push(format!(
            "single-class training labels ({} negative, {} positive); constant model with threshold 0.5",
            training_meta.n_negative, training_meta.n_positive
        ));
    }
    Ok(GateFit {
        model: GateModel {
            gbdt: outcome.model,
            decision_threshold: threshold,
            features: config.features,
            training_meta,
        },
        loss_trace: outcome.loss_trace,
        degenerate: outcome.degenerate,
        tuning: None,
        warnings,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn policy_parsing() {
        assert_eq!(
            "fixed:0.5".parse::<ThresholdPolicy>().unwrap(),
            ThresholdPolicy::Fixed(0.5)
        );
        assert_eq!(
            "precision_floor:0.62".parse::<ThresholdPolicy>().unwrap(),
            ThresholdPolicy::PrecisionFloor(0.62)
        );
        assert!("fixed:1.5".parse::<ThresholdPolicy>().is_err());
        assert!("median".parse::<ThresholdPolicy>().is_err());
        let json = serde_json::to_string(&ThresholdPolicy::PrecisionFloor(0.6)).unwrap();
        assert_eq!(json, "\"precision_floor:0.6\"");
    }

    #[test]
    fn threshold_choice_respects_floor() {
        let scores = [0.9, 0.8, 0.7, 0.6, 0.3, 0.2];
        let labels = [true, true, false, true, false, false];
        // At 0.6: tp 3, fp 1, precision 0.75, recall 1, f1 0.857 (best).
        let (t, met) = choose_threshold(&scores, &labels, 0.6);
        assert!(met);
        assert_eq!(t, 0.6);
        // Floor 0.9 leaves only 0.8 and 0.9; 0.8 has the better F1.
        let (t, met) = choose_threshold(&scores, &labels, 0.9);
        assert!(met);
        assert_eq!(t, 0.8);
        let (t, met) = choose_threshold(&[0.4, 0.3], &[false, false], 0.5);
        assert!(!met);
        assert!(t > 0.5 && t < 1.0);
    }

    #[test]
    fn stratified_split_counts() {
        let strata: Vec<usize> = (0..100).map(|i| usize::from(i % 10 < 3)).collect();
        let mut rng = StdRng::seed_from_u64(1);
        let (a, b) = stratified_split(&strata, 0.8, &mut rng).unwrap();
        assert_eq!((a.len(), b.len()), (80, 20));
        assert_eq!(a.iter().filter(|&&i| strata[i] == 1).count(), 24);
        let mut rng = StdRng::seed_from_u64(1);
        assert_eq!(stratified_split(&strata, 0.8, &mut rng).unwrap(), (a, b));
        let mut rng = StdRng::seed_from_u64(1);
        assert!(matches!(
            stratified_split(&[0, 0, 0, 1, 1, 1, 2, 2, 2, 2], 0.999, &mut rng),
            Err(Error::StratumTooSmall(_))
        ));
    }
}
