//! Synthetic probability vectors with planted correct / human-like /
//! non-human structure.
//!
//! Every record first draws its kind from the configured mixture, then a true
//! class and a predicted (argmax) class consistent with that kind. The vector
//! itself follows one of two profiles:
//!
//! * confident: top-1 mass in `[0.65, 0.99]`, runner-up a random other class
//!   holding 20-60% of the remainder, the rest spread uniformly at random;
//! * error signature: top-1 mass in `[0.30, 0.60]`, runner-up is the true
//!   class holding 55-90% of the remainder, the rest leaning towards the true
//!   superclass.
//!
//! Correct records always use the confident profile. An error record uses
//! the signature with probability `separability`, so at 0 errors differ from
//! correct records only through their argmax.

use log::info;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Beta, Distribution, Exp1};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gate::stratified_split;
use crate::types::{Dataset, ErrorKind, ProbRecord, SumValidation, SuperclassMap};

/// Weight multiplier on residual mass landing in the true superclass for
/// signature-profile errors.
const TRUE_SUPERCLASS_PULL: f64 = 4.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub n_samples: usize,
    pub n_classes: usize,
    pub superclass_sizes: Vec<usize>,
    pub rate_correct: f64,
    pub rate_hl: f64,
    pub rate_nh: f64,
    pub separability: f64,
    /// Sharpness of the confident profile's top-1 mass (larger is closer to 0.99).
    pub concentration_correct: f64,
    /// Sharpness of the signature profile's top-1 mass around 0.45.
    pub concentration_error: f64,
    pub seed: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self::isic(2_000, 0)
    }
}

impl SynthConfig {
    fn with_counts(sizes: Vec<usize>, counts: [f64; 3], n_samples: usize, seed: u64) -> Self {
        let total: f64 = counts.iter().sum();
        Self {
            n_samples,
            n_classes: sizes.iter().sum(),
            superclass_sizes: sizes,
            rate_correct: counts[0] / total,
            rate_hl: counts[1] / total,
            rate_nh: counts[2] / total,
            separability: 0.8,
            concentration_correct: 5.0,
            concentration_error: 5.0,
            seed,
        }
    }

    /// 12 + 25 classes with the pet-breed test mixture (14,220 / 2,437 / 1,843).
    pub fn animal(n_samples: usize, seed: u64) -> Self {
        Self::with_counts(vec![12, 25], [14_220.0, 2_437.0, 1_843.0], n_samples, seed)
    }

    /// 4 + 3 classes with the skin-lesion mixture (1,198 / 94 / 220).
    pub fn isic(n_samples: usize, seed: u64) -> Self {
        Self::with_counts(vec![4, 3], [1_198.0, 94.0, 220.0], n_samples, seed)
    }

    /// 1 + 3 classes with the prostate-tissue mixture (1,452 / 479 / 191).
    pub fn sicap(n_samples: usize, seed: u64) -> Self {
        Self::with_counts(vec![1, 3], [1_452.0, 479.0, 191.0], n_samples, seed)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |msg: String| Err(Error::Config(msg));
        if self.n_classes < 2 {
            return fail(format!("n_classes must be >= 2, got {}", self.n_classes));
        }
        if self.superclass_sizes.iter().sum::<usize>() != self.n_classes {
            return fail(format!(
                "superclass_sizes {:?} do not sum to n_classes {}",
                self.superclass_sizes, self.n_classes
            ));
        }
        let rates = [self.rate_correct, self.rate_hl, self.rate_nh];
        if rates.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return fail(format!("rates {rates:?} must lie in [0, 1]"));
        }
        if (rates.iter().sum::<f64>() - 1.0).abs() > 1e-9 {
            return fail(format!("rates {rates:?} do not sum to 1"));
        }
        if !(0.0..=1.0).contains(&self.separability) {
            return fail(format!("separability {} outside [0, 1]", self.separability));
        }
        if !(self.concentration_correct > 0.0 && self.concentration_error > 0.0) {
            return fail("concentrations must be positive".into());
        }
        self.superclass_map().map(|_| ())
    }

    pub fn superclass_map(&self) -> Result<SuperclassMap> {
        SuperclassMap::from_sizes(&self.superclass_sizes)
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct KindCounts {
    pub correct: u64,
    pub human_like: u64,
    pub non_human: u64,
}

impl KindCounts {
    pub fn tally(kinds: &[ErrorKind]) -> Self {
        let mut c = Self::default();
        for k in kinds {
            match k {
                ErrorKind::Correct => c.correct += 1,
                ErrorKind::HumanLike => c.human_like += 1,
                ErrorKind::NonHuman => c.non_human += 1,
            }
        }
        c
    }

    pub fn errors(&self) -> u64 {
        self.human_like + self.non_human
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthDataset {
    pub dataset: Dataset,
    pub planted_kinds: Vec<ErrorKind>,
    /// Human-like draws that had to become non-human because the true
    /// class's superclass has a single member.
    pub infeasible_resampled: u64,
}

/// Metadata written next to a generated dataset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthSidecar {
    pub config: SynthConfig,
    pub counts: KindCounts,
    pub infeasible_resampled: u64,
}

impl SynthDataset {
    pub fn counts(&self) -> KindCounts {
        KindCounts::tally(&self.planted_kinds)
    }

    pub fn sidecar(&self, config: &SynthConfig) -> SynthSidecar {
        SynthSidecar {
            config: config.clone(),
            counts: self.counts(),
            infeasible_resampled: self.infeasible_resampled,
        }
    }
}

struct Sampler<'a> {
    map: &'a SuperclassMap,
    top_confident: Beta<f64>,
    top_signature: Beta<f64>,
}

impl Sampler<'_> {
    fn draw_kind(&self, cfg: &SynthConfig, rng: &mut StdRng) -> ErrorKind {
        let u: f64 = rng.random();
        if u < cfg.rate_correct {
            ErrorKind::Correct
        } else if u < cfg.rate_correct + cfg.rate_hl {
            ErrorKind::HumanLike
        } else {
            ErrorKind::NonHuman
        }
    }

    fn pick(rng: &mut StdRng, options: &[usize]) -> usize {
        options[rng.random_range(0..options.len())]
    }

    fn predicted_for(&self, kind: ErrorKind, truth: usize, rng: &mut StdRng) -> usize {
        let own = self.map.superclass_of(truth);
        match kind {
            ErrorKind::Correct => truth,
            ErrorKind::HumanLike => {
                let peers: Vec<usize> = self
                    .map
                    .members(own)
                    .iter()
                    .copied()
                    .filter(|&c| c != truth)
                    .collect();
                Self::pick(rng, &peers)
            }
            ErrorKind::NonHuman => {
                let others: Vec<usize> = (0..self.map.n_classes())
                    .filter(|&c| self.map.superclass_of(c) != own)
                    .collect();
                Self::pick(rng, &others)
            }
        }
    }

    fn probs(&self, top: usize, truth: usize, signature: bool, rng: &mut StdRng) -> Vec<f64> {
        let k = self.map.n_classes();
        loop {
            let (top_mass, runner_up, share) = if signature {
                let top_mass = 0.30 + 0.30 * self.top_signature.sample(rng);
                (top_mass, truth, rng.random_range(0.55..0.90))
            } else {
                let top_mass = 0.65 + 0.34 * self.top_confident.sample(rng);
                let mut other = rng.random_range(0..k - 1);
                if other >= top {
                    other += 1;
                }
                (top_mass, other, rng.random_range(0.20..0.60))
            };
            let mut probs = vec![0.0; k];
            probs[top] = top_mass;
            let rest = 1.0 - top_mass;
            if k == 2 {
                probs[runner_up] = rest;
            } else {
                probs[runner_up] = rest * share;
                let residual = rest - probs[runner_up];
                let true_sc = self.map.superclass_of(truth);
                let weights: Vec<(usize, f64)> = (0..k)
                    .filter(|&c| c != top && c != runner_up)
                    .map(|c| {
                        let w: f64 = Exp1.sample(rng);
                        let pull = if signature && self.map.superclass_of(c) == true_sc {
                            TRUE_SUPERCLASS_PULL
                        } else {
                            1.0
                        };
                        (c, w * pull)
                    })
                    .collect();
                let total: f64 = weights.iter().map(|(_, w)| w).sum();
                for (c, w) in weights {
                    probs[c] = if total > 0.0 {
                        residual * w / total
                    } else {
                        0.0
                    };
                }
            }
            let sum: f64 = probs.iter().sum();
            probs.iter_mut().for_each(|p| *p /= sum);

            // keep the planted argmax on top, preserving the runner-up's role
            let holder = crate::types::argmax(&probs).expect("finite probabilities");
            if holder != top {
                probs.swap(holder, top);
            }
            if crate::types::argmax(&probs) == Some(top) {
                return probs;
            }
        }
    }
}

/// Draws a dataset per `config`; deterministic given the seed.
pub fn generate(config: &SynthConfig) -> Result<SynthDataset> {
    config.validate()?;
    let map = config.superclass_map()?;
    let sampler = Sampler {
        map: &map,
        top_confident: Beta::new(config.concentration_correct, 2.0)
            .map_err(|e| Error::Config(e.to_string()))?,
        top_signature: Beta::new(config.concentration_error, config.concentration_error)
            .map_err(|e| Error::Config(e.to_string()))?,
    };
    let mut rng = StdRng::seed_from_u64(config.seed);
    let k = map.n_classes();
    let mut records = Vec::with_capacity(config.n_samples);
    let mut kinds = Vec::with_capacity(config.n_samples);
    let mut infeasible = 0;

    for i in 0..config.n_samples {
        let mut kind = sampler.draw_kind(config, &mut rng);
        let truth = rng.random_range(0..k);
        if kind == ErrorKind::HumanLike && map.members(map.superclass_of(truth)).len() < 2 {
            kind = ErrorKind::NonHuman;
            infeasible += 1;
        }
        let top = sampler.predicted_for(kind, truth, &mut rng);
        let signature = kind.is_error() && rng.random::<f64>() < config.separability;
        let probs = sampler.probs(top, truth, signature, &mut rng);
        records.push(ProbRecord::new(format!("r{i:06}"), probs, Some(truth)));
        kinds.push(kind);
    }
    if infeasible > 0 {
        info!("{infeasible} human-like draws were infeasible and became non-human");
    }
    let dataset = Dataset::new(records, map, SumValidation::Strict)?;
    Ok(SynthDataset {
        dataset,
        planted_kinds: kinds,
        infeasible_resampled: infeasible,
    })
}

/// Stratified (by planted kind) train/test split; deterministic given `seed`.
pub fn split(synth: &SynthDataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    let strata: Vec<usize> = synth
        .planted_kinds
        .iter()
        .map(|k| match k {
            ErrorKind::Correct => 0,
            ErrorKind::HumanLike => 1,
            ErrorKind::NonHuman => 2,
        })
        .collect();
    let mut rng = StdRng::seed_from_u64(seed);
    let (train, test) = stratified_split(&strata, train_fraction, &mut rng)?;
    Ok((synth.dataset.subset(&train), synth.dataset.subset(&test)))
}
