#![allow(dead_code)]

use flipguard::{Dataset, ProbRecord, SumValidation, SuperclassMap};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Random normalized probability vector of length `k`.
pub fn random_simplex(rng: &mut StdRng, k: usize) -> Vec<f64> {
    let raw: Vec<f64> = (0..k).map(|_| rng.random::<f64>().powi(3) + 1e-3).collect();
    let sum: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / sum).collect()
}

/// Random fully labeled dataset over a random binary taxonomy with
/// `2 <= K <= max_k` classes and `1 <= N <= max_n` records.
pub fn random_binary_dataset(seed: u64, max_k: usize, max_n: usize) -> Dataset {
    let mut rng = StdRng::seed_from_u64(seed);
    let k = rng.random_range(2..=max_k);
    let first = rng.random_range(1..k);
    let map = SuperclassMap::from_sizes(&[first, k - first]).unwrap();
    let n = rng.random_range(1..=max_n);
    let records = (0..n)
        .map(|i| {
            let probs = random_simplex(&mut rng, k);
            // bias labels towards the argmax so all three kinds appear
            let argmax = flipguard::types::argmax(&probs).unwrap();
            let label = if rng.random::<f64>() < 0.6 {
                argmax
            } else {
                rng.random_range(0..k)
            };
            ProbRecord::new(format!("{seed}-{i}"), probs, Some(label))
        })
        .collect();
    Dataset::new(records, map, SumValidation::Renormalize).unwrap()
}

pub fn base_predictions(ds: &Dataset) -> Vec<usize> {
    ds.records()
        .iter()
        .map(|r| r.predicted_class().unwrap())
        .collect()
}
