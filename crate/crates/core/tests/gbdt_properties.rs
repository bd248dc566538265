use flipguard::gbdt::{self, find_best_split, logistic, GbdtConfig, GbdtModel};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Exhaustive split search: every midpoint of distinct sorted values, sums
/// recomputed from scratch for each candidate.
fn brute_force_split(
    column: &[f64],
    grads: &[f64],
    hess: &[f64],
    min_leaf: usize,
    l2: f64,
) -> Option<(f64, f64)> {
    let mut values = column.to_vec();
    values.sort_by(f64::total_cmp);
    values.dedup();
    let mut best: Option<(f64, f64)> = None;
    for pair in values.windows(2) {
        let t = pair[0] + (pair[1] - pair[0]) / 2.0;
        let (mut gl, mut hl, mut gr, mut hr) = (0.0, 0.0, 0.0, 0.0);
        let (mut nl, mut nr) = (0, 0);
        for i in 0..column.len() {
            if column[i] <= t {
                gl += grads[i];
                hl += hess[i];
                nl += 1;
            } else {
                gr += grads[i];
                hr += hess[i];
                nr += 1;
            }
        }
        if nl < min_leaf || nr < min_leaf {
            continue;
        }
        let g = gl + gr;
        let h = hl + hr;
        let gain = 0.5 * (gl * gl / (hl + l2) + gr * gr / (hr + l2) - g * g / (h + l2));
        if gain > 0.0 && best.is_none_or(|(_, b)| gain > b) {
            best = Some((t, gain));
        }
    }
    best
}

/// Random column with duplicated values, logistic gradients at random scores.
fn random_instance(rng: &mut StdRng) -> (Vec<Vec<f64>>, Vec<f64>, Vec<f64>, usize) {
    let n = rng.random_range(2..=50);
    let f = rng.random_range(1..=3);
    let levels = rng.random_range(2..=n.max(2));
    let columns = (0..f)
        .map(|_| {
            (0..n)
                .map(|_| rng.random_range(0..levels) as f64 / levels as f64)
                .collect()
        })
        .collect();
    let mut grads = Vec::with_capacity(n);
    let mut hess = Vec::with_capacity(n);
    for _ in 0..n {
        let p = logistic(rng.random_range(-3.0..3.0));
        let y = if rng.random::<bool>() { 1.0 } else { 0.0 };
        let w = if y == 1.0 {
            rng.random_range(0.5..3.0)
        } else {
            1.0
        };
        grads.push(w * (p - y));
        hess.push(w * p * (1.0 - p));
    }
    let min_leaf = rng.random_range(1..=5);
    (columns, grads, hess, min_leaf)
}

#[test]
fn split_search_matches_brute_force() {
    let mut rng = StdRng::seed_from_u64(2024);
    for _ in 0..1_000 {
        let (columns, grads, hess, min_leaf) = random_instance(&mut rng);
        for column in &columns {
            let fast = find_best_split(column, &grads, &hess, min_leaf, 1.0);
            let slow = brute_force_split(column, &grads, &hess, min_leaf, 1.0);
            match (fast, slow) {
                (None, None) => {}
                (Some(s), Some((t, g))) => {
                    assert!((s.threshold - t).abs() <= 1e-9, "{} vs {t}", s.threshold);
                    assert!((s.gain - g).abs() <= 1e-9, "{} vs {g}", s.gain);
                }
                other => panic!("disagreement: {other:?}"),
            }
        }
    }
}

fn random_training_set(rng: &mut StdRng, n: usize, f: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    let x: Vec<Vec<f64>> = (0..n)
        .map(|_| (0..f).map(|_| rng.random::<f64>()).collect())
        .collect();
    let y = x
        .iter()
        .map(|row| row[0] + 0.5 * rng.random::<f64>() > 0.75)
        .collect();
    (x, y)
}

/// Two overlapping 2-D Gaussian blobs (class 0 at the origin, class 1 at (1, 1)).
fn gaussian_blobs(seed: u64, n: usize) -> (Vec<Vec<f64>>, Vec<bool>) {
    use rand_distr::{Distribution, Normal};
    let mut rng = StdRng::seed_from_u64(seed);
    let noise = Normal::new(0.0, 0.8).unwrap();
    (0..n)
        .map(|i| {
            let label = i % 2 == 1;
            let c = if label { 1.0 } else { 0.0 };
            (
                vec![c + noise.sample(&mut rng), c + noise.sample(&mut rng)],
                label,
            )
        })
        .unzip()
}

#[test]
fn gaussian_blobs_loss_drops_by_round_ten() {
    let (x, y) = gaussian_blobs(11, 200);
    let fit = gbdt::train(&x, &y, &GbdtConfig::default()).unwrap();
    // trace[0] is the constant model; trace[r] follows round r
    assert!(fit.loss_trace[10] < fit.loss_trace[1]);
    assert!(fit.loss_trace[1] < fit.loss_trace[0]);
    // balanced classes start at ln 2
    assert!((fit.loss_trace[0] - std::f64::consts::LN_2).abs() < 1e-12);
}

#[test]
fn loss_trace_never_increases() {
    let mut rng = StdRng::seed_from_u64(7);
    for run in 0..60 {
        let n = rng.random_range(10..150);
        let f = rng.random_range(1..4);
        let (x, y) = random_training_set(&mut rng, n, f);
        let cfg = GbdtConfig {
            n_trees: 40,
            max_depth: rng.random_range(1..5),
            min_samples_leaf: rng.random_range(1..4),
            learning_rate: rng.random_range(0.05..1.0),
            subsample: if run % 2 == 0 { 1.0 } else { 0.7 },
            l2_regularization: rng.random_range(0.0..2.0),
            seed: run,
            ..GbdtConfig::default()
        };
        let fit = gbdt::train(&x, &y, &cfg).unwrap();
        assert_eq!(fit.loss_trace.len(), if fit.degenerate { 1 } else { 41 });
        for w in fit.loss_trace.windows(2) {
            assert!(w[1] <= w[0], "run {run}: loss rose {} -> {}", w[0], w[1]);
        }
    }
}

#[test]
fn training_is_deterministic() {
    let mut rng = StdRng::seed_from_u64(3);
    let (x, y) = random_training_set(&mut rng, 120, 3);
    let cfg = GbdtConfig {
        n_trees: 30,
        subsample: 0.6,
        seed: 99,
        ..GbdtConfig::default()
    };
    let a = gbdt::train(&x, &y, &cfg).unwrap().model.serialize();
    let b = gbdt::train(&x, &y, &cfg).unwrap().model.serialize();
    assert_eq!(a, b);
    let other = GbdtConfig { seed: 100, ..cfg };
    assert_ne!(a, gbdt::train(&x, &y, &other).unwrap().model.serialize());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn raw_score_obeys_shrinkage_bound(seed in 0u64..10_000, n_trees in 1usize..30, lr in 0.01f64..1.0) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (x, y) = random_training_set(&mut rng, 60, 2);
        let cfg = GbdtConfig { n_trees, learning_rate: lr, min_samples_leaf: 2, ..GbdtConfig::default() };
        let model = gbdt::train(&x, &y, &cfg).unwrap().model;
        let bound = model.base_score().abs()
            + model.trees().len() as f64 * lr * model.max_leaf_magnitude();
        for row in &x {
            let raw = model.predict_raw(row).unwrap();
            prop_assert!(raw.abs() <= bound + 1e-12);
            let p = model.predict_proba(row).unwrap();
            prop_assert!(p > 0.0 && p < 1.0);
        }
    }

    #[test]
    fn serialization_round_trip_is_exact(seed in 0u64..10_000) {
        let mut rng = StdRng::seed_from_u64(seed);
        let (x, y) = random_training_set(&mut rng, 80, 3);
        let cfg = GbdtConfig { n_trees: 15, min_samples_leaf: 2, ..GbdtConfig::default() };
        let model = gbdt::train(&x, &y, &cfg).unwrap().model;
        let back = GbdtModel::deserialize(&model.serialize()).unwrap();
        prop_assert_eq!(&back, &model);
        for _ in 0..20 {
            let probe: Vec<f64> = (0..3).map(|_| rng.random::<f64>()).collect();
            prop_assert_eq!(
                model.predict_proba(&probe).unwrap().to_bits(),
                back.predict_proba(&probe).unwrap().to_bits()
            );
        }
    }
}
