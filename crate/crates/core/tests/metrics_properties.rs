mod common;

use flipguard::metrics::{error_breakdown, evaluate, mcc_binary, mcc_multiclass, BinaryConfusion};
use proptest::prelude::*;
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

/// Sample Pearson correlation of two 0/1 vectors; 0 when either is constant.
fn pearson(x: &[bool], y: &[bool]) -> f64 {
    let n = x.len() as f64;
    let xs: Vec<f64> = x.iter().map(|&b| f64::from(u8::from(b))).collect();
    let ys: Vec<f64> = y.iter().map(|&b| f64::from(u8::from(b))).collect();
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in xs.iter().zip(&ys) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        0.0
    } else {
        sxy / (sxx * syy).sqrt()
    }
}

#[test]
fn binary_mcc_matches_pearson() {
    let mut rng = StdRng::seed_from_u64(17);
    for _ in 0..2_000 {
        let n = rng.random_range(1..=200);
        let bias_p = rng.random::<f64>();
        let bias_a = rng.random::<f64>();
        let predicted: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < bias_p).collect();
        let actual: Vec<bool> = (0..n).map(|_| rng.random::<f64>() < bias_a).collect();
        let c = BinaryConfusion::from_flags(&predicted, &actual).unwrap();
        let mcc = mcc_binary(&c).unwrap();
        let oracle = pearson(&predicted, &actual);
        assert!((mcc - oracle).abs() <= 1e-12, "{c:?}: {mcc} vs {oracle}");
    }
}

#[test]
fn multiclass_mcc_reduces_to_binary() {
    let mut rng = StdRng::seed_from_u64(5);
    for _ in 0..500 {
        let c = BinaryConfusion::new(
            rng.random_range(0..50),
            rng.random_range(0..50),
            rng.random_range(0..50),
            rng.random_range(1..50),
        );
        // rows are truths, columns predictions; class 1 is positive
        let matrix = vec![vec![c.tn, c.fp], vec![c.fn_, c.tp]];
        let a = mcc_multiclass(&matrix);
        let b = mcc_binary(&c).unwrap();
        assert!((a - b).abs() <= 1e-12);
    }
}

proptest! {
    #[test]
    fn binary_mcc_in_range_and_symmetric(tp in 0u64..500, fp in 0u64..500, tn in 0u64..500, fn_ in 0u64..500) {
        prop_assume!(tp + fp + tn + fn_ > 0);
        let c = BinaryConfusion::new(tp, fp, tn, fn_);
        let m = mcc_binary(&c).unwrap();
        prop_assert!((-1.0..=1.0).contains(&m));
        let s = mcc_binary(&c.swapped()).unwrap();
        prop_assert!((m - s).abs() <= 1e-12);
    }

    #[test]
    fn multiclass_mcc_in_range(seed in 0u64..10_000) {
        let mut rng = StdRng::seed_from_u64(seed);
        let k = rng.random_range(2..8);
        let matrix: Vec<Vec<u64>> = (0..k)
            .map(|_| (0..k).map(|_| rng.random_range(0..20)).collect())
            .collect();
        let m = mcc_multiclass(&matrix);
        prop_assert!((-1.0..=1.0).contains(&m));
    }

    #[test]
    fn evaluation_invariants(seed in 0u64..100_000) {
        let ds = common::random_binary_dataset(seed, 10, 300);
        let mut rng = StdRng::seed_from_u64(seed ^ 1);
        let predictions: Vec<usize> = (0..ds.len())
            .map(|_| rng.random_range(0..ds.n_classes()))
            .collect();
        for preds in [&predictions, &common::base_predictions(&ds)] {
            let report = evaluate(preds, &ds).unwrap();
            prop_assert!(report.superclass_accuracy >= report.class_accuracy);
            prop_assert_eq!(report.n_correct + report.n_hl + report.n_nh, ds.len() as u64);
            let mcc = report.mcc.unwrap();
            prop_assert!((-1.0..=1.0).contains(&mcc));
            let table = error_breakdown(preds, &ds).unwrap();
            prop_assert_eq!(table.total(), report.n_hl + report.n_nh);
            prop_assert_eq!(table.human_like(), report.n_hl);
            prop_assert_eq!(table.non_human(), report.n_nh);
        }
    }
}
