//! Learners against independent oracles and structural properties.

use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use featcon::dataset::{make_folds, Dataset, Task};
use featcon::learners::{
    cross_val_error, fit, DecisionTree, GaussianNb, LearnerKind, LearnerSpec, Ols, Predictions, RandomForest,
    TreeParams, TreeTarget,
};

fn columns(p: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    (0..p).map(|_| (0..n).map(|_| rng.random_range(-10.0..10.0)).collect()).collect()
}

/// Class posterior argmax written out directly from the Gaussian density.
fn gnb_oracle(train: &[Vec<f64>], y: &[usize], k: usize, row: &[f64]) -> usize {
    let n = y.len() as f64;
    let p = train.len();
    let max_var = (0..p)
        .map(|j| {
            let m = train[j].iter().sum::<f64>() / n;
            train[j].iter().map(|x| (x - m).powi(2)).sum::<f64>() / n
        })
        .fold(0.0, f64::max);
    let eps = if max_var > 0.0 { 1e-9 * max_var } else { 1e-9 };
    let mut best = (0, f64::NEG_INFINITY);
    for c in 0..k {
        let rows: Vec<usize> = (0..y.len()).filter(|&i| y[i] == c).collect();
        if rows.is_empty() {
            continue;
        }
        let nc = rows.len() as f64;
        let mut score = (nc / n).ln();
        for j in 0..p {
            let m = rows.iter().map(|&i| train[j][i]).sum::<f64>() / nc;
            let v = rows.iter().map(|&i| (train[j][i] - m).powi(2)).sum::<f64>() / nc + eps;
            score += -0.5 * (2.0 * std::f64::consts::PI * v).ln() - (row[j] - m).powi(2) / (2.0 * v);
        }
        if score > best.1 {
            best = (c, score);
        }
    }
    best.0
}

proptest! {
    #[test]
    fn ols_recovers_exact_linear_targets(p in 1usize..5, extra in 5usize..40, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let n = p + extra;
        let x = columns(p, n, &mut rng);
        let w: Vec<f64> = (0..p).map(|_| rng.random_range(-3.0..3.0)).collect();
        let b = rng.random_range(-5.0..5.0);
        let y: Vec<f64> = (0..n).map(|i| b + (0..p).map(|j| w[j] * x[j][i]).sum::<f64>()).collect();
        let model = Ols::fit(&x, &y);
        for (got, want) in model.predict(&x).iter().zip(&y) {
            prop_assert!((got - want).abs() <= 1e-6 * (1.0 + want.abs()), "{got} vs {want}");
        }
    }

    #[test]
    fn gnb_matches_the_density_oracle(k in 2usize..4, n in 12usize..40, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let y: Vec<usize> = (0..n).map(|i| i % k).collect();
        let x: Vec<Vec<f64>> = (0..3)
            .map(|_| y.iter().map(|&c| c as f64 * 2.0 + rng.random_range(-2.0..2.0)).collect())
            .collect();
        let model = GaussianNb::fit(&x, &y, k + 1);
        let probe = columns(3, 20, &mut rng);
        let pred = model.predict(&probe);
        for (r, &got) in pred.iter().enumerate() {
            let row: Vec<f64> = probe.iter().map(|c| c[r]).collect();
            prop_assert_eq!(got, gnb_oracle(&x, &y, k + 1, &row));
        }
    }

    #[test]
    fn full_depth_trees_fit_distinct_rows(n in 2usize..60, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = columns(2, n, &mut rng);
        let params = TreeParams { mtry: None, min_node_size: 1 };
        let ids: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
        let tree = DecisionTree::fit(&x, TreeTarget::Classes { ids: &ids, n_classes: 3 }, (0..n).collect(), params, &mut rng);
        prop_assert_eq!(tree.predict(&x), ids.iter().map(|&c| c as f64).collect::<Vec<_>>());
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let tree = DecisionTree::fit(&x, TreeTarget::Values(&y), (0..n).collect(), params, &mut rng);
        prop_assert_eq!(tree.predict(&x), y);
    }

    #[test]
    fn forests_depend_only_on_inputs_and_seed(n in 5usize..40, seed: u64) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let x = columns(3, n, &mut rng);
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
        let params = TreeParams { mtry: Some(1), min_node_size: 5 };
        let a = RandomForest::fit(&x, TreeTarget::Values(&y), 10, params, true, seed);
        let b = RandomForest::fit(&x, TreeTarget::Values(&y), 10, params, true, seed);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.predict(&x), b.predict(&x));
    }
}

#[test]
fn regression_leaves_respect_min_node_size() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let x = columns(1, 40, &mut rng);
    let y: Vec<f64> = x[0].iter().map(|v| v * v).collect();
    let params = TreeParams { mtry: None, min_node_size: 5 };
    let tree = DecisionTree::fit(&x, TreeTarget::Values(&y), (0..40).collect(), params, &mut rng);
    // Each leaf averages at least 5 rows, so at most 8 distinct outputs.
    let mut outputs = tree.predict(&x);
    outputs.sort_by(f64::total_cmp);
    outputs.dedup();
    assert!(outputs.len() <= 8, "{} leaves", outputs.len());
}

#[test]
fn learners_fit_through_the_dataset_api() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let x = columns(2, 60, &mut rng);
    let y: Vec<f64> = (0..60).map(|i| if x[0][i] + x[1][i] > 0.0 { 1.0 } else { 0.0 }).collect();
    let ds = Dataset::new(x, y, Task::Classification, vec!["a".into(), "b".into()], Vec::new()).unwrap();
    let folds = make_folds(&ds, 5, 1).unwrap();
    for kind in [LearnerKind::Gnb, LearnerKind::Cart, LearnerKind::Rf] {
        let spec = LearnerSpec::new(kind, 4);
        let model = fit(&spec, &ds).unwrap();
        let Predictions::Classes(pred) = model.predict(ds.columns()).unwrap() else {
            panic!("{kind} returned values for a classification task");
        };
        assert_eq!(pred.len(), 60);
        let a = cross_val_error(&spec, &ds, &folds).unwrap();
        let b = cross_val_error(&spec, &ds, &folds).unwrap();
        assert_eq!(a, b, "{kind} cross-validation is not reproducible");
        assert!((0.0..=1.0).contains(&a.value));
    }
    assert!(fit(&LearnerSpec::new(LearnerKind::Ols, 0), &ds).is_err());
}
