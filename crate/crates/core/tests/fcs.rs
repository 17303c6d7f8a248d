//! The construction loop end to end on small data.

use std::path::Path;

use featcon::dataset::{load_csv, split_train_test, Dataset, TargetColumn, Task};
use featcon::fcs::{baseline_scores, construct_features, FcsConfig};
use featcon::learners::{LearnerKind, LearnerSpec};
use featcon::search::{Algorithm, SearchConfig};
use featcon::semantics::eval_tree;

fn iris() -> Dataset {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/iris.csv");
    load_csv(path, &TargetColumn::Last, Task::Classification).unwrap()
}

fn config(algorithm: Algorithm, k: usize) -> FcsConfig {
    let search = SearchConfig {
        algorithm,
        population_size: 30,
        eval_budget: 300,
        ..SearchConfig::default()
    };
    FcsConfig {
        k,
        seed: 7,
        ..FcsConfig::new(search, LearnerSpec::new(LearnerKind::Gnb, 0))
    }
}

#[test]
fn iris_loads_with_three_classes() {
    let ds = iris();
    assert_eq!((ds.n_rows(), ds.n_features(), ds.n_classes()), (150, 4, 3));
}

#[test]
fn rounds_build_on_original_columns_only() {
    let ds = iris();
    for algorithm in [Algorithm::Rs, Algorithm::Sgp, Algorithm::Sgpb, Algorithm::GomeaRt, Algorithm::GomeaLt] {
        let r = construct_features(&ds, &config(algorithm, 3)).unwrap();
        assert_eq!(r.rounds.len(), 3);
        for (k, (round, tree)) in r.rounds.iter().zip(&r.features).enumerate() {
            assert_eq!(round.k, k + 1);
            assert!(round.evaluations_used <= 300);
            assert!(tree.max_feature_index().is_none_or(|i| i < 4), "{algorithm}: {}", round.expression);
            if algorithm != Algorithm::Sgp {
                assert!(tree.height() <= 2, "{algorithm}: {}", round.expression);
            }
        }
        // Constructed features never repeat one another.
        for i in 0..r.train_features.len() {
            for j in 0..i {
                assert_ne!(r.train_features[i], r.train_features[j]);
            }
        }
    }
}

#[test]
fn test_rows_never_influence_the_search() {
    let ds = iris();
    let c = config(Algorithm::GomeaRt, 2);
    let split = split_train_test(&ds, c.test_fraction, c.seed).unwrap();
    let mut columns = ds.columns().to_vec();
    let mut target = ds.target().to_vec();
    for &r in &split.test_rows {
        for col in &mut columns {
            col[r] = 1e3;
        }
        target[r] = 0.0;
    }
    let tampered = Dataset::new(
        columns,
        target,
        Task::Classification,
        ds.column_names().to_vec(),
        ds.class_labels().to_vec(),
    )
    .unwrap();
    let a = construct_features(&ds, &c).unwrap();
    let b = construct_features(&tampered, &c).unwrap();
    assert_eq!(a.features, b.features);
    let cv = |r: &featcon::fcs::FcsResult| r.rounds.iter().map(|x| x.train_cv_error).collect::<Vec<_>>();
    assert_eq!(cv(&a), cv(&b));
}

#[test]
fn runs_are_reproducible_and_seed_dependent() {
    let ds = iris();
    let c = config(Algorithm::GomeaRt, 2);
    let a = construct_features(&ds, &c).unwrap();
    let b = construct_features(&ds, &c).unwrap();
    assert_eq!(a.features, b.features);
    // Everything but the timings.
    let json = |r: &featcon::fcs::FcsResult| serde_json::to_string(&r.rounds).unwrap();
    assert_eq!(json(&a), json(&b));
    let other = (8..12)
        .map(|seed| construct_features(&ds, &FcsConfig { seed, ..c }).unwrap().test_rows)
        .any(|rows| rows != a.test_rows);
    assert!(other, "the split ignores the seed");
}

#[test]
fn test_features_are_the_trees_applied_to_test_rows() {
    let ds = iris();
    let c = config(Algorithm::Sgpb, 2);
    let r = construct_features(&ds, &c).unwrap();
    let split = split_train_test(&ds, c.test_fraction, c.seed).unwrap();
    for (tree, values) in r.features.iter().zip(&r.test_features) {
        assert_eq!(&eval_tree(tree, split.test.original_columns()).unwrap(), values);
    }
    assert_eq!(r.test_rows, split.test_rows);
}

#[test]
fn baseline_uses_the_same_split() {
    let ds = iris();
    let b = baseline_scores(&ds, &config(Algorithm::Rs, 1)).unwrap();
    assert!((0.0..=1.0).contains(&b.test_score));
    assert!((b.test_error - (1.0 - b.test_score)).abs() < 1e-12);
    // Iris is easy for naive Bayes.
    assert!(b.test_score > 0.85, "{}", b.test_score);
}

#[test]
fn augment_keeps_the_original_columns_for_scoring() {
    let ds = iris();
    let c = FcsConfig {
        augment: true,
        ..config(Algorithm::GomeaRt, 1)
    };
    let r = construct_features(&ds, &c).unwrap();
    let base = baseline_scores(&ds, &c).unwrap();
    assert_eq!(r.rounds.len(), 1);
    // With the originals present the learner starts from the baseline set.
    assert!(r.rounds[0].train_cv_error <= base.train_cv_error + 0.1);
}

#[test]
fn mismatched_learner_is_rejected() {
    let ds = iris();
    let c = FcsConfig {
        learner: LearnerSpec::new(LearnerKind::Ols, 0),
        ..config(Algorithm::Rs, 1)
    };
    assert!(construct_features(&ds, &c).is_err());
}
