//! Learners used as the fitness oracle, their metrics, and C-fold
//! cross-validation.

mod gnb;
mod metrics;
mod ols;
mod tree;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

pub use gnb::GaussianNb;
pub use metrics::{macro_f1, mse, r2, ErrorScore, Metric};
pub use ols::Ols;
pub use tree::{DecisionTree, RandomForest, TreeParams, TreeTarget};

use crate::dataset::{Dataset, FoldAssignment, Task};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum LearnerKind {
    Gnb,
    Ols,
    Cart,
    Rf,
}

impl LearnerKind {
    pub fn supports(self, task: Task) -> bool {
        match self {
            LearnerKind::Gnb => task == Task::Classification,
            LearnerKind::Ols => task == Task::Regression,
            LearnerKind::Cart | LearnerKind::Rf => true,
        }
    }
}

impl fmt::Display for LearnerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            LearnerKind::Gnb => "gnb",
            LearnerKind::Ols => "ols",
            LearnerKind::Cart => "cart",
            LearnerKind::Rf => "rf",
        })
    }
}

impl FromStr for LearnerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "gnb" | "nb" => Ok(LearnerKind::Gnb),
            "ols" | "lr" => Ok(LearnerKind::Ols),
            "cart" => Ok(LearnerKind::Cart),
            "rf" => Ok(LearnerKind::Rf),
            _ => Err(Error::InvalidInput(format!("unknown learner '{s}'"))),
        }
    }
}

/// Random-forest settings. `None` selects the task default:
/// `mtry` is `floor(sqrt(p))` for classification and `max(1, p / 3)` for
/// regression; `min_node_size` is 1 for classification and 5 for regression.
/// CART uses the same node-size default and tries all features.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RfParams {
    pub n_trees: usize,
    pub mtry: Option<usize>,
    pub min_node_size: Option<usize>,
    pub bootstrap: bool,
}

impl Default for RfParams {
    fn default() -> Self {
        Self {
            n_trees: 100,
            mtry: None,
            min_node_size: None,
            bootstrap: true,
        }
    }
}

impl RfParams {
    pub fn mtry_for(&self, task: Task, p: usize) -> usize {
        self.mtry.unwrap_or(match task {
            Task::Classification => ((p as f64).sqrt().floor() as usize).max(1),
            Task::Regression => (p / 3).max(1),
        })
    }

    pub fn min_node_size_for(&self, task: Task) -> usize {
        self.min_node_size.unwrap_or(match task {
            Task::Classification => 1,
            Task::Regression => 5,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LearnerSpec {
    pub kind: LearnerKind,
    pub rf: RfParams,
    pub seed: u64,
}

impl LearnerSpec {
    pub fn new(kind: LearnerKind, seed: u64) -> Self {
        Self {
            kind,
            rf: RfParams::default(),
            seed,
        }
    }

    pub fn check_task(&self, task: Task) -> Result<()> {
        if self.kind.supports(task) {
            Ok(())
        } else {
            Err(Error::IncompatibleLearner {
                learner: self.kind.to_string(),
                task: task.to_string(),
            })
        }
    }
}

/// Training data in column-major form. For classification `target` holds
/// class ids as floats and `n_classes` is the size of the fixed class set.
#[derive(Debug, Clone, Copy)]
pub struct TrainingData<'a> {
    pub columns: &'a [Vec<f64>],
    pub target: &'a [f64],
    pub task: Task,
    pub n_classes: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    Gnb(GaussianNb),
    Ols(Ols),
    Cart { tree: DecisionTree, task: Task },
    Rf { forest: RandomForest, task: Task },
}

#[derive(Debug, Clone, PartialEq)]
pub enum Predictions {
    Classes(Vec<usize>),
    Values(Vec<f64>),
}

impl Predictions {
    pub fn len(&self) -> usize {
        match self {
            Predictions::Classes(c) => c.len(),
            Predictions::Values(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Class ids become floats, so both kinds can be written as numbers.
    pub fn to_f64(&self) -> Vec<f64> {
        match self {
            Predictions::Classes(c) => c.iter().map(|&k| k as f64).collect(),
            Predictions::Values(v) => v.clone(),
        }
    }
}

fn class_ids(target: &[f64]) -> Vec<usize> {
    target.iter().map(|&t| t as usize).collect()
}

pub fn fit_columns(spec: &LearnerSpec, data: TrainingData<'_>) -> Result<Model> {
    spec.check_task(data.task)?;
    let n = data.target.len();
    if n == 0 {
        return Err(Error::EmptyDataset);
    }
    if data.columns.is_empty() {
        return Err(Error::InvalidInput("no feature columns to fit on".into()));
    }
    for col in data.columns {
        if col.len() != n {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: col.len(),
            });
        }
    }
    let ids;
    let target = match data.task {
        Task::Classification => {
            ids = class_ids(data.target);
            if let Some(&bad) = ids.iter().find(|&&c| c >= data.n_classes) {
                return Err(Error::InvalidInput(format!(
                    "class id {bad} out of range for {} classes",
                    data.n_classes
                )));
            }
            TreeTarget::Classes {
                ids: &ids,
                n_classes: data.n_classes,
            }
        }
        Task::Regression => TreeTarget::Values(data.target),
    };
    let p = data.columns.len();
    let min_node_size = spec.rf.min_node_size_for(data.task);
    Ok(match spec.kind {
        LearnerKind::Gnb => Model::Gnb(GaussianNb::fit(data.columns, &class_ids(data.target), data.n_classes)),
        LearnerKind::Ols => Model::Ols(Ols::fit(data.columns, data.target)),
        LearnerKind::Cart => {
            let params = TreeParams {
                mtry: None,
                min_node_size,
            };
            // CART is deterministic; the rng is only read when mtry < p.
            let mut rng = <rand_chacha::ChaCha8Rng as rand::SeedableRng>::seed_from_u64(spec.seed);
            Model::Cart {
                tree: DecisionTree::fit(data.columns, target, (0..n).collect(), params, &mut rng),
                task: data.task,
            }
        }
        LearnerKind::Rf => {
            let params = TreeParams {
                mtry: Some(spec.rf.mtry_for(data.task, p)),
                min_node_size,
            };
            Model::Rf {
                forest: RandomForest::fit(data.columns, target, spec.rf.n_trees, params, spec.rf.bootstrap, spec.seed),
                task: data.task,
            }
        }
    })
}

/// Fits on every feature column of `train`.
pub fn fit(spec: &LearnerSpec, train: &Dataset) -> Result<Model> {
    fit_columns(
        spec,
        TrainingData {
            columns: train.columns(),
            target: train.target(),
            task: train.task(),
            n_classes: train.n_classes(),
        },
    )
}

impl Model {
    pub fn n_features(&self) -> usize {
        match self {
            Model::Gnb(m) => m.n_features(),
            Model::Ols(m) => m.n_features(),
            Model::Cart { tree, .. } => tree.n_features(),
            Model::Rf { forest, .. } => forest.n_features(),
        }
    }

    pub fn predict(&self, columns: &[Vec<f64>]) -> Result<Predictions> {
        if columns.len() != self.n_features() {
            return Err(Error::LengthMismatch {
                expected: self.n_features(),
                actual: columns.len(),
            });
        }
        let n = columns.first().map_or(0, Vec::len);
        if let Some(bad) = columns.iter().find(|c| c.len() != n) {
            return Err(Error::LengthMismatch {
                expected: n,
                actual: bad.len(),
            });
        }
        let as_task = |v: Vec<f64>, task: Task| match task {
            Task::Classification => Predictions::Classes(class_ids(&v)),
            Task::Regression => Predictions::Values(v),
        };
        Ok(match self {
            Model::Gnb(m) => Predictions::Classes(m.predict(columns)),
            Model::Ols(m) => Predictions::Values(m.predict(columns)),
            Model::Cart { tree, task } => as_task(tree.predict(columns), *task),
            Model::Rf { forest, task } => as_task(forest.predict(columns), *task),
        })
    }
}

pub fn metric_for(task: Task) -> Metric {
    match task {
        Task::Classification => Metric::OneMinusMacroF1,
        Task::Regression => Metric::Mse,
    }
}

/// `1 - macro-F1` for class predictions, MSE for real ones.
pub fn prediction_error(pred: &Predictions, truth: &[f64], n_classes: usize) -> Result<ErrorScore> {
    match pred {
        Predictions::Classes(c) => Ok(ErrorScore {
            value: 1.0 - macro_f1(c, &class_ids(truth), n_classes)?,
            metric: Metric::OneMinusMacroF1,
        }),
        Predictions::Values(v) => Ok(ErrorScore {
            value: mse(v, truth)?,
            metric: Metric::Mse,
        }),
    }
}

/// Macro-F1 for class predictions, R² for real ones.
pub fn prediction_score(pred: &Predictions, truth: &[f64], n_classes: usize) -> Result<f64> {
    match pred {
        Predictions::Classes(c) => macro_f1(c, &class_ids(truth), n_classes),
        Predictions::Values(v) => r2(v, truth),
    }
}

fn gather(columns: &[Vec<f64>], rows: &[usize]) -> Vec<Vec<f64>> {
    columns.iter().map(|c| rows.iter().map(|&r| c[r]).collect()).collect()
}

/// Mean validation error over the folds, summed in fold order.
pub fn cross_val_error_columns(
    spec: &LearnerSpec,
    data: TrainingData<'_>,
    folds: &FoldAssignment,
) -> Result<ErrorScore> {
    let n = data.target.len();
    if folds.fold_of_row().len() != n {
        return Err(Error::LengthMismatch {
            expected: n,
            actual: folds.fold_of_row().len(),
        });
    }
    let mut total = 0.0;
    for c in 0..folds.n_folds() {
        let (train_rows, valid_rows) = folds.rows(c);
        let train_cols = gather(data.columns, &train_rows);
        let train_target: Vec<f64> = train_rows.iter().map(|&r| data.target[r]).collect();
        let model = fit_columns(
            spec,
            TrainingData {
                columns: &train_cols,
                target: &train_target,
                ..data
            },
        )?;
        let valid_cols = gather(data.columns, &valid_rows);
        let valid_target: Vec<f64> = valid_rows.iter().map(|&r| data.target[r]).collect();
        let pred = model.predict(&valid_cols)?;
        total += prediction_error(&pred, &valid_target, data.n_classes)?.value;
    }
    Ok(ErrorScore {
        value: total / folds.n_folds() as f64,
        metric: metric_for(data.task),
    })
}

pub fn cross_val_error(spec: &LearnerSpec, train: &Dataset, folds: &FoldAssignment) -> Result<ErrorScore> {
    cross_val_error_columns(
        spec,
        TrainingData {
            columns: train.columns(),
            target: train.target(),
            task: train.task(),
            n_classes: train.n_classes(),
        },
        folds,
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::make_folds;

    fn dataset(columns: Vec<Vec<f64>>, target: Vec<f64>, task: Task) -> Dataset {
        let names = (0..columns.len()).map(|i| format!("x{i}")).collect();
        Dataset::new(columns, target, task, names, Vec::new()).unwrap()
    }

    #[test]
    fn task_compatibility() {
        let reg = dataset(vec![vec![1.0, 2.0, 3.0]], vec![1.0, 2.0, 3.0], Task::Regression);
        assert!(matches!(
            fit(&LearnerSpec::new(LearnerKind::Gnb, 0), &reg),
            Err(Error::IncompatibleLearner { .. })
        ));
        let cls = dataset(vec![vec![1.0, 2.0, 3.0]], vec![0.0, 1.0, 1.0], Task::Classification);
        assert!(fit(&LearnerSpec::new(LearnerKind::Ols, 0), &cls).is_err());
        for kind in [LearnerKind::Cart, LearnerKind::Rf] {
            assert!(fit(&LearnerSpec::new(kind, 0), &reg).is_ok());
            assert!(fit(&LearnerSpec::new(kind, 0), &cls).is_ok());
        }
    }

    #[test]
    fn rf_defaults_follow_the_task() {
        let rf = RfParams::default();
        assert_eq!(rf.n_trees, 100);
        assert_eq!(rf.mtry_for(Task::Classification, 7), 2);
        assert_eq!(rf.mtry_for(Task::Classification, 9), 3);
        assert_eq!(rf.mtry_for(Task::Regression, 8), 2);
        assert_eq!(rf.mtry_for(Task::Regression, 2), 1);
        assert_eq!(rf.min_node_size_for(Task::Classification), 1);
        assert_eq!(rf.min_node_size_for(Task::Regression), 5);
    }

    #[test]
    fn ols_predicts_six_at_three() {
        let ds = dataset(vec![vec![0.0, 1.0, 2.0]], vec![0.0, 2.0, 4.0], Task::Regression);
        let m = fit(&LearnerSpec::new(LearnerKind::Ols, 0), &ds).unwrap();
        let Predictions::Values(v) = m.predict(&[vec![3.0]]).unwrap() else {
            panic!("expected values");
        };
        assert!((v[0] - 6.0).abs() < 1e-9);
    }

    #[test]
    fn column_count_mismatch_is_an_error() {
        let ds = dataset(vec![vec![0.0, 1.0, 2.0]], vec![0.0, 2.0, 4.0], Task::Regression);
        let m = fit(&LearnerSpec::new(LearnerKind::Ols, 0), &ds).unwrap();
        assert!(m.predict(&[vec![1.0], vec![2.0]]).is_err());
    }

    #[test]
    fn constant_target_regression_has_zero_cv_error() {
        let x: Vec<f64> = (0..20).map(f64::from).collect();
        let ds = dataset(vec![x], vec![3.5; 20], Task::Regression);
        let folds = make_folds(&ds, 5, 1).unwrap();
        let e = cross_val_error(&LearnerSpec::new(LearnerKind::Ols, 0), &ds, &folds).unwrap();
        assert_eq!(e.value, 0.0);
        assert_eq!(e.metric, Metric::Mse);
    }

    #[test]
    fn cv_error_is_the_mean_of_fold_errors() {
        let x: Vec<f64> = (0..12).map(|i| f64::from(i * i % 7)).collect();
        let y: Vec<f64> = (0..12).map(|i| f64::from(i % 5)).collect();
        let ds = dataset(vec![x], y, Task::Regression);
        let folds = make_folds(&ds, 2, 4).unwrap();
        let spec = LearnerSpec::new(LearnerKind::Ols, 0);
        let mut by_hand = 0.0;
        for c in 0..2 {
            let (tr, va) = folds.rows(c);
            let m = fit(&spec, &ds.select_rows(&tr)).unwrap();
            let v = ds.select_rows(&va);
            by_hand += mse(&m.predict(v.columns()).unwrap().to_f64(), v.target()).unwrap();
        }
        let e = cross_val_error(&spec, &ds, &folds).unwrap();
        assert!((e.value - by_hand / 2.0).abs() < 1e-12);
    }

    #[test]
    fn rf_classification_votes() {
        let x = vec![(0..20).map(f64::from).collect::<Vec<_>>()];
        let y: Vec<f64> = (0..20).map(|i| if i < 10 { 0.0 } else { 1.0 }).collect();
        let ds = dataset(x, y.clone(), Task::Classification);
        let m = fit(&LearnerSpec::new(LearnerKind::Rf, 9), &ds).unwrap();
        let pred = m.predict(ds.columns()).unwrap();
        assert_eq!(prediction_score(&pred, &y, 2).unwrap(), 1.0);
    }
}
