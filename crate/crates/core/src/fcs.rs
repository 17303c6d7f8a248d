//! The construction loop: K search rounds on a fixed train/test split, each
//! round adding one feature built from the original columns.
//!
//! Seeds: the split uses `seed`, the folds `derive_seed(seed, 1)`, the
//! learner `derive_seed(seed, 2)` and round `k` searches with
//! `derive_seed(seed, 1000 + k)`.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{make_folds, split_train_test, Dataset, FoldAssignment, Split, Task};
use crate::error::{Error, Result};
use crate::exprtree::{to_infix, DynTree, TerminalSet};
use crate::learners::{
    cross_val_error_columns, fit_columns, metric_for, prediction_error, prediction_score, LearnerSpec, Metric,
    TrainingData,
};
use crate::search::{run_search, Fitness, SearchConfig, TracePoint};
use crate::semantics::{check_criteria, eval_tree, CachedOutput, FeatureVector, Verdict};
use crate::seeds::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FcsConfig {
    pub k: usize,
    pub search: SearchConfig,
    pub learner: LearnerSpec,
    pub folds: usize,
    pub test_fraction: f64,
    pub seed: u64,
    /// Score the constructed features together with the original ones
    /// instead of in their place.
    pub augment: bool,
}

impl FcsConfig {
    pub fn new(search: SearchConfig, learner: LearnerSpec) -> Self {
        Self {
            k: 5,
            search,
            learner,
            folds: 5,
            test_fraction: 0.2,
            seed: 0,
            augment: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::InvalidInput("k must be at least 1".into()));
        }
        self.search.validate()
    }

    fn learner_spec(&self) -> LearnerSpec {
        LearnerSpec {
            seed: derive_seed(self.seed, 2),
            ..self.learner
        }
    }
}

/// Worst possible error of a task's metric.
pub fn max_error(task: Task) -> f64 {
    match task {
        Task::Classification => 1.0,
        Task::Regression => f64::INFINITY,
    }
}

/// Fitness of a candidate feature: the learner's cross-validated error on
/// the training set extended with the candidate.
pub struct CandidateEvaluator<'a> {
    originals: &'a [Vec<f64>],
    previous: Vec<FeatureVector>,
    /// Columns the learner sees besides the candidate.
    cv_columns: Vec<Vec<f64>>,
    target: &'a [f64],
    task: Task,
    n_classes: usize,
    folds: &'a FoldAssignment,
    learner: LearnerSpec,
}

impl<'a> CandidateEvaluator<'a> {
    pub fn new(
        train: &'a Dataset,
        previous: Vec<FeatureVector>,
        folds: &'a FoldAssignment,
        learner: LearnerSpec,
        augment: bool,
    ) -> Self {
        let mut cv_columns = if augment { train.original_columns().to_vec() } else { Vec::new() };
        cv_columns.extend(previous.iter().cloned());
        Self {
            originals: train.original_columns(),
            previous,
            cv_columns,
            target: train.target(),
            task: train.task(),
            n_classes: train.n_classes(),
            folds,
            learner,
        }
    }

    fn data(&self) -> TrainingData<'_> {
        TrainingData {
            columns: &self.cv_columns,
            target: self.target,
            task: self.task,
            n_classes: self.n_classes,
        }
    }
}

impl Fitness for CandidateEvaluator<'_> {
    fn columns(&self) -> &[Vec<f64>] {
        self.originals
    }

    fn previous(&self) -> &[FeatureVector] {
        &self.previous
    }

    fn max_error(&self) -> f64 {
        max_error(self.task)
    }

    fn cross_validate(&mut self, values: &[f64]) -> Result<f64> {
        self.cv_columns.push(values.to_vec());
        let out = cross_val_error_columns(&self.learner, self.data(), self.folds);
        self.cv_columns.pop();
        Ok(out?.value)
    }
}

/// Scores one tree outside a search: criteria first, then the cached error
/// if the output is unchanged, else a cross-validation. `cache` is updated
/// whenever a cross-validation runs.
pub fn evaluate_candidate(
    tree: &DynTree,
    fitness: &mut CandidateEvaluator<'_>,
    cache: &mut Option<CachedOutput>,
) -> Result<(f64, Verdict)> {
    let values = eval_tree(tree, fitness.columns())?;
    let verdict = check_criteria(
        &values,
        fitness.previous(),
        Default::default(),
        cache.as_ref().map(|c| c.values.as_slice()),
    )?;
    let error = match verdict {
        Verdict::Valid => {
            let e = fitness.cross_validate(&values)?;
            *cache = Some(CachedOutput { values, error: e });
            e
        }
        Verdict::Unchanged => cache.as_ref().map_or(fitness.max_error(), |c| c.error),
        _ => fitness.max_error(),
    };
    Ok((error, verdict))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RoundResult {
    pub k: usize,
    /// Cross-validated training error of the round's best feature set.
    pub train_cv_error: f64,
    /// Error of the learner fitted and scored on the whole training set.
    pub train_full_error: f64,
    pub test_error: f64,
    /// Macro-F1 for classification, R² for regression.
    pub test_score: f64,
    pub expression: String,
    pub expression_expanded: String,
    pub size: usize,
    pub height: usize,
    pub evaluations_used: usize,
    /// Every candidate of the round was rejected by the skip criteria; the
    /// feature is the best rejected tree.
    pub no_valid_candidate: bool,
    pub trace: Vec<TracePoint>,
    #[serde(skip)]
    pub wall_seconds: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FcsResult {
    pub rounds: Vec<RoundResult>,
    pub features: Vec<DynTree>,
    pub train_features: Vec<FeatureVector>,
    pub test_features: Vec<FeatureVector>,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub metric: Metric,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BaselineScores {
    pub train_cv_error: f64,
    pub test_error: f64,
    pub test_score: f64,
}

struct Setup {
    split: Split,
    folds: FoldAssignment,
    learner: LearnerSpec,
}

fn setup(ds: &Dataset, config: &FcsConfig) -> Result<Setup> {
    config.validate()?;
    config.learner.check_task(ds.task())?;
    let split = split_train_test(ds, config.test_fraction, config.seed)?;
    let folds = make_folds(&split.train, config.folds, derive_seed(config.seed, 1))?;
    Ok(Setup {
        split,
        folds,
        learner: config.learner_spec(),
    })
}

/// (train error, test error, test score) of the learner fitted on `train`.
fn fit_and_score(
    learner: &LearnerSpec,
    train: TrainingData<'_>,
    test_columns: &[Vec<f64>],
    test_target: &[f64],
) -> Result<(f64, f64, f64)> {
    let model = fit_columns(learner, train)?;
    let train_pred = model.predict(train.columns)?;
    let test_pred = model.predict(test_columns)?;
    Ok((
        prediction_error(&train_pred, train.target, train.n_classes)?.value,
        prediction_error(&test_pred, test_target, train.n_classes)?.value,
        prediction_score(&test_pred, test_target, train.n_classes)?,
    ))
}

pub fn construct_features(ds: &Dataset, config: &FcsConfig) -> Result<FcsResult> {
    let Setup { split, folds, learner } = setup(ds, config)?;
    let (train, test) = (&split.train, &split.test);
    let terminals = TerminalSet::new(train.n_original(), train.erc_range());

    let mut rounds = Vec::with_capacity(config.k);
    let mut features = Vec::with_capacity(config.k);
    let mut train_features: Vec<FeatureVector> = Vec::with_capacity(config.k);
    let mut test_features: Vec<FeatureVector> = Vec::with_capacity(config.k);
    for k in 1..=config.k {
        let started = Instant::now();
        let search = SearchConfig {
            seed: derive_seed(config.seed, 1000 + k as u64),
            ..config.search
        };
        let mut fitness = CandidateEvaluator::new(train, train_features.clone(), &folds, learner, config.augment);
        let outcome = run_search(&search, &terminals, &mut fitness)?;
        if outcome.valid_found && train_features.contains(&outcome.best_values) {
            return Err(Error::Invariant(format!(
                "round {k} accepted a duplicate of an earlier feature"
            )));
        }
        train_features.push(outcome.best_values.clone());
        test_features.push(eval_tree(&outcome.best, test.original_columns())?);

        let mut train_cols = if config.augment { train.original_columns().to_vec() } else { Vec::new() };
        train_cols.extend(train_features.iter().cloned());
        let mut test_cols = if config.augment { test.original_columns().to_vec() } else { Vec::new() };
        test_cols.extend(test_features.iter().cloned());
        let (train_full_error, test_error, test_score) = fit_and_score(
            &learner,
            TrainingData {
                columns: &train_cols,
                target: train.target(),
                task: train.task(),
                n_classes: train.n_classes(),
            },
            &test_cols,
            test.target(),
        )?;

        rounds.push(RoundResult {
            k,
            train_cv_error: outcome.best_error,
            train_full_error,
            test_error,
            test_score,
            expression: to_infix(&outcome.best, false),
            expression_expanded: to_infix(&outcome.best, true),
            size: outcome.best.size(),
            height: outcome.best.height(),
            evaluations_used: outcome.evaluations_used,
            no_valid_candidate: !outcome.valid_found,
            trace: outcome.trace,
            wall_seconds: started.elapsed().as_secs_f64(),
        });
        features.push(outcome.best);
    }
    Ok(FcsResult {
        rounds,
        features,
        train_features,
        test_features,
        train_rows: split.train_rows,
        test_rows: split.test_rows,
        metric: metric_for(ds.task()),
    })
}

/// The learner on the original feature set, with the split and folds an
/// FCS run with the same config would use.
pub fn baseline_scores(ds: &Dataset, config: &FcsConfig) -> Result<BaselineScores> {
    let Setup { split, folds, learner } = setup(ds, config)?;
    let data = TrainingData {
        columns: split.train.columns(),
        target: split.train.target(),
        task: split.train.task(),
        n_classes: split.train.n_classes(),
    };
    let train_cv_error = cross_val_error_columns(&learner, data, &folds)?.value;
    let (_, test_error, test_score) = fit_and_score(&learner, data, split.test.columns(), split.test.target())?;
    Ok(BaselineScores {
        train_cv_error,
        test_error,
        test_score,
    })
}
