//! Search algorithms that produce one feature per construction round:
//! random search, standard GP (free or height-bounded) and GP-GOMEA with a
//! random-tree or linkage-tree family of subsets.
//!
//! Every candidate goes through an [`Evaluator`], which applies the skip
//! criteria, charges the evaluation budget, and tracks the best tree.

mod gomea;
mod sgp;

use std::fmt;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub use gomea::{build_linkage_tree, build_random_tree, gom_step, gom_variation, Fos, GomStep};
pub use sgp::{subtree_crossover, subtree_mutation, tournament_select};

use crate::error::{Error, Result};
use crate::exprtree::{init_population, sample_tree, DynTree, InitMethod, InitScheme, TerminalSet};
use crate::semantics::{check_criteria, eval_tree, Bounds, CachedOutput, FeatureVector, Verdict};

/// Generations (or random-search batches) in a row that spend no budget
/// before the search gives up. Only reachable when every candidate is a
/// free skip, e.g. a converged population.
pub const MAX_IDLE_GENERATIONS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Algorithm {
    Rs,
    Sgp,
    Sgpb,
    GomeaRt,
    GomeaLt,
}

impl fmt::Display for Algorithm {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Algorithm::Rs => "rs",
            Algorithm::Sgp => "sgp",
            Algorithm::Sgpb => "sgpb",
            Algorithm::GomeaRt => "gomea-rt",
            Algorithm::GomeaLt => "gomea-lt",
        })
    }
}

impl FromStr for Algorithm {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "rs" => Ok(Algorithm::Rs),
            "sgp" => Ok(Algorithm::Sgp),
            "sgpb" => Ok(Algorithm::Sgpb),
            "gomea-rt" => Ok(Algorithm::GomeaRt),
            "gomea-lt" => Ok(Algorithm::GomeaLt),
            _ => Err(Error::InvalidInput(format!("unknown search '{s}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SgpParams {
    pub crossover_rate: f64,
    pub mutation_rate: f64,
    pub tournament_size: usize,
    pub elitism: usize,
    /// Height cap of unbounded SGP; the bounded variant uses `h`.
    pub max_height: usize,
    /// Upper end of the initialization ramp of unbounded SGP.
    pub init_max_height: usize,
}

impl Default for SgpParams {
    fn default() -> Self {
        Self {
            crossover_rate: 0.9,
            mutation_rate: 0.1,
            tournament_size: 7,
            elitism: 1,
            max_height: crate::exprtree::MAX_DYN_HEIGHT,
            init_max_height: 6,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SearchConfig {
    pub algorithm: Algorithm,
    pub population_size: usize,
    pub eval_budget: usize,
    pub h: usize,
    pub sgp: SgpParams,
    pub uniqueness_tries: usize,
    /// Charge the budget for constant, extreme and duplicate candidates too.
    pub count_skipped: bool,
    pub bounds: Bounds,
    pub seed: u64,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            algorithm: Algorithm::GomeaRt,
            population_size: 100,
            eval_budget: 10_000,
            h: 2,
            sgp: SgpParams::default(),
            uniqueness_tries: 100,
            count_skipped: false,
            bounds: Bounds::default(),
            seed: 0,
        }
    }
}

impl SearchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.h == 0 {
            return Err(Error::InvalidInput("height must be at least 1".into()));
        }
        if self.population_size == 0 {
            return Err(Error::InvalidInput("population size must be positive".into()));
        }
        if self.population_size < 2 && self.algorithm != Algorithm::Rs {
            return Err(Error::InvalidInput(format!(
                "{} needs a population of at least 2",
                self.algorithm
            )));
        }
        if self.eval_budget == 0 {
            return Err(Error::InvalidInput("evaluation budget must be positive".into()));
        }
        let s = &self.sgp;
        if (s.crossover_rate + s.mutation_rate - 1.0).abs() > 1e-12
            || !(0.0..=1.0).contains(&s.crossover_rate)
        {
            return Err(Error::InvalidInput(
                "crossover and mutation rates must be in [0, 1] and sum to 1".into(),
            ));
        }
        if s.tournament_size == 0 {
            return Err(Error::InvalidInput("tournament size must be positive".into()));
        }
        if s.elitism >= self.population_size && self.algorithm != Algorithm::Rs {
            return Err(Error::InvalidInput("elitism must be below the population size".into()));
        }
        Ok(())
    }
}

/// The function a search minimizes. Implementations own the learner and the
/// data; the evaluator handles everything that can be decided from the
/// feature values alone.
pub trait Fitness {
    /// Columns the trees read (`Feature(i)` is column `i`).
    fn columns(&self) -> &[Vec<f64>];
    /// Features constructed in earlier rounds.
    fn previous(&self) -> &[FeatureVector];
    /// Error assigned to rejected candidates.
    fn max_error(&self) -> f64;
    /// The expensive part, charged one unit of budget per call.
    fn cross_validate(&mut self, values: &[f64]) -> Result<f64>;
}

/// A [`Fitness`] backed by a closure; handy for tests and toy problems.
pub struct FnFitness<F> {
    pub columns: Vec<Vec<f64>>,
    pub previous: Vec<FeatureVector>,
    pub max_error: f64,
    pub f: F,
}

impl<F: FnMut(&[f64]) -> f64> Fitness for FnFitness<F> {
    fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    fn previous(&self) -> &[FeatureVector] {
        &self.previous
    }

    fn max_error(&self) -> f64 {
        self.max_error
    }

    fn cross_validate(&mut self, values: &[f64]) -> Result<f64> {
        Ok((self.f)(values))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EvalBudget {
    pub used: usize,
    pub limit: usize,
}

impl EvalBudget {
    pub fn new(limit: usize) -> Self {
        Self { used: 0, limit }
    }

    pub fn exhausted(&self) -> bool {
        self.used >= self.limit
    }
}

/// One improvement of the best-so-far error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TracePoint {
    pub evals: usize,
    pub best_error: f64,
}

/// Result of evaluating one candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub values: FeatureVector,
    pub error: f64,
    pub verdict: Verdict,
}

impl Scored {
    pub fn cached(&self) -> CachedOutput {
        CachedOutput {
            values: self.values.clone(),
            error: self.error,
        }
    }
}

#[derive(Debug, Clone)]
struct Best {
    tree: DynTree,
    values: FeatureVector,
    error: f64,
    rejected: bool,
}

pub struct Evaluator<'a> {
    fitness: &'a mut dyn Fitness,
    budget: EvalBudget,
    bounds: Bounds,
    count_skipped: bool,
    best: Option<Best>,
    trace: Vec<TracePoint>,
    valid_found: bool,
}

impl<'a> Evaluator<'a> {
    pub fn new(fitness: &'a mut dyn Fitness, budget: usize, bounds: Bounds, count_skipped: bool) -> Self {
        Self {
            fitness,
            budget: EvalBudget::new(budget),
            bounds,
            count_skipped,
            best: None,
            trace: Vec::new(),
            valid_found: false,
        }
    }

    pub fn budget(&self) -> EvalBudget {
        self.budget
    }

    pub fn exhausted(&self) -> bool {
        self.budget.exhausted()
    }

    pub fn best_error(&self) -> Option<f64> {
        self.best.as_ref().map(|b| b.error)
    }

    /// Scores `tree`, or returns `None` once the budget is spent. `cached`
    /// is the output of the individual this candidate was derived from; an
    /// identical output reuses its error for free.
    pub fn evaluate(&mut self, tree: &DynTree, cached: Option<&CachedOutput>) -> Result<Option<Scored>> {
        if self.budget.exhausted() {
            return Ok(None);
        }
        let values = eval_tree(tree, self.fitness.columns())?;
        let verdict = check_criteria(
            &values,
            self.fitness.previous(),
            self.bounds,
            cached.map(|c| c.values.as_slice()),
        )?;
        let error = match verdict {
            Verdict::Valid => {
                self.budget.used += 1;
                self.valid_found = true;
                let e = self.fitness.cross_validate(&values)?;
                if e.is_nan() {
                    self.fitness.max_error()
                } else {
                    e
                }
            }
            Verdict::Unchanged => cached.map_or(self.fitness.max_error(), |c| c.error),
            Verdict::Constant | Verdict::Extreme | Verdict::Duplicate => {
                if self.count_skipped {
                    self.budget.used += 1;
                }
                self.fitness.max_error()
            }
        };
        self.observe(tree, &values, error, verdict.is_rejected());
        Ok(Some(Scored { values, error, verdict }))
    }

    /// Strictly lower error wins; at equal error a valid tree displaces a
    /// rejected one.
    fn observe(&mut self, tree: &DynTree, values: &[f64], error: f64, rejected: bool) {
        let better = match &self.best {
            None => true,
            Some(b) => error < b.error || (error == b.error && b.rejected && !rejected),
        };
        if better {
            self.best = Some(Best {
                tree: tree.clone(),
                values: values.to_vec(),
                error,
                rejected,
            });
            self.trace.push(TracePoint {
                evals: self.budget.used,
                best_error: error,
            });
        }
    }

    fn finish(self) -> Result<SearchOutcome> {
        let best = self
            .best
            .ok_or_else(|| Error::Invariant("search finished without evaluating a candidate".into()))?;
        Ok(SearchOutcome {
            best: best.tree,
            best_error: best.error,
            best_values: best.values,
            trace: self.trace,
            evaluations_used: self.budget.used,
            valid_found: self.valid_found,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: DynTree,
    pub best_error: f64,
    pub best_values: FeatureVector,
    pub trace: Vec<TracePoint>,
    pub evaluations_used: usize,
    /// False when every candidate was rejected by the skip criteria.
    pub valid_found: bool,
}

/// A genome with the output and error of its last evaluation.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual<G> {
    pub genome: G,
    pub values: FeatureVector,
    pub error: f64,
}

impl<G> Individual<G> {
    pub fn cached(&self) -> CachedOutput {
        CachedOutput {
            values: self.values.clone(),
            error: self.error,
        }
    }
}

/// Runs one search. The best tree is the lowest-error candidate evaluated
/// within the budget; with a fixed seed the result is reproducible.
pub fn run_search(config: &SearchConfig, terminals: &TerminalSet, fitness: &mut dyn Fitness) -> Result<SearchOutcome> {
    config.validate()?;
    if terminals.n_features == 0 {
        return Err(Error::InvalidInput("no features to build trees from".into()));
    }
    if terminals.n_features > fitness.columns().len() {
        return Err(Error::FeatureIndex {
            index: terminals.n_features - 1,
            available: fitness.columns().len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut ev = Evaluator::new(fitness, config.eval_budget, config.bounds, config.count_skipped);
    match config.algorithm {
        Algorithm::Rs => random_search(config, terminals, &mut ev, &mut rng)?,
        Algorithm::Sgp | Algorithm::Sgpb => sgp::run(config, terminals, &mut ev, &mut rng)?,
        Algorithm::GomeaRt | Algorithm::GomeaLt => gomea::run(config, terminals, &mut ev, &mut rng)?,
    }
    ev.finish()
}

/// Samples batches of `population_size` trees with ramped half-and-half over
/// `[2, h]` until the budget runs out. Uniqueness holds within a batch only.
fn random_search(
    config: &SearchConfig,
    terminals: &TerminalSet,
    ev: &mut Evaluator<'_>,
    rng: &mut ChaCha8Rng,
) -> Result<()> {
    let scheme = InitScheme::Ramped(2.min(config.h), config.h);
    let mut idle = 0;
    while idle < MAX_IDLE_GENERATIONS {
        let before = ev.budget().used;
        let batch = init_population(config.population_size, scheme, 0, config.uniqueness_tries, terminals, rng);
        for tree in &batch {
            if ev.evaluate(tree, None)?.is_none() {
                return Ok(());
            }
        }
        idle = if ev.budget().used == before { idle + 1 } else { 0 };
    }
    Ok(())
}

/// A fresh GROW subtree no taller than `max_height`.
pub(crate) fn grow_subtree(max_height: usize, terminals: &TerminalSet, rng: &mut ChaCha8Rng) -> DynTree {
    sample_tree(InitMethod::Grow, 0, max_height, terminals, rng)
}
