//! Command-line front end.
//!
//! `featcon run` executes one configuration `--repeats` times (seeds
//! `seed`, `seed + 1`, ...) and writes into `--out`:
//! - `results.jsonl`: one line per run, in run order;
//! - `expressions.txt`: the constructed features of every run;
//! - `summary.csv`: per-run test scores plus a median row;
//! - `manifest.json`: configuration, dataset fingerprint, version, timings;
//! - with `--export-grid R`, `grid.csv` and `points.csv` for the run with
//!   the median final test score.
//!
//! Timings only appear in the manifest, so repeated runs of one
//! configuration give byte-identical results files.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::mpsc;

use clap::{Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use crate::dataset::{load_csv, Dataset, TargetColumn, Task};
use crate::error::{Error, Result};
use crate::fcs::{baseline_scores, construct_features, BaselineScores, FcsConfig, FcsResult};
use crate::learners::{fit_columns, LearnerKind, LearnerSpec, Predictions, TrainingData};
use crate::search::{Algorithm, SearchConfig};

#[derive(Debug, Parser)]
#[command(name = "featcon", version, about = "Evolutionary construction of small interpretable features")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Construct features for a dataset and score them.
    Run(RunArgs),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Classification,
    Regression,
}

impl From<TaskArg> for Task {
    fn from(t: TaskArg) -> Self {
        match t {
            TaskArg::Classification => Task::Classification,
            TaskArg::Regression => Task::Regression,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LearnerArg {
    Gnb,
    Ols,
    Cart,
    Rf,
}

impl From<LearnerArg> for LearnerKind {
    fn from(l: LearnerArg) -> Self {
        match l {
            LearnerArg::Gnb => LearnerKind::Gnb,
            LearnerArg::Ols => LearnerKind::Ols,
            LearnerArg::Cart => LearnerKind::Cart,
            LearnerArg::Rf => LearnerKind::Rf,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SearchArg {
    Rs,
    Sgp,
    Sgpb,
    GomeaRt,
    GomeaLt,
}

impl From<SearchArg> for Algorithm {
    fn from(s: SearchArg) -> Self {
        match s {
            SearchArg::Rs => Algorithm::Rs,
            SearchArg::Sgp => Algorithm::Sgp,
            SearchArg::Sgpb => Algorithm::Sgpb,
            SearchArg::GomeaRt => Algorithm::GomeaRt,
            SearchArg::GomeaLt => Algorithm::GomeaLt,
        }
    }
}

/// Below this population size the linkage tree is poorly estimated.
pub const LT_MIN_POPULATION: usize = 1000;

#[derive(Debug, Clone, clap::Args)]
pub struct RunArgs {
    /// CSV file with a header row.
    #[arg(long)]
    pub data: PathBuf,
    /// Target column name or 0-based index (default: last column).
    #[arg(long)]
    pub target: Option<String>,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    /// Default: gnb for classification, ols for regression.
    #[arg(long, value_enum)]
    pub learner: Option<LearnerArg>,
    #[arg(long, value_enum, default_value = "gomea-rt")]
    pub search: SearchArg,
    /// Maximum tree height of bounded searches.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..=8))]
    pub height: u64,
    /// Number of features to construct.
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(1..))]
    pub k: u64,
    #[arg(long, default_value_t = 100, value_parser = clap::value_parser!(u64).range(1..))]
    pub pop: u64,
    /// Cross-validations per round.
    #[arg(long, default_value_t = 10_000, value_parser = clap::value_parser!(u64).range(1..))]
    pub budget: u64,
    #[arg(long, default_value_t = 5, value_parser = clap::value_parser!(u64).range(2..))]
    pub folds: u64,
    #[arg(long, default_value_t = 0.2)]
    pub test_fraction: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub repeats: u64,
    /// Runs executed in parallel.
    #[arg(long, default_value_t = 1, value_parser = clap::value_parser!(u64).range(1..))]
    pub jobs: u64,
    /// Score constructed features alongside the original ones.
    #[arg(long)]
    pub augment: bool,
    /// Charge the budget for candidates rejected by the skip criteria.
    #[arg(long)]
    pub count_skipped_evals: bool,
    #[arg(long, default_value = "out")]
    pub out: PathBuf,
    /// Write a RESOLUTION x RESOLUTION prediction grid over the first two
    /// constructed features.
    #[arg(long, value_name = "RESOLUTION", value_parser = clap::value_parser!(u64).range(2..))]
    pub export_grid: Option<u64>,
}

impl RunArgs {
    pub fn task(&self) -> Task {
        self.task.into()
    }

    pub fn learner(&self) -> LearnerKind {
        match self.learner {
            Some(l) => l.into(),
            None => match self.task() {
                Task::Classification => LearnerKind::Gnb,
                Task::Regression => LearnerKind::Ols,
            },
        }
    }

    pub fn target(&self) -> TargetColumn {
        self.target
            .as_deref()
            .map_or(TargetColumn::Last, |s| s.parse().expect("infallible"))
    }

    /// Configuration of the first repeat.
    pub fn fcs_config(&self) -> FcsConfig {
        let search = SearchConfig {
            algorithm: self.search.into(),
            population_size: self.pop as usize,
            eval_budget: self.budget as usize,
            h: self.height as usize,
            count_skipped: self.count_skipped_evals,
            ..SearchConfig::default()
        };
        FcsConfig {
            k: self.k as usize,
            search,
            learner: LearnerSpec::new(self.learner(), 0),
            folds: self.folds as usize,
            test_fraction: self.test_fraction,
            seed: self.seed,
            augment: self.augment,
        }
    }
}

/// Parses `args` (program name first) and runs. Usage errors exit with 2,
/// data and I/O errors with 1.
pub fn main_with_args<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 2 } else { 0 });
        }
    };
    match cli.command {
        Command::Run(args) => match run(&args) {
            Ok(()) => ExitCode::SUCCESS,
            Err(e) => {
                eprintln!("error: {e}");
                ExitCode::from(1)
            }
        },
    }
}

/// Everything one run reports, minus timings.
#[derive(Debug, Clone, Serialize)]
pub struct RunRecord {
    pub run: usize,
    pub seed: u64,
    #[serde(flatten)]
    pub outcome: RunOutcome,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum RunOutcome {
    Ok {
        metric: crate::learners::Metric,
        baseline: BaselineScores,
        rounds: Vec<crate::fcs::RoundResult>,
        evaluations_used: usize,
        #[serde(skip)]
        result: Box<FcsResult>,
    },
    Failed {
        error: String,
    },
}

impl RunRecord {
    pub fn result(&self) -> Option<&FcsResult> {
        match &self.outcome {
            RunOutcome::Ok { result, .. } => Some(result),
            RunOutcome::Failed { .. } => None,
        }
    }

    pub fn baseline(&self) -> Option<&BaselineScores> {
        match &self.outcome {
            RunOutcome::Ok { baseline, .. } => Some(baseline),
            RunOutcome::Failed { .. } => None,
        }
    }

    pub fn wall_seconds(&self) -> Vec<f64> {
        self.result()
            .map(|r| r.rounds.iter().map(|x| x.wall_seconds).collect())
            .unwrap_or_default()
    }
}

/// One construction run plus its baseline.
pub fn execute_run(ds: &Dataset, config: &FcsConfig, run: usize) -> RunRecord {
    let outcome = (|| -> Result<RunOutcome> {
        let result = construct_features(ds, config)?;
        let baseline = baseline_scores(ds, config)?;
        Ok(RunOutcome::Ok {
            metric: result.metric,
            baseline,
            rounds: result.rounds.clone(),
            evaluations_used: result.rounds.iter().map(|r| r.evaluations_used).sum(),
            result: Box::new(result),
        })
    })()
    .unwrap_or_else(|e| RunOutcome::Failed { error: e.to_string() });
    RunRecord {
        run,
        seed: config.seed,
        outcome,
    }
}

/// Runs every configuration `repeats` times with seeds `seed + i`, on up to
/// `jobs` threads. `sink` receives the records in (config, repeat) order as
/// soon as each prefix is complete. A failed run is recorded and the batch
/// continues.
pub fn emit_batch(
    ds: &Dataset,
    configs: &[FcsConfig],
    repeats: usize,
    jobs: usize,
    mut sink: impl FnMut(&RunRecord) -> Result<()>,
) -> Result<Vec<RunRecord>> {
    if repeats == 0 {
        return Err(Error::InvalidInput("repeats must be at least 1".into()));
    }
    let tasks: Vec<FcsConfig> = configs
        .iter()
        .flat_map(|c| {
            (0..repeats as u64).map(move |i| FcsConfig {
                seed: c.seed.wrapping_add(i),
                ..*c
            })
        })
        .collect();
    let next = AtomicUsize::new(0);
    let (tx, rx) = mpsc::channel::<RunRecord>();
    let mut records: Vec<Option<RunRecord>> = vec![None; tasks.len()];
    std::thread::scope(|scope| -> Result<()> {
        for _ in 0..jobs.clamp(1, tasks.len().max(1)) {
            let tx = tx.clone();
            let (tasks, next) = (&tasks, &next);
            scope.spawn(move || loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                if i >= tasks.len() {
                    break;
                }
                if tx.send(execute_run(ds, &tasks[i], i)).is_err() {
                    break;
                }
            });
        }
        drop(tx);
        let mut written = 0;
        for rec in rx {
            let i = rec.run;
            records[i] = Some(rec);
            while written < records.len() {
                let Some(r) = &records[written] else { break };
                sink(r)?;
                written += 1;
            }
        }
        Ok(())
    })?;
    Ok(records.into_iter().map(|r| r.expect("every run reports")).collect())
}

/// Median of the finite values; the mean of the middle two for even counts.
pub fn median(values: &[f64]) -> Option<f64> {
    let mut v: Vec<f64> = values.iter().copied().filter(|x| x.is_finite()).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> Error + '_ {
    move |source| Error::Io {
        path: path.to_path_buf(),
        source,
    }
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    File::create(path).map(BufWriter::new).map_err(io_err(path))
}

fn fmt_num(v: f64) -> String {
    if v.is_finite() {
        format!("{v}")
    } else {
        String::new()
    }
}

/// Summary rows: one per run, then a median row per configuration.
pub fn write_summary(path: &Path, records: &[RunRecord], k: usize, repeats: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|source| Error::Csv {
        path: path.to_path_buf(),
        source,
    })?;
    let mut header = vec!["config".to_string(), "run".into(), "seed".into(), "baseline_test_score".into()];
    header.extend((1..=k).map(|i| format!("test_score_k{i}")));
    header.extend((1..=k).map(|i| format!("train_cv_error_k{i}")));
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    w.write_record(&header).map_err(csv_err)?;
    for (c, group) in records.chunks(repeats).enumerate() {
        let mut columns: Vec<Vec<f64>> = vec![Vec::new(); 1 + 2 * k];
        for rec in group {
            let mut row = vec![c.to_string(), rec.run.to_string(), rec.seed.to_string()];
            let mut values = vec![rec.baseline().map_or(f64::NAN, |b| b.test_score)];
            match rec.result() {
                Some(r) => {
                    values.extend(r.rounds.iter().map(|x| x.test_score));
                    values.extend(r.rounds.iter().map(|x| x.train_cv_error));
                }
                None => values.extend(std::iter::repeat_n(f64::NAN, 2 * k)),
            }
            for (col, v) in columns.iter_mut().zip(&values) {
                col.push(*v);
            }
            row.extend(values.iter().map(|&v| fmt_num(v)));
            w.write_record(&row).map_err(csv_err)?;
        }
        let mut row = vec![c.to_string(), "median".into(), String::new()];
        row.extend(columns.iter().map(|col| median(col).map_or(String::new(), fmt_num)));
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(io_err(path))
}

/// Index of the successful run whose final test score is the lower median.
pub fn median_run(records: &[RunRecord]) -> Option<usize> {
    let mut scored: Vec<(f64, usize)> = records
        .iter()
        .enumerate()
        .filter_map(|(i, r)| r.result().and_then(|x| x.rounds.last()).map(|x| (x.test_score, i)))
        .filter(|(s, _)| !s.is_nan())
        .collect();
    if scored.is_empty() {
        return None;
    }
    scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
    Some(scored[(scored.len() - 1) / 2].1)
}

#[derive(Debug, Clone, PartialEq)]
pub struct GridExport {
    /// (lo, hi) of each axis.
    pub axis1: (f64, f64),
    pub axis2: (f64, f64),
    pub resolution: usize,
    /// Row-major over (axis1, axis2): (a1, a2, prediction).
    pub cells: Vec<(f64, f64, f64)>,
    /// (f1, f2, target, "train" | "test").
    pub points: Vec<(f64, f64, f64, &'static str)>,
}

fn axis_range(values: impl Iterator<Item = f64>) -> (f64, f64) {
    let (lo, hi) = values
        .filter(|v| v.is_finite())
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| (lo.min(v), hi.max(v)));
    if lo > hi {
        return (-1.0, 1.0);
    }
    let margin = if hi > lo { 0.05 * (hi - lo) } else { 0.5 };
    (lo - margin, hi + margin)
}

fn linspace((lo, hi): (f64, f64), n: usize) -> Vec<f64> {
    (0..n).map(|i| lo + (hi - lo) * i as f64 / (n - 1) as f64).collect()
}

/// Prediction grid of the learner fitted on the first two constructed
/// features, over their observed range on all rows plus a 5% margin.
pub fn export_grid(
    result: &FcsResult,
    train: &Dataset,
    test: &Dataset,
    learner: &LearnerSpec,
    resolution: usize,
) -> Result<GridExport> {
    if result.features.len() < 2 {
        return Err(Error::InvalidInput("grid export requires two constructed features".into()));
    }
    if resolution < 2 {
        return Err(Error::InvalidInput("grid resolution must be at least 2".into()));
    }
    let tr = &result.train_features[..2];
    let te = &result.test_features[..2];
    let axis1 = axis_range(tr[0].iter().chain(&te[0]).copied());
    let axis2 = axis_range(tr[1].iter().chain(&te[1]).copied());
    let model = fit_columns(
        learner,
        TrainingData {
            columns: tr,
            target: train.target(),
            task: train.task(),
            n_classes: train.n_classes(),
        },
    )?;
    let (g1, g2) = (linspace(axis1, resolution), linspace(axis2, resolution));
    let mut a1 = Vec::with_capacity(resolution * resolution);
    let mut a2 = Vec::with_capacity(resolution * resolution);
    for &u in &g1 {
        for &v in &g2 {
            a1.push(u);
            a2.push(v);
        }
    }
    let pred = match model.predict(&[a1.clone(), a2.clone()])? {
        p @ Predictions::Classes(_) => p.to_f64(),
        Predictions::Values(v) => v,
    };
    let cells = a1.into_iter().zip(a2).zip(pred).map(|((u, v), p)| (u, v, p)).collect();
    let mut points = Vec::with_capacity(train.n_rows() + test.n_rows());
    for (i, &y) in train.target().iter().enumerate() {
        points.push((tr[0][i], tr[1][i], y, "train"));
    }
    for (i, &y) in test.target().iter().enumerate() {
        points.push((te[0][i], te[1][i], y, "test"));
    }
    Ok(GridExport {
        axis1,
        axis2,
        resolution,
        cells,
        points,
    })
}

fn write_grid(dir: &Path, grid: &GridExport) -> Result<()> {
    let path = dir.join("grid.csv");
    let mut w = create(&path)?;
    let err = io_err(&path);
    writeln!(w, "axis1,axis2,prediction").map_err(&err)?;
    for (u, v, p) in &grid.cells {
        writeln!(w, "{u},{v},{p}").map_err(&err)?;
    }
    w.flush().map_err(&err)?;
    let path = dir.join("points.csv");
    let mut w = create(&path)?;
    let err = io_err(&path);
    writeln!(w, "f1,f2,target,split").map_err(&err)?;
    for (a, b, y, s) in &grid.points {
        writeln!(w, "{},{},{y},{s}", fmt_num(*a), fmt_num(*b)).map_err(&err)?;
    }
    w.flush().map_err(&err)
}

fn config_echo(args: &RunArgs) -> serde_json::Value {
    json!({
        "data": args.data.display().to_string(),
        "target": args.target,
        "task": args.task().to_string(),
        "learner": args.learner().to_string(),
        "search": Algorithm::from(args.search).to_string(),
        "height": args.height,
        "k": args.k,
        "pop": args.pop,
        "budget": args.budget,
        "folds": args.folds,
        "test_fraction": args.test_fraction,
        "seed": args.seed,
        "repeats": args.repeats,
        "augment": args.augment,
        "count_skipped_evals": args.count_skipped_evals,
    })
}

pub fn run(args: &RunArgs) -> Result<()> {
    if !(args.test_fraction > 0.0 && args.test_fraction < 1.0) {
        return Err(Error::InvalidInput(format!(
            "--test-fraction {} not in (0, 1)",
            args.test_fraction
        )));
    }
    let config = args.fcs_config();
    if config.search.algorithm == Algorithm::GomeaLt && config.search.population_size < LT_MIN_POPULATION {
        eprintln!(
            "warning: the linkage tree is estimated from the population; with --pop {} it may do worse than gomea-rt",
            config.search.population_size
        );
    }
    if args.export_grid.is_some() && args.k < 2 {
        return Err(Error::InvalidInput("grid export requires two constructed features".into()));
    }
    let ds = load_csv(&args.data, &args.target(), args.task())?;
    config.validate()?;
    config.learner.check_task(ds.task())?;
    fs::create_dir_all(&args.out).map_err(io_err(&args.out))?;

    let echo = config_echo(args);
    let results_path = args.out.join("results.jsonl");
    let mut results = create(&results_path)?;
    let expr_path = args.out.join("expressions.txt");
    let mut expressions = create(&expr_path)?;
    writeln!(expressions, "run\tseed\tround\tsize\theight\texpression").map_err(io_err(&expr_path))?;

    let records = emit_batch(&ds, &[config], args.repeats as usize, args.jobs as usize, |rec| {
        let mut line = serde_json::to_value(rec).map_err(|e| Error::Invariant(e.to_string()))?;
        line["config"] = echo.clone();
        writeln!(results, "{line}").map_err(io_err(&results_path))?;
        results.flush().map_err(io_err(&results_path))?;
        if let Some(r) = rec.result() {
            for x in &r.rounds {
                writeln!(
                    expressions,
                    "{}\t{}\t{}\t{}\t{}\t{}",
                    rec.run, rec.seed, x.k, x.size, x.height, x.expression
                )
                .map_err(io_err(&expr_path))?;
            }
            expressions.flush().map_err(io_err(&expr_path))?;
        } else if let RunOutcome::Failed { error } = &rec.outcome {
            eprintln!("run {} (seed {}) failed: {error}", rec.run, rec.seed);
        }
        Ok(())
    })?;

    write_summary(&args.out.join("summary.csv"), &records, args.k as usize, args.repeats as usize)?;

    let mut grid_run = None;
    if let Some(res) = args.export_grid {
        let i = median_run(&records).ok_or_else(|| Error::InvalidInput("no successful run to export".into()))?;
        let r = records[i].result().expect("median run succeeded");
        let run_config = FcsConfig {
            seed: records[i].seed,
            ..config
        };
        let split = crate::dataset::split_train_test(&ds, run_config.test_fraction, run_config.seed)?;
        let learner = LearnerSpec {
            seed: crate::derive_seed(run_config.seed, 2),
            ..run_config.learner
        };
        let grid = export_grid(r, &split.train, &split.test, &learner, res as usize)?;
        write_grid(&args.out, &grid)?;
        grid_run = Some(i);
    }

    let runs: Vec<_> = records
        .iter()
        .map(|r| {
            json!({
                "run": r.run,
                "seed": r.seed,
                "ok": r.result().is_some(),
                "wall_seconds_per_round": r.wall_seconds(),
            })
        })
        .collect();
    let manifest = json!({
        "tool": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": echo,
        "fcs_config": config,
        "dataset": {
            "path": args.data.display().to_string(),
            "rows": ds.n_rows(),
            "features": ds.n_features(),
            "classes": ds.n_classes(),
            "content_hash": ds.content_hash(),
        },
        "runs": runs,
        "grid_run": grid_run,
        "outputs": BTreeMap::from([
            ("results", "results.jsonl"),
            ("expressions", "expressions.txt"),
            ("summary", "summary.csv"),
        ]),
    });
    let path = args.out.join("manifest.json");
    let mut w = create(&path)?;
    serde_json::to_writer_pretty(&mut w, &manifest).map_err(|e| Error::Invariant(e.to_string()))?;
    writeln!(w).map_err(io_err(&path))?;
    w.flush().map_err(io_err(&path))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn medians() {
        assert_eq!(median(&[3.0]), Some(3.0));
        assert_eq!(median(&[3.0, 1.0, 2.0]), Some(2.0));
        assert_eq!(median(&[4.0, 1.0, 2.0, 3.0]), Some(2.5));
        assert_eq!(median(&[f64::NAN]), None);
    }

    #[test]
    fn defaults() {
        let cli = Cli::try_parse_from(["featcon", "run", "--data", "x.csv", "--task", "regression"]).unwrap();
        let Command::Run(args) = cli.command;
        assert_eq!(args.learner(), LearnerKind::Ols);
        assert_eq!(args.target(), TargetColumn::Last);
        let c = args.fcs_config();
        assert_eq!((c.k, c.folds, c.search.population_size, c.search.eval_budget), (5, 5, 100, 10_000));
        assert_eq!(c.search.algorithm, Algorithm::GomeaRt);
    }

    #[test]
    fn missing_data_is_a_usage_error() {
        let err = Cli::try_parse_from(["featcon", "run", "--task", "regression"]).unwrap_err();
        assert!(err.use_stderr());
        assert_eq!(err.exit_code(), 2);
    }

    #[test]
    fn grid_shape() {
        let r = linspace((0.0, 1.0), 3);
        assert_eq!(r, vec![0.0, 0.5, 1.0]);
        assert_eq!(axis_range([1.0, 3.0].into_iter()), (0.9, 3.1));
        assert_eq!(axis_range([2.0, 2.0].into_iter()), (1.5, 2.5));
    }
}
