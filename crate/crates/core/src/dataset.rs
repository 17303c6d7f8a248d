//! Tabular datasets: loading, splitting, folding and column bookkeeping.
//!
//! Features are stored column-major since both tree evaluation and the
//! learners scan whole columns.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Classification,
    Regression,
}

impl fmt::Display for Task {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Task::Classification => f.write_str("classification"),
            Task::Regression => f.write_str("regression"),
        }
    }
}

impl FromStr for Task {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "classification" => Ok(Task::Classification),
            "regression" => Ok(Task::Regression),
            other => Err(Error::InvalidInput(format!("unknown task '{other}'"))),
        }
    }
}

/// Target column selector: a header name or a zero-based column index.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum TargetColumn {
    Name(String),
    Index(usize),
    Last,
}

impl FromStr for TargetColumn {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s.parse::<usize>() {
            Ok(i) => TargetColumn::Index(i),
            Err(_) => TargetColumn::Name(s.to_string()),
        })
    }
}

#[derive(Debug, Clone)]
pub struct Dataset {
    columns: Vec<Vec<f64>>,
    target: Vec<f64>,
    task: Task,
    column_names: Vec<String>,
    n_original: usize,
    class_labels: Vec<String>,
}

impl Dataset {
    /// Builds a dataset from feature columns and a target.
    ///
    /// For classification the target must hold integer class ids; the class
    /// count is `max id + 1` unless `class_labels` is non-empty.
    pub fn new(
        columns: Vec<Vec<f64>>,
        target: Vec<f64>,
        task: Task,
        column_names: Vec<String>,
        class_labels: Vec<String>,
    ) -> Result<Self> {
        if target.len() < 2 {
            return Err(Error::InvalidDataset(format!(
                "need at least 2 rows, got {}",
                target.len()
            )));
        }
        if columns.is_empty() {
            return Err(Error::InvalidDataset("need at least 1 feature column".into()));
        }
        let ds = Self::from_parts(columns, target, task, column_names, class_labels)?;
        Ok(ds)
    }

    fn from_parts(
        columns: Vec<Vec<f64>>,
        target: Vec<f64>,
        task: Task,
        column_names: Vec<String>,
        mut class_labels: Vec<String>,
    ) -> Result<Self> {
        let n = target.len();
        if let Some((j, c)) = columns.iter().enumerate().find(|(_, c)| c.len() != n) {
            return Err(Error::InvalidDataset(format!(
                "column {j} has {} rows, target has {n}",
                c.len()
            )));
        }
        if column_names.len() != columns.len() {
            return Err(Error::InvalidDataset(format!(
                "{} column names for {} columns",
                column_names.len(),
                columns.len()
            )));
        }
        if task == Task::Classification {
            let mut max_id = 0usize;
            for &y in &target {
                if !(y >= 0.0 && y.fract() == 0.0 && y.is_finite()) {
                    return Err(Error::InvalidDataset(format!(
                        "classification target {y} is not a class id"
                    )));
                }
                max_id = max_id.max(y as usize);
            }
            if class_labels.is_empty() {
                class_labels = (0..=max_id).map(|c| c.to_string()).collect();
            } else if max_id >= class_labels.len() {
                return Err(Error::InvalidDataset(format!(
                    "class id {max_id} exceeds {} labels",
                    class_labels.len()
                )));
            }
        } else {
            class_labels.clear();
        }
        let n_original = columns.len();
        Ok(Self {
            columns,
            target,
            task,
            column_names,
            n_original,
            class_labels,
        })
    }

    pub fn n_rows(&self) -> usize {
        self.target.len()
    }

    pub fn n_features(&self) -> usize {
        self.columns.len()
    }

    /// Number of columns present at load time; appended columns are not counted.
    pub fn n_original(&self) -> usize {
        self.n_original
    }

    pub fn columns(&self) -> &[Vec<f64>] {
        &self.columns
    }

    pub fn original_columns(&self) -> &[Vec<f64>] {
        &self.columns[..self.n_original]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.columns[j]
    }

    pub fn target(&self) -> &[f64] {
        &self.target
    }

    pub fn task(&self) -> Task {
        self.task
    }

    pub fn column_names(&self) -> &[String] {
        &self.column_names
    }

    /// Size of the fixed class set (0 for regression).
    pub fn n_classes(&self) -> usize {
        self.class_labels.len()
    }

    pub fn class_labels(&self) -> &[String] {
        &self.class_labels
    }

    /// Class ids of the target (classification only).
    pub fn class_ids(&self) -> Vec<usize> {
        self.target.iter().map(|&y| y as usize).collect()
    }

    /// Row subset in the given order. The class set and original-column
    /// count carry over.
    pub fn select_rows(&self, rows: &[usize]) -> Dataset {
        Dataset {
            columns: self
                .columns
                .iter()
                .map(|c| rows.iter().map(|&r| c[r]).collect())
                .collect(),
            target: rows.iter().map(|&r| self.target[r]).collect(),
            task: self.task,
            column_names: self.column_names.clone(),
            n_original: self.n_original,
            class_labels: self.class_labels.clone(),
        }
    }

    /// Same rows and target with a different feature set. The new columns
    /// count as original ones.
    pub fn with_features(&self, columns: Vec<Vec<f64>>, names: Vec<String>) -> Result<Dataset> {
        if columns.is_empty() {
            return Err(Error::InvalidDataset("need at least 1 feature column".into()));
        }
        let mut ds = Self::from_parts(
            columns,
            self.target.clone(),
            self.task,
            names,
            self.class_labels.clone(),
        )?;
        ds.n_original = ds.columns.len();
        Ok(ds)
    }

    /// Returns a copy with one extra column. The source is unchanged.
    pub fn append_feature(&self, values: Vec<f64>, name: &str) -> Result<Dataset> {
        if values.len() != self.n_rows() {
            return Err(Error::LengthMismatch {
                expected: self.n_rows(),
                actual: values.len(),
            });
        }
        let mut ds = self.clone();
        ds.columns.push(values);
        ds.column_names.push(name.to_string());
        Ok(ds)
    }

    /// Global (min, max) over all cells of the original feature columns.
    pub fn erc_range(&self) -> (f64, f64) {
        self.original_columns()
            .iter()
            .flatten()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    /// SHA-256 over the feature and target bits, row-major.
    pub fn content_hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let mut h = Sha256::new();
        for r in 0..self.n_rows() {
            for c in &self.columns {
                h.update(c[r].to_le_bytes());
            }
            h.update(self.target[r].to_le_bytes());
        }
        h.finalize().iter().map(|b| format!("{b:02x}")).collect()
    }
}

fn is_missing(cell: &str) -> bool {
    cell.is_empty() || cell == "NA"
}

/// Loads a headered, comma-separated file. Rows with any missing cell
/// (empty or `NA`) are dropped.
pub fn load_csv(path: impl AsRef<Path>, target: &TargetColumn, task: Task) -> Result<Dataset> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| Error::Io {
        path: path.to_path_buf(),
        source,
    })?;
    read_csv(file, target, task).map_err(|e| match e {
        Error::Csv { source, .. } => Error::Csv {
            path: path.to_path_buf(),
            source,
        },
        other => other,
    })
}

/// [`load_csv`] over any reader.
pub fn read_csv<R: std::io::Read>(reader: R, target: &TargetColumn, task: Task) -> Result<Dataset> {
    let csv_err = |source| Error::Csv {
        path: Default::default(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);
    let header: Vec<String> = rdr
        .headers()
        .map_err(csv_err)?
        .iter()
        .map(str::to_string)
        .collect();
    if header.len() < 2 {
        return Err(Error::InvalidDataset(format!(
            "need a target and at least one feature column, header has {}",
            header.len()
        )));
    }
    let target_idx = match target {
        TargetColumn::Index(i) if *i < header.len() => *i,
        TargetColumn::Index(i) => return Err(Error::UnknownColumn(i.to_string())),
        TargetColumn::Name(name) => header
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::UnknownColumn(name.clone()))?,
        TargetColumn::Last => header.len() - 1,
    };

    let mut columns: Vec<Vec<f64>> = vec![Vec::new(); header.len() - 1];
    let mut raw_target: Vec<String> = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let record = record.map_err(csv_err)?;
        let row = i + 1;
        if record.iter().any(is_missing) || record.len() < header.len() {
            continue;
        }
        let mut parsed = Vec::with_capacity(columns.len());
        for (j, cell) in record.iter().enumerate() {
            if j == target_idx {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| Error::Parse {
                row,
                column: header[j].clone(),
                value: cell.to_string(),
            })?;
            parsed.push(v);
        }
        let t = record[target_idx].to_string();
        if task == Task::Regression && t.parse::<f64>().is_err() {
            return Err(Error::Parse {
                row,
                column: header[target_idx].clone(),
                value: t,
            });
        }
        for (col, v) in columns.iter_mut().zip(parsed) {
            col.push(v);
        }
        raw_target.push(t);
    }
    if raw_target.is_empty() {
        return Err(Error::EmptyDataset);
    }

    let names: Vec<String> = header
        .iter()
        .enumerate()
        .filter(|(j, _)| *j != target_idx)
        .map(|(_, h)| h.clone())
        .collect();
    let (target, labels) = match task {
        Task::Regression => (
            raw_target.iter().map(|t| t.parse().unwrap()).collect(),
            Vec::new(),
        ),
        Task::Classification => densify_labels(&raw_target),
    };
    Dataset::new(columns, target, task, names, labels)
}

/// Maps labels to dense ids. Numeric labels are ordered numerically,
/// otherwise lexicographically.
fn densify_labels(raw: &[String]) -> (Vec<f64>, Vec<String>) {
    let numeric: Option<Vec<f64>> = raw.iter().map(|t| t.parse::<f64>().ok()).collect();
    let mut distinct: Vec<String> = raw.to_vec();
    distinct.sort();
    distinct.dedup();
    if let Some(vals) = numeric {
        let mut pairs: Vec<(f64, String)> = raw.iter().cloned().zip(vals).map(|(s, v)| (v, s)).collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0).then_with(|| a.1.cmp(&b.1)));
        pairs.dedup_by(|a, b| a.1 == b.1);
        distinct = pairs.into_iter().map(|(_, s)| s).collect();
    }
    let ids: BTreeMap<&str, usize> = distinct.iter().enumerate().map(|(i, s)| (s.as_str(), i)).collect();
    let target = raw.iter().map(|t| ids[t.as_str()] as f64).collect();
    (target, distinct)
}

/// A fixed train/test partition of a source dataset.
#[derive(Debug, Clone)]
pub struct Split {
    pub train: Dataset,
    pub test: Dataset,
    pub train_rows: Vec<usize>,
    pub test_rows: Vec<usize>,
    pub seed: u64,
}

/// Uniform random row partition with `round(fraction * n)` test rows.
pub fn split_train_test(ds: &Dataset, fraction: f64, seed: u64) -> Result<Split> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::InvalidSplit(format!("fraction {fraction} not in (0, 1)")));
    }
    let n = ds.n_rows();
    let n_test = (fraction * n as f64).round() as usize;
    if n_test == 0 || n_test >= n {
        return Err(Error::InvalidSplit(format!(
            "fraction {fraction} of {n} rows leaves an empty part"
        )));
    }
    let mut rows: Vec<usize> = (0..n).collect();
    rows.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut test_rows = rows[..n_test].to_vec();
    let mut train_rows = rows[n_test..].to_vec();
    test_rows.sort_unstable();
    train_rows.sort_unstable();
    Ok(Split {
        train: ds.select_rows(&train_rows),
        test: ds.select_rows(&test_rows),
        train_rows,
        test_rows,
        seed,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FoldAssignment {
    fold_of_row: Vec<usize>,
    n_folds: usize,
}

impl FoldAssignment {
    pub fn n_folds(&self) -> usize {
        self.n_folds
    }

    pub fn fold_of_row(&self) -> &[usize] {
        &self.fold_of_row
    }

    /// (training rows, validation rows) for fold `c`.
    pub fn rows(&self, c: usize) -> (Vec<usize>, Vec<usize>) {
        let mut train = Vec::with_capacity(self.fold_of_row.len());
        let mut valid = Vec::new();
        for (r, &f) in self.fold_of_row.iter().enumerate() {
            if f == c {
                valid.push(r);
            } else {
                train.push(r);
            }
        }
        (train, valid)
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        for &f in &self.fold_of_row {
            sizes[f] += 1;
        }
        sizes
    }
}

/// C-fold assignment, stratified by class for classification.
///
/// Rows are shuffled (per class when stratifying) and dealt round-robin with
/// a running offset, so both per-class and total fold sizes differ by at
/// most one.
pub fn make_folds(train: &Dataset, n_folds: usize, seed: u64) -> Result<FoldAssignment> {
    let n = train.n_rows();
    if n_folds < 2 {
        return Err(Error::InvalidSplit(format!("need at least 2 folds, got {n_folds}")));
    }
    if n_folds > n {
        return Err(Error::InvalidSplit(format!("{n_folds} folds for {n} rows")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let groups: Vec<Vec<usize>> = match train.task() {
        Task::Regression => vec![(0..n).collect()],
        Task::Classification => {
            let mut g = vec![Vec::new(); train.n_classes()];
            for (r, c) in train.class_ids().into_iter().enumerate() {
                g[c].push(r);
            }
            g
        }
    };
    let mut fold_of_row = vec![0; n];
    let mut next = 0;
    for mut rows in groups {
        rows.shuffle(&mut rng);
        for r in rows {
            fold_of_row[r] = next % n_folds;
            next += 1;
        }
    }
    Ok(FoldAssignment { fold_of_row, n_folds })
}
