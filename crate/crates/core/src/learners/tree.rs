//! CART decision trees and random forests.

use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::seeds::derive_seed;

/// Training target of a tree: class ids or real values.
#[derive(Debug, Clone, Copy)]
pub enum TreeTarget<'a> {
    Classes { ids: &'a [usize], n_classes: usize },
    Values(&'a [f64]),
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeParams {
    /// Features tried per split; `None` tries all of them.
    pub mtry: Option<usize>,
    /// Minimum number of training rows in each child of a split.
    pub min_node_size: usize,
}

#[derive(Debug, Clone, PartialEq)]
enum Node {
    Leaf(f64),
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

/// A fitted tree. Leaves hold a class id (as `f64`) or a mean value.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl DecisionTree {
    /// Grows a tree on `rows` (indices into the columns, repeats allowed).
    /// Nodes split until pure or no admissible split exists; zero-gain
    /// splits are taken so that distinct rows can always be separated.
    pub fn fit<R: Rng + ?Sized>(
        columns: &[Vec<f64>],
        target: TreeTarget<'_>,
        rows: Vec<usize>,
        params: TreeParams,
        rng: &mut R,
    ) -> Self {
        let mut tree = Self {
            nodes: Vec::new(),
            n_features: columns.len(),
        };
        tree.grow(columns, target, rows, params, rng);
        tree
    }

    fn grow<R: Rng + ?Sized>(
        &mut self,
        columns: &[Vec<f64>],
        target: TreeTarget<'_>,
        rows: Vec<usize>,
        params: TreeParams,
        rng: &mut R,
    ) -> usize {
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf(leaf_value(target, &rows)));
        let min_child = params.min_node_size.max(1);
        if rows.len() < 2 * min_child || is_pure(target, &rows) {
            return id;
        }
        let p = columns.len();
        let features: Vec<usize> = match params.mtry {
            Some(m) if m < p => {
                let mut f = sample(rng, p, m.max(1)).into_vec();
                f.sort_unstable();
                f
            }
            _ => (0..p).collect(),
        };
        let Some(best) = best_split(columns, target, &rows, &features, min_child) else {
            return id;
        };
        let (left_rows, right_rows): (Vec<usize>, Vec<usize>) = rows
            .iter()
            .partition(|&&r| columns[best.feature][r] <= best.threshold);
        let left = self.grow(columns, target, left_rows, params, rng);
        let right = self.grow(columns, target, right_rows, params, rng);
        self.nodes[id] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            left,
            right,
        };
        id
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn predict_row(&self, columns: &[Vec<f64>], row: usize) -> f64 {
        let mut id = 0;
        loop {
            match self.nodes[id] {
                Node::Leaf(v) => return v,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if columns[feature][row] <= threshold { left } else { right },
            }
        }
    }

    pub fn predict(&self, columns: &[Vec<f64>]) -> Vec<f64> {
        let n = columns.first().map_or(0, Vec::len);
        (0..n).map(|r| self.predict_row(columns, r)).collect()
    }
}

fn is_pure(target: TreeTarget<'_>, rows: &[usize]) -> bool {
    match target {
        TreeTarget::Classes { ids, .. } => rows.iter().all(|&r| ids[r] == ids[rows[0]]),
        TreeTarget::Values(y) => rows.iter().all(|&r| y[r] == y[rows[0]]),
    }
}

fn leaf_value(target: TreeTarget<'_>, rows: &[usize]) -> f64 {
    match target {
        TreeTarget::Classes { ids, n_classes } => {
            let mut counts = vec![0usize; n_classes];
            for &r in rows {
                counts[ids[r]] += 1;
            }
            argmax_lowest(&counts) as f64
        }
        TreeTarget::Values(y) => rows.iter().map(|&r| y[r]).sum::<f64>() / rows.len() as f64,
    }
}

/// Index of the largest count; ties go to the lowest index.
pub(crate) fn argmax_lowest(counts: &[usize]) -> usize {
    let mut best = 0;
    for (c, &k) in counts.iter().enumerate() {
        if k > counts[best] {
            best = c;
        }
    }
    best
}

/// Scans every midpoint between consecutive distinct values. The score is
/// the quantity a split maximizes: for Gini, the sum over children of
/// `sum_c count_c^2 / n_child`; for variance, `sum_child (sum y)^2 / n_child`.
/// Features are scanned in increasing index and thresholds in increasing
/// order, and only a strictly better score replaces the incumbent.
fn best_split(
    columns: &[Vec<f64>],
    target: TreeTarget<'_>,
    rows: &[usize],
    features: &[usize],
    min_child: usize,
) -> Option<Best> {
    let n = rows.len();
    let mut best: Option<Best> = None;
    let mut order: Vec<(f64, usize)> = Vec::with_capacity(n);
    for &f in features {
        order.clear();
        order.extend(rows.iter().map(|&r| (columns[f][r], r)));
        order.sort_by(|a, b| a.0.total_cmp(&b.0));
        if order[0].0 == order[n - 1].0 {
            continue;
        }
        let consider = |i: usize, score: f64, best: &mut Option<Best>| {
            // Split between order[i - 1] and order[i].
            let (a, b) = (order[i - 1].0, order[i].0);
            if a == b || i < min_child || n - i < min_child {
                return;
            }
            if best.as_ref().is_none_or(|bb| score > bb.score) {
                let mut threshold = a + (b - a) / 2.0;
                if threshold >= b {
                    threshold = a;
                }
                *best = Some(Best {
                    score,
                    feature: f,
                    threshold,
                });
            }
        };
        match target {
            TreeTarget::Classes { ids, n_classes } => {
                let mut left = vec![0usize; n_classes];
                let mut right = vec![0usize; n_classes];
                for &(_, r) in &order {
                    right[ids[r]] += 1;
                }
                let mut left_sq = 0.0;
                let mut right_sq: f64 = right.iter().map(|&k| (k * k) as f64).sum();
                for i in 1..n {
                    let c = ids[order[i - 1].1];
                    left_sq += (2 * left[c] + 1) as f64;
                    right_sq -= (2 * right[c] - 1) as f64;
                    left[c] += 1;
                    right[c] -= 1;
                    let score = left_sq / i as f64 + right_sq / (n - i) as f64;
                    consider(i, score, &mut best);
                }
            }
            TreeTarget::Values(y) => {
                let total: f64 = order.iter().map(|&(_, r)| y[r]).sum();
                let mut left_sum = 0.0;
                for i in 1..n {
                    left_sum += y[order[i - 1].1];
                    let right_sum = total - left_sum;
                    let score = left_sum * left_sum / i as f64 + right_sum * right_sum / (n - i) as f64;
                    consider(i, score, &mut best);
                }
            }
        }
    }
    best
}

/// Bagged trees with per-split feature subsampling.
#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    trees: Vec<DecisionTree>,
    n_classes: Option<usize>,
}

impl RandomForest {
    /// Tree `t` draws its bootstrap sample and feature subsets from a stream
    /// derived from `(seed, t)`, so the forest depends only on its inputs.
    pub fn fit(
        columns: &[Vec<f64>],
        target: TreeTarget<'_>,
        n_trees: usize,
        params: TreeParams,
        bootstrap: bool,
        seed: u64,
    ) -> Self {
        let n = match target {
            TreeTarget::Classes { ids, .. } => ids.len(),
            TreeTarget::Values(y) => y.len(),
        };
        let trees = (0..n_trees)
            .map(|t| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, t as u64));
                let rows: Vec<usize> = if bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                DecisionTree::fit(columns, target, rows, params, &mut rng)
            })
            .collect();
        let n_classes = match target {
            TreeTarget::Classes { n_classes, .. } => Some(n_classes),
            TreeTarget::Values(_) => None,
        };
        Self { trees, n_classes }
    }

    pub fn n_trees(&self) -> usize {
        self.trees.len()
    }

    pub fn n_features(&self) -> usize {
        self.trees.first().map_or(0, DecisionTree::n_features)
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Majority vote (lowest class id on ties) or mean of the trees.
    pub fn predict(&self, columns: &[Vec<f64>]) -> Vec<f64> {
        let n = columns.first().map_or(0, Vec::len);
        match self.n_classes {
            Some(k) => {
                let mut votes = vec![0usize; k];
                (0..n)
                    .map(|r| {
                        votes.iter_mut().for_each(|v| *v = 0);
                        for t in &self.trees {
                            votes[t.predict_row(columns, r) as usize] += 1;
                        }
                        argmax_lowest(&votes) as f64
                    })
                    .collect()
            }
            None => (0..n)
                .map(|r| {
                    self.trees.iter().map(|t| t.predict_row(columns, r)).sum::<f64>()
                        / self.trees.len() as f64
                })
                .collect(),
        }
    }
}
