//! Ordinary least squares through the normal equations.

use nalgebra::{DMatrix, DVector};

/// Ridge added to the diagonal when the normal matrix is singular.
const RIDGE: f64 = 1e-8;
/// Smallest acceptable Cholesky pivot, relative to the unit diagonal of the
/// standardized normal matrix.
const MIN_PIVOT: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq)]
pub struct Ols {
    pub weights: Vec<f64>,
    pub intercept: f64,
}

impl Ols {
    /// Columns are centered and scaled to unit variance before solving, so
    /// the ridge fallback acts on a unit-diagonal system. Zero-variance
    /// columns get weight 0.
    pub fn fit(columns: &[Vec<f64>], y: &[f64]) -> Self {
        let n = y.len();
        let nf = n as f64;
        let y_mean = y.iter().sum::<f64>() / nf;

        let mut means = Vec::with_capacity(columns.len());
        let mut scales = Vec::with_capacity(columns.len());
        let mut active = Vec::new();
        for (j, col) in columns.iter().enumerate() {
            let m = col.iter().sum::<f64>() / nf;
            let var = col.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / nf;
            means.push(m);
            scales.push(var.sqrt());
            if var > 0.0 && var.is_finite() {
                active.push(j);
            }
        }

        let mut weights = vec![0.0; columns.len()];
        if !active.is_empty() {
            let q = active.len();
            let z = DMatrix::from_fn(n, q, |i, k| {
                let j = active[k];
                (columns[j][i] - means[j]) / scales[j]
            });
            let yc = DVector::from_iterator(n, y.iter().map(|v| v - y_mean));
            let gram = z.tr_mul(&z) / nf;
            let rhs = z.tr_mul(&yc) / nf;
            let beta = solve_with_ridge(gram, &rhs);
            for (k, &j) in active.iter().enumerate() {
                weights[j] = beta[k] / scales[j];
            }
        }
        let intercept = y_mean - weights.iter().zip(&means).map(|(w, m)| w * m).sum::<f64>();
        Self { weights, intercept }
    }

    pub fn n_features(&self) -> usize {
        self.weights.len()
    }

    pub fn predict(&self, columns: &[Vec<f64>]) -> Vec<f64> {
        let n = columns.first().map_or(0, Vec::len);
        let mut out = vec![self.intercept; n];
        for (w, col) in self.weights.iter().zip(columns) {
            if *w == 0.0 {
                continue;
            }
            for (o, x) in out.iter_mut().zip(col) {
                *o += w * x;
            }
        }
        out
    }
}

/// Cholesky solve; on failure or a tiny pivot, adds `RIDGE` to the diagonal
/// and grows it tenfold until the factorization is well conditioned.
fn solve_with_ridge(gram: DMatrix<f64>, rhs: &DVector<f64>) -> DVector<f64> {
    let mut ridge = 0.0;
    loop {
        let mut a = gram.clone();
        for i in 0..a.nrows() {
            a[(i, i)] += ridge;
        }
        if let Some(chol) = a.cholesky() {
            let l = chol.l_dirty();
            let min_pivot = (0..l.nrows()).map(|i| l[(i, i)] * l[(i, i)]).fold(f64::INFINITY, f64::min);
            if min_pivot >= MIN_PIVOT {
                let beta = chol.solve(rhs);
                if beta.iter().all(|b| b.is_finite()) {
                    return beta;
                }
            }
        }
        ridge = if ridge == 0.0 { RIDGE } else { ridge * 10.0 };
        if ridge > 1e12 {
            return DVector::zeros(rhs.len());
        }
    }
}
