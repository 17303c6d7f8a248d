//! Gaussian naive Bayes.

/// Relative variance smoothing, scaled by the largest feature variance.
const VAR_SMOOTHING: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq)]
pub struct GaussianNb {
    /// log prior per class; `-inf` for classes absent from training.
    log_prior: Vec<f64>,
    /// [class][feature]
    mean: Vec<Vec<f64>>,
    var: Vec<Vec<f64>>,
}

fn population_var(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (n, sum) = values.clone().fold((0usize, 0.0), |(n, s), v| (n + 1, s + v));
    if n == 0 {
        return 0.0;
    }
    let mean = sum / n as f64;
    values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / n as f64
}

impl GaussianNb {
    pub fn fit(columns: &[Vec<f64>], classes: &[usize], n_classes: usize) -> Self {
        let p = columns.len();
        let n = classes.len();
        let mut counts = vec![0usize; n_classes];
        for &c in classes {
            counts[c] += 1;
        }
        let max_var = columns
            .iter()
            .map(|col| population_var(col.iter().copied()))
            .fold(0.0, f64::max);
        let mut epsilon = VAR_SMOOTHING * max_var;
        if epsilon == 0.0 {
            epsilon = VAR_SMOOTHING;
        }

        let mut mean = vec![vec![0.0; p]; n_classes];
        let mut var = vec![vec![epsilon; p]; n_classes];
        for (j, col) in columns.iter().enumerate() {
            let mut sums = vec![0.0; n_classes];
            for (&v, &c) in col.iter().zip(classes) {
                sums[c] += v;
            }
            for c in 0..n_classes {
                if counts[c] > 0 {
                    mean[c][j] = sums[c] / counts[c] as f64;
                }
            }
            let mut sq = vec![0.0; n_classes];
            for (&v, &c) in col.iter().zip(classes) {
                let d = v - mean[c][j];
                sq[c] += d * d;
            }
            for c in 0..n_classes {
                if counts[c] > 0 {
                    var[c][j] = sq[c] / counts[c] as f64 + epsilon;
                }
            }
        }
        let log_prior = counts
            .iter()
            .map(|&k| if k == 0 { f64::NEG_INFINITY } else { (k as f64 / n as f64).ln() })
            .collect();
        Self { log_prior, mean, var }
    }

    pub fn n_features(&self) -> usize {
        self.mean.first().map_or(0, Vec::len)
    }

    /// Most probable class per row; ties go to the lowest class id.
    pub fn predict(&self, columns: &[Vec<f64>]) -> Vec<usize> {
        let n = columns.first().map_or(0, Vec::len);
        let n_classes = self.log_prior.len();
        let mut scores = vec![self.log_prior.clone(); n];
        for c in 0..n_classes {
            if self.log_prior[c] == f64::NEG_INFINITY {
                continue;
            }
            for (j, col) in columns.iter().enumerate() {
                let m = self.mean[c][j];
                let v = self.var[c][j];
                let norm = -0.5 * (2.0 * std::f64::consts::PI * v).ln();
                for (row, &x) in scores.iter_mut().zip(col) {
                    row[c] += norm - (x - m) * (x - m) / (2.0 * v);
                }
            }
        }
        scores
            .iter()
            .map(|s| {
                let mut best = 0;
                for c in 1..n_classes {
                    if s[c] > s[best] || (s[best].is_nan() && !s[c].is_nan()) {
                        best = c;
                    }
                }
                best
            })
            .collect()
    }
}
