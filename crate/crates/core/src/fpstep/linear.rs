//! Ordinary least squares with backward stepwise selection by AIC.

use crate::numerics::linalg::pinv;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearFit {
    /// Retained covariate indices (into the standardised covariates).
    pub retained: Vec<usize>,
    /// Intercept followed by one slope per retained covariate.
    pub coef: Vec<f64>,
    pub aic: f64,
    pub full_aic: f64,
    /// Whether the pseudo-inverse was needed at some step.
    #[serde(default)]
    pub rank_deficient: bool,
}

impl LinearFit {
    pub fn predict(&self, x: &[f64]) -> f64 {
        self.coef[0] + self.retained.iter().zip(&self.coef[1..]).map(|(&c, b)| b * x[c]).sum::<f64>()
    }
}

fn design(rows: &[&[f64]], cols: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), cols.len() + 1, |i, j| if j == 0 { 1.0 } else { rows[i][cols[j - 1]] })
}

/// (XᵀX)⁻¹, coefficients, RSS and whether a pseudo-inverse was used.
fn ols(x: &DMatrix<f64>, y: &DVector<f64>) -> (DMatrix<f64>, DVector<f64>, f64, bool) {
    let xtx = x.transpose() * x;
    let xty = x.transpose() * y;
    let (inv, deficient) = match xtx.clone().cholesky() {
        Some(c) if c.l().diagonal().min() > 1e-10 * c.l().diagonal().max() => (c.inverse(), false),
        _ => (pinv(&xtx), true),
    };
    let beta = &inv * xty;
    let resid = y - x * &beta;
    (inv, beta, resid.norm_squared(), deficient)
}

fn aic(n: usize, rss: f64, k: usize) -> f64 {
    n as f64 * (rss.max(1e-300) / n as f64).ln() + 2.0 * k as f64
}

/// Backward stepwise OLS of `y` on the covariate rows; each step removes the
/// covariate with the smallest RSS increase while AIC strictly decreases.
pub fn stepwise_ols(rows: &[&[f64]], y: &[f64], n_cov: usize) -> LinearFit {
    let n = rows.len();
    let yv = DVector::from_column_slice(y);
    let mut cols: Vec<usize> = (0..n_cov).collect();
    let (mut inv, mut beta, mut rss, mut deficient) = ols(&design(rows, &cols), &yv);
    let full_aic = aic(n, rss, cols.len() + 1);
    let mut cur = full_aic;
    while !cols.is_empty() {
        let (best, delta) = (0..cols.len())
            .map(|c| {
                let d = inv[(c + 1, c + 1)];
                let inc = if d > 0.0 { beta[c + 1] * beta[c + 1] / d } else { 0.0 };
                (c, inc)
            })
            .min_by(|a, b| a.1.total_cmp(&b.1))
            .unwrap();
        let cand = aic(n, rss + delta, cols.len());
        if !(cand < cur) {
            break;
        }
        cols.remove(best);
        let r = ols(&design(rows, &cols), &yv);
        inv = r.0;
        beta = r.1;
        rss = r.2;
        deficient |= r.3;
        cur = aic(n, rss, cols.len() + 1);
    }
    LinearFit { retained: cols, coef: beta.iter().copied().collect(), aic: cur, full_aic, rank_deficient: deficient }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SplitRng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn exact_linear_response() {
        let mut rng = SplitRng::new(1);
        let x: Vec<Vec<f64>> = (0..80).map(|_| (0..6).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y: Vec<f64> = x.iter().map(|r| 1.5 + 2.0 * r[1] - 0.7 * r[4]).collect();
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let fit = stepwise_ols(&rows, &y, 6);
        assert!(fit.retained.contains(&1) && fit.retained.contains(&4));
        for (r, yi) in rows.iter().zip(&y) {
            assert!((fit.predict(r) - yi).abs() < 1e-10);
        }
        assert!(fit.aic <= fit.full_aic);
    }

    #[test]
    fn noise_response_is_intercept_only() {
        let mut rng = SplitRng::new(2);
        let x: Vec<Vec<f64>> = (0..400).map(|_| (0..3).map(|_| rng.sample(StandardNormal)).collect()).collect();
        // response built from a separate stream, independent of x
        let mut other = SplitRng::new(99);
        let y: Vec<f64> = (0..400).map(|_| 3.0 + other.sample::<f64, _>(StandardNormal)).collect();
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let fit = stepwise_ols(&rows, &y, 3);
        if fit.retained.is_empty() {
            let mean = y.iter().sum::<f64>() / y.len() as f64;
            assert!((fit.predict(rows[0]) - mean).abs() < 1e-10);
        }
        assert!(fit.retained.len() <= 1);
        assert!(fit.aic <= fit.full_aic);
    }

    #[test]
    fn matches_normal_equations() {
        let mut rng = SplitRng::new(3);
        let x: Vec<Vec<f64>> = (0..50).map(|_| (0..10).map(|_| rng.random_range(-1.0..1.0)).collect()).collect();
        let y: Vec<f64> = (0..50).map(|_| rng.random_range(-1.0..1.0)).collect();
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let xm = design(&rows, &(0..10).collect::<Vec<_>>());
        let (_, beta, _, _) = ols(&xm, &DVector::from_column_slice(&y));
        // Gauss-Jordan on the augmented normal equations
        let p = 11;
        let mut a = vec![vec![0.0; p + 1]; p];
        for i in 0..p {
            for j in 0..p {
                a[i][j] = (0..50).map(|r| xm[(r, i)] * xm[(r, j)]).sum();
            }
            a[i][p] = (0..50).map(|r| xm[(r, i)] * y[r]).sum();
        }
        for c in 0..p {
            let piv = (c..p).max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs())).unwrap();
            a.swap(c, piv);
            for r in 0..p {
                if r != c {
                    let f = a[r][c] / a[c][c];
                    for k in c..=p {
                        a[r][k] -= f * a[c][k];
                    }
                }
            }
        }
        for i in 0..p {
            assert!((beta[i] - a[i][p] / a[i][i]).abs() < 1e-8);
        }
    }
}
