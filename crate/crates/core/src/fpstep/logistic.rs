//! Multinomial logistic regression with a baseline class, a small ridge on
//! the slopes and backward stepwise removal of covariates by AIC.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

pub const RIDGE: f64 = 1e-6;
const MAX_NEWTON: usize = 100;
/// Lowest-Wald candidates refitted at each stepwise step.
pub const STEPWISE_CANDIDATES: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub n_classes: usize,
    pub retained: Vec<usize>,
    /// Row k−1 holds the intercept and slopes of class k's log-odds against
    /// class 0.
    pub coef: Vec<Vec<f64>>,
    pub loglik: f64,
    pub aic: f64,
    pub full_aic: f64,
}

impl LogisticFit {
    /// Class probabilities for one standardised covariate vector.
    pub fn predict(&self, x: &[f64]) -> Vec<f64> {
        let eta: Vec<f64> = self
            .coef
            .iter()
            .map(|b| b[0] + self.retained.iter().zip(&b[1..]).map(|(&c, v)| v * x[c]).sum::<f64>())
            .collect();
        softmax_with_baseline(&eta)
    }
}

/// P(0) = 1/(1+Σ e^η), P(k) = e^{η_k}/(1+Σ e^η), evaluated stably.
pub fn softmax_with_baseline(eta: &[f64]) -> Vec<f64> {
    let m = eta.iter().copied().fold(0.0f64, f64::max);
    let base = (-m).exp();
    let ex: Vec<f64> = eta.iter().map(|e| (e - m).exp()).collect();
    let z = base + ex.iter().sum::<f64>();
    std::iter::once(base / z).chain(ex.iter().map(|e| e / z)).collect()
}

struct Data<'a> {
    rows: &'a [&'a [f64]],
    y: &'a [usize],
    k: usize,
}

impl Data<'_> {
    fn design(&self, cols: &[usize]) -> DMatrix<f64> {
        DMatrix::from_fn(self.rows.len(), cols.len() + 1, |i, j| if j == 0 { 1.0 } else { self.rows[i][cols[j - 1]] })
    }
}

struct Fitted {
    beta: DMatrix<f64>,
    loglik: f64,
    /// Inverse of the negative penalised Hessian.
    cov: Option<DMatrix<f64>>,
}

fn probabilities(x: &DMatrix<f64>, beta: &DMatrix<f64>) -> DMatrix<f64> {
    // eta: n × (K−1)
    let eta = x * beta.transpose();
    let n = x.nrows();
    let km1 = beta.nrows();
    let mut p = DMatrix::zeros(n, km1 + 1);
    for i in 0..n {
        let e: Vec<f64> = (0..km1).map(|k| eta[(i, k)]).collect();
        for (k, v) in softmax_with_baseline(&e).into_iter().enumerate() {
            p[(i, k)] = v;
        }
    }
    p
}

fn loglik(p: &DMatrix<f64>, y: &[usize]) -> f64 {
    y.iter().enumerate().map(|(i, &c)| p[(i, c)].max(1e-300).ln()).sum()
}

fn penalty(beta: &DMatrix<f64>) -> f64 {
    let mut s = 0.0;
    for k in 0..beta.nrows() {
        for j in 1..beta.ncols() {
            s += beta[(k, j)] * beta[(k, j)];
        }
    }
    0.5 * RIDGE * s
}

fn newton(d: &Data<'_>, x: &DMatrix<f64>, mut beta: DMatrix<f64>) -> Result<Fitted> {
    let (n, q) = (x.nrows(), x.ncols());
    let km1 = d.k - 1;
    let dim = km1 * q;
    let mut p = probabilities(x, &beta);
    let mut ll = loglik(&p, d.y);
    let mut obj = ll - penalty(&beta);
    for _ in 0..MAX_NEWTON {
        // gradient
        let mut resid = DMatrix::zeros(n, km1);
        for i in 0..n {
            for k in 0..km1 {
                resid[(i, k)] = f64::from(d.y[i] == k + 1) - p[(i, k + 1)];
            }
        }
        let g_mat = x.transpose() * &resid; // q × (K−1)
        let mut g = DVector::zeros(dim);
        for k in 0..km1 {
            for j in 0..q {
                g[k * q + j] = g_mat[(j, k)] - if j > 0 { RIDGE * beta[(k, j)] } else { 0.0 };
            }
        }
        // negative Hessian
        let mut h = DMatrix::zeros(dim, dim);
        for k in 0..km1 {
            for l in k..km1 {
                let mut xw = x.clone();
                for i in 0..n {
                    let pk = p[(i, k + 1)];
                    let w = if k == l { pk * (1.0 - pk) } else { -pk * p[(i, l + 1)] };
                    xw.row_mut(i).scale_mut(w);
                }
                let block = x.transpose() * xw;
                for a in 0..q {
                    for b in 0..q {
                        h[(k * q + a, l * q + b)] = block[(a, b)];
                        h[(l * q + b, k * q + a)] = block[(a, b)];
                    }
                }
            }
            for j in 1..q {
                h[(k * q + j, k * q + j)] += RIDGE;
            }
        }
        let chol = h.clone().cholesky();
        let step = match &chol {
            Some(c) => c.solve(&g),
            None => h.clone().lu().solve(&g).ok_or_else(|| Error::Convergence("logistic Hessian singular".into()))?,
        };
        let mut t = 1.0;
        let mut accepted = false;
        let mut new_beta = beta.clone();
        let mut new_p = p.clone();
        let mut new_obj = obj;
        for _ in 0..30 {
            for k in 0..km1 {
                for j in 0..q {
                    new_beta[(k, j)] = beta[(k, j)] + t * step[k * q + j];
                }
            }
            new_p = probabilities(x, &new_beta);
            new_obj = loglik(&new_p, d.y) - penalty(&new_beta);
            if new_obj >= obj - 1e-12 * obj.abs() {
                accepted = true;
                break;
            }
            t *= 0.5;
        }
        let gmax = g.amax();
        if !accepted {
            if gmax < 1e-6 * n as f64 {
                let cov = chol.map(|c| c.inverse());
                return Ok(Fitted { beta, loglik: ll, cov });
            }
            return Err(Error::Convergence(format!(
                "multinomial logit line search failed; last gradient norm {gmax:.3e}, coefficients {:?}",
                beta.row(0).iter().take(4).collect::<Vec<_>>()
            )));
        }
        let change = (new_obj - obj).abs();
        beta = new_beta;
        p = new_p;
        obj = new_obj;
        ll = loglik(&p, d.y);
        if change <= 1e-10 * (1.0 + obj.abs()) || t * step.amax() < 1e-10 {
            let cov = chol.map(|c| c.inverse());
            return Ok(Fitted { beta, loglik: ll, cov });
        }
    }
    Err(Error::Convergence(format!(
        "multinomial logit did not converge in {MAX_NEWTON} Newton steps; last log-likelihood {ll}, last intercepts {:?}",
        beta.column(0).iter().collect::<Vec<_>>()
    )))
}

fn aic(ll: f64, km1: usize, n_cov: usize) -> f64 {
    -2.0 * ll + 2.0 * (km1 * (n_cov + 1)) as f64
}

fn initial_beta(d: &Data<'_>, q: usize) -> DMatrix<f64> {
    let mut counts = vec![0.5f64; d.k];
    for &c in d.y {
        counts[c] += 1.0;
    }
    let mut b = DMatrix::zeros(d.k - 1, q);
    for k in 1..d.k {
        b[(k - 1, 0)] = (counts[k] / counts[0]).ln();
    }
    b
}

/// Joint Wald statistic of each covariate's K−1 slopes.
fn wald(fit: &Fitted, n_cols: usize) -> Vec<f64> {
    let km1 = fit.beta.nrows();
    let q = n_cols + 1;
    (0..n_cols)
        .map(|c| {
            let idx: Vec<usize> = (0..km1).map(|k| k * q + c + 1).collect();
            let b = DVector::from_iterator(km1, (0..km1).map(|k| fit.beta[(k, c + 1)]));
            match &fit.cov {
                Some(cov) => {
                    let sub = DMatrix::from_fn(km1, km1, |i, j| cov[(idx[i], idx[j])]);
                    match sub.cholesky() {
                        Some(ch) => b.dot(&ch.solve(&b)),
                        None => b.norm_squared(),
                    }
                }
                None => b.norm_squared(),
            }
        })
        .collect()
}

/// Fits the multinomial logit of class labels `y` (0..k) on the standardised
/// covariate rows and runs backward stepwise selection.
pub fn stepwise_logistic(rows: &[&[f64]], y: &[usize], k: usize, n_cov: usize) -> Result<LogisticFit> {
    if k < 2 {
        return Err(Error::invalid("model choice regression needs at least two models"));
    }
    let d = Data { rows, y, k };
    let mut cols: Vec<usize> = (0..n_cov).collect();
    let x = d.design(&cols);
    let mut fit = newton(&d, &x, initial_beta(&d, cols.len() + 1))?;
    let full_aic = aic(fit.loglik, k - 1, cols.len());
    let mut cur = full_aic;
    while !cols.is_empty() {
        let w = wald(&fit, cols.len());
        let mut order: Vec<usize> = (0..cols.len()).collect();
        order.sort_by(|&a, &b| w[a].total_cmp(&w[b]));
        let mut accepted = None;
        for &c in order.iter().take(STEPWISE_CANDIDATES) {
            let mut trial: Vec<usize> = cols.clone();
            trial.remove(c);
            let mut start = DMatrix::zeros(k - 1, trial.len() + 1);
            for kk in 0..k - 1 {
                start[(kk, 0)] = fit.beta[(kk, 0)];
                let mut jj = 1;
                for (pos, _) in cols.iter().enumerate() {
                    if pos != c {
                        start[(kk, jj)] = fit.beta[(kk, pos + 1)];
                        jj += 1;
                    }
                }
            }
            let xt = d.design(&trial);
            let Ok(f) = newton(&d, &xt, start) else { continue };
            let a = aic(f.loglik, k - 1, trial.len());
            if a < cur {
                accepted = Some((trial, f, a));
                break;
            }
        }
        match accepted {
            Some((trial, f, a)) => {
                cols = trial;
                fit = f;
                cur = a;
            }
            None => break,
        }
    }
    let coef = (0..k - 1).map(|kk| fit.beta.row(kk).iter().copied().collect()).collect();
    Ok(LogisticFit { n_classes: k, retained: cols, coef, loglik: fit.loglik, aic: cur, full_aic })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::SplitRng;
    use rand::Rng;
    use rand_distr::StandardNormal;

    #[test]
    fn baseline_softmax() {
        let p = softmax_with_baseline(&[0.0, 0.0, 0.0, 0.0]);
        assert!(p.iter().all(|v| (v - 0.2).abs() < 1e-15));
        let p = softmax_with_baseline(&[800.0, -3.0]);
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12 && p[1] > 0.999);
    }

    #[test]
    fn noise_covariates_are_removed() {
        let mut rng = SplitRng::new(4);
        let n = 600;
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..4).map(|_| rng.sample(StandardNormal)).collect()).collect();
        let y: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let fit = stepwise_logistic(&rows, &y, 3, 4).unwrap();
        assert!(fit.retained.len() <= 1, "{:?}", fit.retained);
        assert!(fit.aic <= fit.full_aic);
        if fit.retained.is_empty() {
            let p = fit.predict(rows[0]);
            for v in p {
                assert!((v - 1.0 / 3.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn separable_indicator() {
        let mut rng = SplitRng::new(5);
        let n = 300;
        let y: Vec<usize> = (0..n).map(|_| usize::from(rng.random::<f64>() < 0.4)).collect();
        let x: Vec<Vec<f64>> = y.iter().map(|&c| vec![c as f64 * 2.0 - 1.0, rng.sample(StandardNormal)]).collect();
        let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
        let fit = stepwise_logistic(&rows, &y, 2, 2).unwrap();
        assert!(fit.retained.contains(&0));
        let correct = rows
            .iter()
            .zip(&y)
            .filter(|(r, &c)| {
                let p = fit.predict(r);
                (p[1] > 0.5) == (c == 1)
            })
            .count();
        assert!(correct as f64 / n as f64 >= 0.99);
        let lo = fit.predict(&[-1.0, 0.0])[1];
        let hi = fit.predict(&[1.0, 0.0])[1];
        assert!(hi > lo);
    }

    #[test]
    fn one_covariate_matches_grid_search() {
        // penalised likelihood maximised by brute force over (intercept, slope)
        let mut rng = SplitRng::new(6);
        let n = 200;
        let x: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
        let y: Vec<usize> = x
            .iter()
            .map(|&v| usize::from(rng.random::<f64>() < 1.0 / (1.0 + (-(0.3 + 1.2 * v)).exp())))
            .collect();
        let rows_v: Vec<Vec<f64>> = x.iter().map(|&v| vec![v]).collect();
        let rows: Vec<&[f64]> = rows_v.iter().map(|r| r.as_slice()).collect();
        let d = Data { rows: &rows, y: &y, k: 2 };
        let xd = d.design(&[0]);
        let fit = newton(&d, &xd, initial_beta(&d, 2)).unwrap();
        let obj = |a: f64, b: f64| {
            x.iter()
                .zip(&y)
                .map(|(&v, &c)| {
                    let e = a + b * v;
                    if c == 1 { -(-e).exp().ln_1p() } else { -e.exp().ln_1p() }
                })
                .sum::<f64>()
                - 0.5 * RIDGE * b * b
        };
        let (mut ba, mut bb, mut best) = (0.0, 0.0, f64::NEG_INFINITY);
        let mut a = -2.0;
        while a <= 2.0 {
            let mut b = -1.0;
            while b <= 4.0 {
                let v = obj(a, b);
                if v > best {
                    best = v;
                    ba = a;
                    bb = b;
                }
                b += 0.005;
            }
            a += 0.005;
        }
        assert!((fit.beta[(0, 0)] - ba).abs() < 0.01);
        assert!((fit.beta[(0, 1)] - bb).abs() < 0.01);
    }
}
