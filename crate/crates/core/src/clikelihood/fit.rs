//! Maximum composite-likelihood estimation and the composite-likelihood
//! information criterion.

use super::bivariate::tcop_full_loglik;
use super::composite::{pairwise_loglik, pairwise_loglik_and_score, score_contributions, ScoreContext};
use crate::error::{Error, Result};
use crate::margins::DataMatrix;
use crate::models::{canonical_anisotropy, prior_sample, ModelId, ParamVector, PriorSpec};
use crate::numerics::optim::{minimize_bounded, OptimOptions};
use crate::numerics::{finite_difference_jacobian, relative_step, SplitRng};
use crate::spatial::SiteSet;
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Mutex;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct McleOptions {
    /// Successful optimisations required.
    pub n_converged: usize,
    /// Maximum number of prior starting points.
    pub max_starts: usize,
    pub optim: OptimOptions,
    /// Newton iterations on the score after each optimisation.
    pub polish_iters: usize,
}

impl Default for McleOptions {
    fn default() -> Self {
        Self {
            n_converged: 5,
            max_starts: 25,
            optim: OptimOptions { max_iter: 300, grad_tol: 1e-7, ..OptimOptions::default() },
            polish_iters: 8,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McleFit {
    pub model: ModelId,
    pub params: ParamVector,
    pub loglik: f64,
    /// Max-norm of the composite score at the estimate.
    pub score_norm: f64,
    pub n_converged: usize,
    pub n_starts: usize,
}

/// Box on the working scale (ln λ, κ, α, ln r, ln ν). α gets a wide range
/// and is folded back afterwards; ln ν is held to the prior truncation.
fn working_bounds(model: ModelId, prior: &PriorSpec) -> (Vec<f64>, Vec<f64>) {
    let mut lo = vec![-8.0, 0.02, -2.0 * PI, -4.0];
    let mut hi = vec![9.0, 2.0, 2.0 * PI, 4.0];
    if model.has_nu() {
        lo.push(prior.log_nu_truncation.0);
        hi.push(prior.log_nu_truncation.1);
    }
    (lo, hi)
}

/// Infinity norm of the gradient with components pushing into an active
/// bound removed.
fn projected_norm(u: &[f64], g: &[f64], lo: &[f64], hi: &[f64]) -> f64 {
    u.iter()
        .zip(g)
        .zip(lo.iter().zip(hi))
        .map(|((&x, &gi), (&l, &h))| ((x - gi).clamp(l, h) - x).abs())
        .fold(0.0, f64::max)
}

/// Projected working-scale gradient (per replicate and pair) accepted as a
/// converged run after polishing.
const CONVERGED_GRADIENT: f64 = 1e-5;

/// dθ/du for the working transform.
fn jacobian_diag(model: ModelId, u: &[f64]) -> Vec<f64> {
    let mut j = vec![u[0].exp(), 1.0, 1.0, u[3].exp()];
    if model.has_nu() {
        j.push(u[4].exp());
    }
    j
}

/// Working point, objective and gradient of the last evaluation.
type CachedEval = (Vec<f64>, f64, Vec<f64>);

struct Problem<'a> {
    model: ModelId,
    data: &'a DataMatrix,
    sites: &'a SiteSet,
    weights: Option<&'a [f64]>,
    scale: f64,
    cache: Mutex<Option<CachedEval>>,
}

impl<'a> Problem<'a> {
    fn new(model: ModelId, data: &'a DataMatrix, sites: &'a SiteSet, weights: Option<&'a [f64]>) -> Self {
        let np = sites.len() * (sites.len() - 1) / 2;
        let scale = (data.n_reps() * np).max(1) as f64;
        Self { model, data, sites, weights, scale, cache: Mutex::new(None) }
    }

    /// Negative scaled log-likelihood and its working-scale gradient.
    fn eval(&self, u: &[f64]) -> (f64, Vec<f64>) {
        if let Some((cu, f, g)) = self.cache.lock().unwrap().as_ref() {
            if cu.as_slice() == u {
                return (*f, g.clone());
            }
        }
        let p = ParamVector::from_working(self.model, u);
        let (f, g) = match pairwise_loglik_and_score(self.model, &p, self.data, self.sites, self.weights) {
            Ok((l, s)) if l.is_finite() && s.iter().all(|v| v.is_finite()) => {
                let jd = jacobian_diag(self.model, u);
                (-l / self.scale, s.iter().zip(&jd).map(|(a, b)| -a * b / self.scale).collect())
            }
            _ => (f64::INFINITY, vec![f64::NAN; u.len()]),
        };
        *self.cache.lock().unwrap() = Some((u.to_vec(), f, g.clone()));
        (f, g)
    }

    /// Newton steps on the working-scale gradient.
    fn polish(&self, mut u: Vec<f64>, iters: usize, lo: &[f64], hi: &[f64]) -> Vec<f64> {
        let (mut f, mut g) = self.eval(&u);
        for _ in 0..iters {
            let gn = g.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !gn.is_finite() || gn < 1e-12 {
                break;
            }
            let steps: Vec<f64> = u.iter().map(|&v| relative_step(v)).collect();
            let jac = match finite_difference_jacobian(
                |x| {
                    let (fx, gx) = self.eval(x);
                    if fx.is_finite() {
                        Ok(gx)
                    } else {
                        Err(Error::domain("objective not finite"))
                    }
                },
                &u,
                &steps,
            ) {
                Ok(j) => j,
                Err(_) => break,
            };
            let n = u.len();
            let hm = DMatrix::from_fn(n, n, |i, j| 0.5 * (jac[i][j] + jac[j][i]));
            let Some(delta) = hm.clone().lu().solve(&nalgebra::DVector::from_column_slice(&g)) else {
                break;
            };
            let cand: Vec<f64> = u.iter().zip(delta.iter()).map(|(a, d)| a - d).collect();
            if cand.iter().zip(lo.iter().zip(hi)).any(|(c, (l, h))| c < l || c > h) {
                break;
            }
            let (fc, gc) = self.eval(&cand);
            let gcn = gc.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            if !(fc <= f + 1e-10 * f.abs().max(1.0)) || !(gcn < gn) {
                break;
            }
            u = cand;
            f = fc;
            g = gc;
        }
        u
    }
}

fn canonical_params(model: ModelId, u: &[f64]) -> ParamVector {
    let p = ParamVector::from_working(model, u);
    let (alpha, ratio, lambda) = canonical_anisotropy(p.alpha, p.ratio, p.lambda);
    ParamVector { lambda, alpha, ratio, ..p }
}

/// Maximum full t-copula likelihood on the working scale by Nelder–Mead.
fn tcop_full_start(
    model: ModelId,
    data: &DataMatrix,
    sites: &SiteSet,
    prior: &PriorSpec,
    start: &[f64],
    opts: &OptimOptions,
) -> Option<Vec<f64>> {
    let (lo, hi) = working_bounds(model, prior);
    let f = |u: &[f64]| {
        let p = ParamVector::from_working(model, u);
        match tcop_full_loglik(model, &p, &data.values, &sites.coords) {
            Ok(v) if v.is_finite() => -v,
            _ => f64::INFINITY,
        }
    };
    let r = minimize_bounded(&f, None, &lo, &hi, start, opts);
    r.min.is_finite().then_some(r.argmin)
}

/// Composite-likelihood estimate from repeated prior starts.
pub fn mcle_fit(
    model: ModelId,
    data: &DataMatrix,
    sites: &SiteSet,
    prior: &PriorSpec,
    weights: Option<&[f64]>,
    opts: &McleOptions,
    rng: &mut SplitRng,
) -> Result<McleFit> {
    let problem = Problem::new(model, data, sites, weights);
    let (lo, hi) = working_bounds(model, prior);
    let clamp = |u: Vec<f64>| -> Vec<f64> { u.iter().zip(lo.iter().zip(&hi)).map(|(v, (l, h))| v.clamp(*l, *h)).collect() };
    let mut starts: Vec<Vec<f64>> = (0..opts.max_starts).map(|_| clamp(prior_sample(model, prior, rng).to_working())).collect();
    if !model.is_maxstable() && !starts.is_empty() {
        let nm = OptimOptions { max_iter: 2000, ..opts.optim };
        if let Some(u) = tcop_full_start(model, data, sites, prior, &starts[0], &nm) {
            starts.insert(0, u);
        }
    }
    let f = |u: &[f64]| problem.eval(u).0;
    let g = |u: &[f64]| problem.eval(u).1;
    let mut best: Option<(f64, Vec<f64>)> = None;
    let mut n_ok = 0;
    let mut n_starts = 0;
    for start in &starts {
        if n_ok >= opts.n_converged {
            break;
        }
        n_starts += 1;
        let r = minimize_bounded(&f, Some(&g), &lo, &hi, start, &opts.optim);
        if !r.min.is_finite() {
            continue;
        }
        let u = problem.polish(r.argmin.clone(), opts.polish_iters, &lo, &hi);
        let (fu, gu) = problem.eval(&u);
        let gn = projected_norm(&u, &gu, &lo, &hi);
        if r.converged || gn <= CONVERGED_GRADIENT {
            n_ok += 1;
            if best.as_ref().is_none_or(|(bf, _)| fu < *bf) {
                best = Some((fu, u));
            }
        }
    }
    if n_ok < opts.n_converged {
        return Err(Error::Convergence(format!(
            "composite likelihood fit of {model}: {n_ok} of {} required runs converged in {n_starts} starts",
            opts.n_converged
        )));
    }
    let (_, u) = best.expect("at least one converged run");
    let params = canonical_params(model, &u);
    let (loglik, score) = pairwise_loglik_and_score(model, &params, data, sites, weights)?;
    Ok(McleFit {
        model,
        params,
        loglik,
        score_norm: score.iter().fold(0.0f64, |m, v| m.max(v.abs())),
        n_converged: n_ok,
        n_starts,
    })
}

/// Fits every model in `models` and collects the estimates.
pub fn fit_score_context(
    models: &[ModelId],
    data: &DataMatrix,
    sites: &SiteSet,
    prior: &PriorSpec,
    opts: &McleOptions,
    rng: &SplitRng,
) -> Result<(ScoreContext, Vec<McleFit>)> {
    let mut fits = Vec::with_capacity(models.len());
    for &m in models {
        let mut r = rng.child(m.code() as u64);
        fits.push(mcle_fit(m, data, sites, prior, None, opts, &mut r)?);
    }
    let ctx = ScoreContext::new(fits.iter().map(|f| (f.model, f.params)).collect());
    Ok((ctx, fits))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClicResult {
    pub clic: f64,
    pub loglik: f64,
    /// tr(Ĵ Ĥ⁻¹).
    pub penalty: f64,
}

/// CLIC = −2 pℓ(θ̃) + 2 tr(Ĵ Ĥ⁻¹), with Ĵ the sum of outer products of the
/// per-replicate scores and Ĥ the negative finite-difference Jacobian of the
/// analytic score.
pub fn clic_at(
    model: ModelId,
    params: &ParamVector,
    data: &DataMatrix,
    sites: &SiteSet,
    weights: Option<&[f64]>,
) -> Result<ClicResult> {
    let k = model.n_params();
    let contrib = score_contributions(model, params, data, sites, weights)?;
    let mut j = DMatrix::<f64>::zeros(k, k);
    for s in &contrib {
        for a in 0..k {
            for b in 0..k {
                j[(a, b)] += s[a] * s[b];
            }
        }
    }
    let theta = params.to_vec();
    let steps: Vec<f64> = theta.iter().map(|&v| relative_step(v)).collect();
    let jac = finite_difference_jacobian(
        |x| {
            let p = ParamVector::from_slice(model, x)?;
            let (_, s) = pairwise_loglik_and_score(model, &p, data, sites, weights)?;
            Ok(s)
        },
        &theta,
        &steps,
    )?;
    let h = DMatrix::from_fn(k, k, |a, b| -0.5 * (jac[a][b] + jac[b][a]));
    if h.iter().any(|v| !v.is_finite()) {
        return Err(Error::SingularHessian(format!("{model}: non-finite Hessian entries")));
    }
    let svd = h.clone().svd(false, false);
    let smax = svd.singular_values.max();
    let smin = svd.singular_values.min();
    if !(smin > 1e-12 * smax) {
        return Err(Error::SingularHessian(format!("{model}: Hessian condition {smax}/{smin}")));
    }
    let hinv = h.try_inverse().ok_or_else(|| Error::SingularHessian(format!("{model}: Hessian not invertible")))?;
    let penalty: f64 = (&j * &hinv).trace();
    let loglik = pairwise_loglik(model, params, data, sites, weights)?;
    Ok(ClicResult { clic: -2.0 * loglik + 2.0 * penalty, loglik, penalty })
}

/// Fits the model and evaluates its CLIC.
pub fn clic(
    model: ModelId,
    data: &DataMatrix,
    sites: &SiteSet,
    prior: &PriorSpec,
    opts: &McleOptions,
    rng: &mut SplitRng,
) -> Result<ClicResult> {
    let fit = mcle_fit(model, data, sites, prior, None, opts, rng)?;
    clic_at(model, &fit.params, data, sites, None)
}
