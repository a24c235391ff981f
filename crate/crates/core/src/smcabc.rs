//! Rejection ABC initialisation, the SMC ABC replenishment sampler with
//! reversible-jump moves between models, posterior summaries and
//! predictive checks.

use crate::error::{Error, Result};
use crate::fpstep::{FpFit, FpStats};
use crate::margins::DataMatrix;
use crate::models::{prior_sample, ModelId, ParamVector, PriorSpec};
use crate::numerics::linalg::cholesky_jittered;
use crate::numerics::{mean_sd_sample, quantile_sorted, SplitRng};
use crate::simulate::Simulator;
use crate::spatial::{site_pairs, SiteSet};
use crate::summaries::{fmadogram, kendall_tau, SummaryDesign};
use nalgebra::{DMatrix, DVector};
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;

/// Fraction of invalid prior-predictive summaries that aborts initialisation.
pub const MAX_INVALID_FRACTION: f64 = 0.2;

const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Serialises non-finite floats as the strings "inf", "-inf" and "nan" so
/// that JSON round trips are lossless.
pub mod extended_f64 {
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    #[derive(Serialize, Deserialize)]
    #[serde(untagged)]
    enum Repr {
        Num(f64),
        Text(String),
    }

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else if v.is_nan() {
            s.serialize_str("nan")
        } else if *v > 0.0 {
            s.serialize_str("inf")
        } else {
            s.serialize_str("-inf")
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        match Repr::deserialize(d)? {
            Repr::Num(v) => Ok(v),
            Repr::Text(t) => match t.as_str() {
                "inf" => Ok(f64::INFINITY),
                "-inf" => Ok(f64::NEG_INFINITY),
                "nan" => Ok(f64::NAN),
                _ => Err(serde::de::Error::custom(format!("invalid number '{t}'"))),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Particle {
    pub model: ModelId,
    pub params: ParamVector,
    pub stats: FpStats,
    #[serde(with = "extended_f64")]
    pub d_t: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SmcConfig {
    pub n: usize,
    pub n2: usize,
    pub delta: f64,
    pub c: f64,
    pub p_acc_min: f64,
    /// Tolerance floor; `None` disables this stopping rule.
    pub eps_min: Option<f64>,
    pub r1: usize,
    pub max_iters: usize,
}

impl Default for SmcConfig {
    fn default() -> Self {
        Self { n: 2000, n2: 20_000, delta: 0.5, c: 0.01, p_acc_min: 0.01, eps_min: None, r1: 10, max_iters: 200 }
    }
}

impl SmcConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n < 2 || self.n > self.n2 {
            return Err(Error::invalid(format!("need 2 <= N <= N2, got N = {}, N2 = {}", self.n, self.n2)));
        }
        if !(self.delta > 0.0 && self.delta < 1.0) || !(self.c > 0.0 && self.c < 1.0) {
            return Err(Error::invalid("delta and c must lie in (0, 1)"));
        }
        if self.n_drop() >= self.n {
            return Err(Error::invalid("delta drops every particle"));
        }
        if self.r1 == 0 || self.max_iters == 0 {
            return Err(Error::invalid("R1 and max_iters must be positive"));
        }
        if !(self.p_acc_min >= 0.0 && self.p_acc_min < 1.0) {
            return Err(Error::invalid("p_acc_min must lie in [0, 1)"));
        }
        Ok(())
    }

    /// N_δ = ⌈δN⌉.
    pub fn n_drop(&self) -> usize {
        (self.delta * self.n as f64 - 1e-9).ceil() as usize
    }
}

/// R_{t+1} = ⌈ln c / ln(1 − p_acc)⌉, at least one.
pub fn next_move_count(p_acc: f64, c: f64) -> usize {
    if !(p_acc > 0.0) {
        return usize::MAX;
    }
    if p_acc >= 1.0 {
        return 1;
    }
    let r = (c.ln() / (-p_acc).ln_1p()).ceil();
    if r.is_finite() { (r as usize).max(1) } else { usize::MAX }
}

/// Everything needed to score a simulated parameter against the observation.
pub struct AbcProblem<'a> {
    pub fit: &'a FpFit,
    pub design: &'a SummaryDesign,
    pub sites: &'a SiteSet,
    pub n_reps: usize,
    pub prior: &'a PriorSpec,
    pub obs: FpStats,
}

impl AbcProblem<'_> {
    pub fn models(&self) -> &[ModelId] {
        &self.fit.models
    }

    /// Model prior restricted to the fitted models and renormalised.
    pub fn model_weights(&self) -> Result<Vec<f64>> {
        let w: Vec<f64> = self.fit.models.iter().map(|m| self.prior.model_prior[m.code()]).collect();
        let total: f64 = w.iter().sum();
        if !(total > 0.0) {
            return Err(Error::invalid("model prior puts no mass on the fitted models"));
        }
        Ok(w.into_iter().map(|v| v / total).collect())
    }

    /// Simulates a dataset at (model, params) and scores it; `None` when the
    /// simulation or its summaries fail.
    pub fn simulate_particle(&self, model: ModelId, params: ParamVector, rng: &mut SplitRng) -> Option<Particle> {
        let sim = Simulator::new(model, &params, self.sites).ok()?;
        let data = sim.dataset(&self.sites.ids, self.n_reps, rng).ok()?;
        let s = self.design.summarize(&data, self.sites).ok()?;
        let stats = self.fit.project(s.require_valid().ok()?).ok()?;
        let d_t = self.fit.discrepancy(&self.obs, &stats).d_t;
        (!d_t.is_nan() && d_t < f64::INFINITY).then_some(Particle { model, params, stats, d_t })
    }
}

fn sample_index<R: Rng + ?Sized>(weights: &[f64], rng: &mut R) -> usize {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (i, w) in weights.iter().enumerate() {
        acc += w;
        if u < acc {
            return i;
        }
    }
    weights.iter().rposition(|&w| w > 0.0).unwrap_or(0)
}

fn sort_particles(ps: &mut [Particle]) {
    ps.sort_by(|a, b| a.d_t.total_cmp(&b.d_t));
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionInit {
    /// The N particles with smallest discrepancy, sorted ascending.
    pub particles: Vec<Particle>,
    #[serde(with = "extended_f64")]
    pub eps: f64,
    pub n_draws: usize,
    pub n_invalid: usize,
}

/// Draws N2 particles from the prior predictive and keeps the N closest to
/// the observation.
pub fn rejection_init(problem: &AbcProblem, cfg: &SmcConfig, rng: &SplitRng) -> Result<RejectionInit> {
    cfg.validate()?;
    let weights = problem.model_weights()?;
    let models = problem.models();
    let drawn: Vec<(ModelId, Option<Particle>)> = (0..cfg.n2)
        .into_par_iter()
        .map(|i| {
            let mut r = rng.child(i as u64);
            let k = models[sample_index(&weights, &mut r)];
            let params = prior_sample(k, problem.prior, &mut r);
            (k, problem.simulate_particle(k, params, &mut r))
        })
        .collect();
    let n_invalid = drawn.iter().filter(|(_, p)| p.is_none()).count();
    if n_invalid as f64 > MAX_INVALID_FRACTION * cfg.n2 as f64 {
        let per_model: Vec<String> = models
            .iter()
            .map(|m| {
                let bad = drawn.iter().filter(|(k, p)| k == m && p.is_none()).count();
                let all = drawn.iter().filter(|(k, _)| k == m).count();
                format!("{m}: {bad}/{all}")
            })
            .collect();
        return Err(Error::NumericalAbort(format!(
            "{n_invalid} of {} prior-predictive summary vectors were invalid ({})",
            cfg.n2,
            per_model.join(", ")
        )));
    }
    let mut particles: Vec<Particle> = drawn.into_iter().filter_map(|(_, p)| p).collect();
    if particles.len() < cfg.n {
        return Err(Error::NumericalAbort(format!("only {} valid draws for {} particles", particles.len(), cfg.n)));
    }
    sort_particles(&mut particles);
    particles.truncate(cfg.n);
    let eps = particles[cfg.n - 1].d_t;
    Ok(RejectionInit { particles, eps, n_draws: cfg.n2, n_invalid })
}

/// Multivariate normal proposal on the working scale.
#[derive(Debug, Clone)]
struct Proposal {
    mean: DVector<f64>,
    chol: DMatrix<f64>,
    log_norm: f64,
}

impl Proposal {
    fn new(mean: DVector<f64>, chol: DMatrix<f64>) -> Self {
        let d = mean.len() as f64;
        let logdet: f64 = chol.diagonal().iter().map(|v| v.ln()).sum();
        Self { mean, chol, log_norm: -0.5 * d * LN_2PI - logdet }
    }

    fn fit(model: ModelId, us: &[Vec<f64>], prior: &PriorSpec) -> Self {
        let d = model.n_params();
        let n = us.len();
        let mean = DVector::from_fn(d, |j, _| us.iter().map(|u| u[j]).sum::<f64>() / n.max(1) as f64);
        let diagonal = || DMatrix::from_diagonal(&DVector::from_vec(prior.working_variances(model)).map(f64::sqrt));
        if n < d + 1 {
            return Self::new(mean, diagonal());
        }
        let mut cov = DMatrix::<f64>::zeros(d, d);
        for u in us {
            let c = DVector::from_column_slice(u) - &mean;
            cov += &c * c.transpose();
        }
        cov /= (n - 1) as f64;
        let chol = cholesky_jittered(&cov, "proposal covariance", None).unwrap_or_else(|_| diagonal());
        Self::new(mean, chol)
    }

    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        let z = DVector::from_fn(self.mean.len(), |_, _| rng.sample::<f64, _>(StandardNormal));
        (&self.mean + &self.chol * z).iter().copied().collect()
    }

    fn logpdf(&self, u: &[f64]) -> f64 {
        let r = DVector::from_column_slice(u) - &self.mean;
        match self.chol.solve_lower_triangular(&r) {
            Some(z) => self.log_norm - 0.5 * z.norm_squared(),
            None => f64::NEG_INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub iteration: usize,
    #[serde(with = "extended_f64")]
    pub eps: f64,
    /// NaN for the rejection stage.
    #[serde(with = "extended_f64")]
    pub p_acc: f64,
    /// Moves per resampled particle; zero for the rejection stage.
    pub r: usize,
    pub accepted: usize,
    pub n_invalid: usize,
    /// Particle counts per model after the iteration's moves.
    pub counts: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcTrace {
    pub models: Vec<ModelId>,
    pub rows: Vec<TraceRow>,
}

impl SmcTrace {
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("iteration,eps,p_acc,R,accepted,invalid");
        for m in &self.models {
            let _ = write!(s, ",n_{m}");
        }
        s.push('\n');
        for r in &self.rows {
            let _ = write!(s, "{},{},{},{},{},{}", r.iteration, r.eps, r.p_acc, r.r, r.accepted, r.n_invalid);
            for c in &r.counts {
                let _ = write!(s, ",{c}");
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SmcOutput {
    pub particles: Vec<Particle>,
    pub trace: SmcTrace,
    #[serde(with = "extended_f64")]
    pub eps: f64,
}

fn model_counts(models: &[ModelId], ps: &[Particle]) -> Vec<usize> {
    models.iter().map(|m| ps.iter().filter(|p| p.model == *m).count()).collect()
}

struct MoveOutcome {
    particle: Particle,
    accepted: usize,
    invalid: usize,
}

#[allow(clippy::too_many_arguments)]
fn move_particle(
    problem: &AbcProblem,
    mut cur: Particle,
    alive: &[usize],
    proposals: &[Option<Proposal>],
    log_weights: &[f64],
    eps: f64,
    r: usize,
    rng: &mut SplitRng,
) -> MoveOutcome {
    let models = problem.models();
    let mut accepted = 0;
    let mut invalid = 0;
    let mut cur_k = models.iter().position(|&m| m == cur.model).expect("particle model is fitted");
    let mut cur_u = cur.params.to_working();
    let mut cur_lp = problem.prior.working_logpdf(cur.model, &cur_u);
    for _ in 0..r {
        let k = alive[rng.random_range(0..alive.len())];
        let q_new = proposals[k].as_ref().expect("alive models carry a proposal");
        let q_cur = proposals[cur_k].as_ref().expect("alive models carry a proposal");
        let u = q_new.sample(rng);
        let lp = problem.prior.working_logpdf(models[k], &u);
        let log_u: f64 = rng.random::<f64>().ln();
        if lp == f64::NEG_INFINITY {
            continue;
        }
        let log_ratio = lp - cur_lp + log_weights[k] - log_weights[cur_k] + q_cur.logpdf(&cur_u) - q_new.logpdf(&u);
        if !(log_u < log_ratio) {
            continue;
        }
        let params = ParamVector::from_working(models[k], &u);
        match problem.simulate_particle(models[k], params, rng) {
            Some(p) if p.d_t < eps => {
                cur = p;
                cur_k = k;
                cur_u = u;
                cur_lp = lp;
                accepted += 1;
            }
            Some(_) => {}
            None => invalid += 1,
        }
    }
    MoveOutcome { particle: cur, accepted, invalid }
}

/// Runs the replenishment sampler from an initial particle set.
pub fn smc_run(init: &RejectionInit, problem: &AbcProblem, cfg: &SmcConfig, rng: &SplitRng) -> Result<SmcOutput> {
    cfg.validate()?;
    if init.particles.len() != cfg.n {
        return Err(Error::invalid(format!("initial set has {} particles, expected {}", init.particles.len(), cfg.n)));
    }
    let models = problem.models().to_vec();
    if init.particles.iter().any(|p| !models.contains(&p.model)) {
        return Err(Error::invalid("initial particle from a model outside the fit"));
    }
    let log_weights: Vec<f64> = problem.model_weights()?.iter().map(|w| w.ln()).collect();
    let n_drop = cfg.n_drop();
    let n_keep = cfg.n - n_drop;
    let mut particles = init.particles.clone();
    sort_particles(&mut particles);
    let mut alive_mask: Vec<bool> = model_counts(&models, &particles).iter().map(|&c| c > 0).collect();
    let mut trace = SmcTrace {
        models: models.clone(),
        rows: vec![TraceRow {
            iteration: 0,
            eps: init.eps,
            p_acc: f64::NAN,
            r: 0,
            accepted: 0,
            n_invalid: init.n_invalid,
            counts: model_counts(&models, &particles),
        }],
    };
    let mut r = cfg.r1;
    let mut eps = init.eps;
    for t in 1..=cfg.max_iters {
        sort_particles(&mut particles);
        particles.truncate(n_keep);
        eps = particles[n_keep - 1].d_t;

        let mut proposals: Vec<Option<Proposal>> = vec![None; models.len()];
        for (k, &m) in models.iter().enumerate() {
            let us: Vec<Vec<f64>> = particles.iter().filter(|p| p.model == m).map(|p| p.params.to_working()).collect();
            if us.is_empty() {
                alive_mask[k] = false;
            }
            if alive_mask[k] {
                proposals[k] = Some(Proposal::fit(m, &us, problem.prior));
            }
        }
        let alive: Vec<usize> = (0..models.len()).filter(|&k| alive_mask[k]).collect();

        let it_rng = rng.child(t as u64);
        let mut pick = it_rng.child(u64::MAX);
        let starts: Vec<Particle> = (0..n_drop).map(|_| particles[pick.random_range(0..n_keep)].clone()).collect();
        let moved: Vec<MoveOutcome> = starts
            .into_par_iter()
            .enumerate()
            .map(|(j, p)| {
                let mut jr = it_rng.child(j as u64);
                move_particle(problem, p, &alive, &proposals, &log_weights, eps, r, &mut jr)
            })
            .collect();
        let accepted: usize = moved.iter().map(|m| m.accepted).sum();
        let n_invalid: usize = moved.iter().map(|m| m.invalid).sum();
        particles.extend(moved.into_iter().map(|m| m.particle));

        let p_acc = accepted as f64 / (r * n_drop) as f64;
        trace.rows.push(TraceRow {
            iteration: t,
            eps,
            p_acc,
            r,
            accepted,
            n_invalid,
            counts: model_counts(&models, &particles),
        });
        if p_acc <= cfg.p_acc_min || cfg.eps_min.is_some_and(|e| eps <= e) {
            break;
        }
        r = next_move_count(p_acc, cfg.c);
    }
    sort_particles(&mut particles);
    Ok(SmcOutput { particles, trace, eps })
}

/// Fraction of particles from each model.
pub fn posterior_model_probs(ps: &[Particle], models: &[ModelId]) -> Vec<f64> {
    let n = ps.len().max(1) as f64;
    model_counts(models, ps).into_iter().map(|c| c as f64 / n).collect()
}

/// One row of a posterior parameter table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSummaryRow {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
    pub q025: f64,
    pub median: f64,
    pub q975: f64,
}

impl ParamSummaryRow {
    pub fn from_values(name: &str, values: &[f64]) -> Self {
        let mut sorted = values.to_vec();
        sorted.sort_by(f64::total_cmp);
        let (mean, sd) = mean_sd_sample(values);
        Self {
            name: name.to_string(),
            mean,
            sd,
            q025: quantile_sorted(&sorted, 0.025),
            median: quantile_sorted(&sorted, 0.5),
            q975: quantile_sorted(&sorted, 0.975),
        }
    }
}

/// Mean, sample sd and type-7 quantiles of one model's parameters, with
/// log-scale and natural-scale rows for λ, r and ν.
pub fn posterior_param_summary(ps: &[Particle], model: ModelId) -> Result<Vec<ParamSummaryRow>> {
    let sub: Vec<&ParamVector> = ps.iter().filter(|p| p.model == model).map(|p| &p.params).collect();
    if sub.is_empty() {
        return Err(Error::invalid(format!("no particles from model {model}")));
    }
    let col = |f: &dyn Fn(&ParamVector) -> f64| sub.iter().map(|p| f(p)).collect::<Vec<f64>>();
    let mut rows = vec![
        ParamSummaryRow::from_values("log_lambda", &col(&|p| p.lambda.ln())),
        ParamSummaryRow::from_values("lambda", &col(&|p| p.lambda)),
        ParamSummaryRow::from_values("kappa", &col(&|p| p.kappa)),
        ParamSummaryRow::from_values("alpha", &col(&|p| p.alpha)),
        ParamSummaryRow::from_values("log_ratio", &col(&|p| p.ratio.ln())),
        ParamSummaryRow::from_values("ratio", &col(&|p| p.ratio)),
    ];
    if model.has_nu() {
        rows.push(ParamSummaryRow::from_values("log_nu", &col(&|p| p.nu_or_nan().ln())));
        rows.push(ParamSummaryRow::from_values("nu", &col(&|p| p.nu_or_nan())));
    }
    Ok(rows)
}

/// Where predictive draws of (model, parameters) come from.
pub enum PredictiveSource<'a> {
    Posterior(&'a [Particle]),
    Prior { prior: &'a PriorSpec, models: &'a [ModelId] },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Band {
    pub mean: f64,
    pub q025: f64,
    pub q975: f64,
    pub observed: Option<f64>,
    pub outside: Option<bool>,
}

impl Band {
    fn new(draws: &mut [f64], observed: Option<f64>) -> Self {
        draws.sort_by(f64::total_cmp);
        let mean = draws.iter().sum::<f64>() / draws.len() as f64;
        let q025 = quantile_sorted(draws, 0.025);
        let q975 = quantile_sorted(draws, 0.975);
        Self { mean, q025, q975, observed, outside: observed.map(|o| o < q025 || o > q975) }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairPredictive {
    pub site_a: String,
    pub site_b: String,
    pub dist: f64,
    pub fmado: Band,
    pub tau: Band,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PredictiveCheck {
    pub n_draws: usize,
    pub n_failed: usize,
    pub pairs: Vec<PairPredictive>,
}

impl PredictiveCheck {
    pub fn outside_rate(&self) -> f64 {
        let flags: Vec<bool> = self.pairs.iter().flat_map(|p| [p.fmado.outside, p.tau.outside]).flatten().collect();
        flags.iter().filter(|&&f| f).count() as f64 / flags.len().max(1) as f64
    }

    /// One row per site pair: pair, dist, then mean, q025, q975, observed
    /// and flag for the F-madogram and for Kendall's τ.
    pub fn to_csv_string(&self) -> String {
        let mut s = String::from("pair,dist");
        for ind in ["fmado", "tau"] {
            for col in ["mean", "q025", "q975", "observed", "flag"] {
                let _ = write!(s, ",{ind}_{col}");
            }
        }
        s.push('\n');
        for p in &self.pairs {
            let _ = write!(s, "{}-{},{}", p.site_a, p.site_b, p.dist);
            for b in [&p.fmado, &p.tau] {
                let obs = b.observed.map(|x| x.to_string()).unwrap_or_default();
                let flag = b.outside.map(|f| f.to_string()).unwrap_or_default();
                let _ = write!(s, ",{},{},{},{obs},{flag}", b.mean, b.q025, b.q975);
            }
            s.push('\n');
        }
        s
    }
}

fn pair_indicators(data: &DataMatrix, pairs: &[(usize, usize)]) -> Option<(Vec<f64>, Vec<f64>)> {
    let cols = data.columns();
    let mut f = Vec::with_capacity(pairs.len());
    let mut t = Vec::with_capacity(pairs.len());
    for &(i, j) in pairs {
        f.push(fmadogram(&cols[i], &cols[j]).ok()?);
        t.push(kendall_tau(&cols[i], &cols[j]).ok()?);
    }
    Some((f, t))
}

/// Per-pair predictive bands of the F-madogram and Kendall's τ from
/// `n_draws` simulated datasets of `n_reps` replicates.
pub fn predictive_check(
    source: &PredictiveSource,
    sites: &SiteSet,
    n_reps: usize,
    n_draws: usize,
    observed: Option<&DataMatrix>,
    rng: &SplitRng,
) -> Result<PredictiveCheck> {
    if n_draws == 0 || n_reps < 2 {
        return Err(Error::invalid("predictive check needs at least one draw of two or more replicates"));
    }
    match source {
        PredictiveSource::Posterior([]) => return Err(Error::invalid("empty particle set")),
        PredictiveSource::Prior { models: [], .. } => return Err(Error::invalid("no models")),
        _ => {}
    }
    let pairs = site_pairs(sites.len());
    let obs = match observed {
        Some(d) => {
            if d.n_sites() != sites.len() {
                return Err(Error::invalid("observed data and site set disagree"));
            }
            Some(pair_indicators(d, &pairs).ok_or_else(|| Error::invalid("observed pair indicators undefined"))?)
        }
        None => None,
    };
    let draws: Vec<Option<(Vec<f64>, Vec<f64>)>> = (0..n_draws)
        .into_par_iter()
        .map(|d| {
            let mut r = rng.child(d as u64);
            let (model, params) = match source {
                PredictiveSource::Posterior(ps) => {
                    let p = &ps[r.random_range(0..ps.len())];
                    (p.model, p.params)
                }
                PredictiveSource::Prior { prior, models } => {
                    let w: Vec<f64> = models.iter().map(|m| prior.model_prior[m.code()]).collect();
                    let total: f64 = w.iter().sum();
                    let w: Vec<f64> = w.iter().map(|v| v / total).collect();
                    let m = models[sample_index(&w, &mut r)];
                    (m, prior_sample(m, prior, &mut r))
                }
            };
            let sim = Simulator::new(model, &params, sites).ok()?;
            let data = sim.dataset(&sites.ids, n_reps, &mut r).ok()?;
            pair_indicators(&data, &pairs)
        })
        .collect();
    let ok: Vec<(Vec<f64>, Vec<f64>)> = draws.into_iter().flatten().collect();
    let n_failed = n_draws - ok.len();
    if ok.is_empty() {
        return Err(Error::NumericalAbort("every predictive simulation failed".into()));
    }
    let out = pairs
        .iter()
        .enumerate()
        .map(|(q, &(i, j))| {
            let mut f: Vec<f64> = ok.iter().map(|d| d.0[q]).collect();
            let mut t: Vec<f64> = ok.iter().map(|d| d.1[q]).collect();
            PairPredictive {
                site_a: sites.ids[i].clone(),
                site_b: sites.ids[j].clone(),
                dist: sites.euclidean(i, j),
                fmado: Band::new(&mut f, obs.as_ref().map(|o| o.0[q])),
                tau: Band::new(&mut t, obs.as_ref().map(|o| o.1[q])),
            }
        })
        .collect();
    Ok(PredictiveCheck { n_draws, n_failed, pairs: out })
}
