//! Regression-based summary statistics: a prior-predictive training set,
//! stepwise model-choice and parameter regressions, and the ABC
//! discrepancies built from their predictions.

mod linear;
mod logistic;

pub use linear::{stepwise_ols, LinearFit};
pub use logistic::{softmax_with_baseline, stepwise_logistic, LogisticFit, RIDGE, STEPWISE_CANDIDATES};

use crate::error::{Error, Result};
use crate::models::{prior_sample, ModelId, ParamVector, PriorSpec};
use crate::numerics::{mean_sd_sample, SplitRng};
use crate::simulate::Simulator;
use crate::spatial::SiteSet;
use crate::summaries::SummaryDesign;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingRecord {
    pub model: ModelId,
    pub params: ParamVector,
    /// Raw (unstandardised) summary vector.
    pub summary: Vec<f64>,
}

/// Per-covariate centring and scaling; covariates with `kept = false` are
/// ignored by the regressions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardization {
    pub mean: Vec<f64>,
    pub sd: Vec<f64>,
    pub kept: Vec<bool>,
}

impl Standardization {
    pub fn fit(names: &[String], rows: &[&[f64]]) -> (Self, Vec<String>) {
        let p = names.len();
        let mut warnings = Vec::new();
        let mut mean = vec![0.0; p];
        let mut sd = vec![1.0; p];
        let mut kept = vec![true; p];
        for j in 0..p {
            let col: Vec<f64> = rows.iter().map(|r| r[j]).collect();
            if col.iter().any(|v| !v.is_finite()) {
                kept[j] = false;
                warnings.push(format!("covariate {} has non-finite values and was dropped", names[j]));
                continue;
            }
            let (m, s) = mean_sd_sample(&col);
            if !(s > 1e-12 * m.abs().max(1e-300)) || !s.is_finite() {
                kept[j] = false;
                warnings.push(format!("covariate {} has zero variance and was dropped", names[j]));
                continue;
            }
            mean[j] = m;
            sd[j] = s;
        }
        (Self { mean, sd, kept }, warnings)
    }

    /// Indices of the kept covariates.
    pub fn kept_indices(&self) -> Vec<usize> {
        (0..self.kept.len()).filter(|&j| self.kept[j]).collect()
    }

    /// Standardised kept covariates of a raw summary vector.
    pub fn apply(&self, raw: &[f64], names: &[String]) -> Result<Vec<f64>> {
        if raw.len() != self.kept.len() {
            return Err(Error::invalid(format!(
                "summary has {} components, the fit expects {}",
                raw.len(),
                self.kept.len()
            )));
        }
        let mut out = Vec::with_capacity(raw.len());
        let mut bad = Vec::new();
        for j in 0..raw.len() {
            if !self.kept[j] {
                continue;
            }
            if !raw[j].is_finite() {
                bad.push(names.get(j).cloned().unwrap_or_else(|| format!("component {j}")));
            }
            out.push((raw[j] - self.mean[j]) / self.sd[j]);
        }
        if bad.is_empty() {
            Ok(out)
        } else {
            Err(Error::InvalidSummary(bad))
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainingSet {
    pub models: Vec<ModelId>,
    pub names: Vec<String>,
    pub records: Vec<TrainingRecord>,
    /// Draws whose simulation or summaries failed.
    pub n_invalid: usize,
    pub standardization: Standardization,
    pub warnings: Vec<String>,
}

impl TrainingSet {
    /// Standardised kept covariates of every record.
    pub fn standardized(&self) -> Vec<Vec<f64>> {
        let idx = self.standardization.kept_indices();
        self.records
            .iter()
            .map(|r| {
                idx.iter()
                    .map(|&j| (r.summary[j] - self.standardization.mean[j]) / self.standardization.sd[j])
                    .collect()
            })
            .collect()
    }

    pub fn count(&self, model: ModelId) -> usize {
        self.records.iter().filter(|r| r.model == model).count()
    }
}

/// Number of draws per model: M·π_k rounded by largest remainder.
fn allocate(models: &[ModelId], prior: &PriorSpec, m: usize) -> Vec<usize> {
    let w: Vec<f64> = models.iter().map(|k| prior.model_prior.get(k.code()).copied().unwrap_or(0.0)).collect();
    let total: f64 = w.iter().sum();
    let exact: Vec<f64> = w.iter().map(|v| v / total * m as f64).collect();
    let mut counts: Vec<usize> = exact.iter().map(|v| v.floor() as usize).collect();
    let mut rest = m - counts.iter().sum::<usize>();
    let mut order: Vec<usize> = (0..models.len()).collect();
    order.sort_by(|&a, &b| (exact[b] - exact[b].floor()).total_cmp(&(exact[a] - exact[a].floor())));
    for &i in order.iter().cycle() {
        if rest == 0 {
            break;
        }
        counts[i] += 1;
        rest -= 1;
    }
    counts
}

/// Simulates one prior-predictive record; `None` when simulation or
/// summaries fail.
pub fn simulate_record(
    model: ModelId,
    prior: &PriorSpec,
    sites: &SiteSet,
    n_reps: usize,
    design: &SummaryDesign,
    rng: &mut SplitRng,
) -> Option<TrainingRecord> {
    let params = prior_sample(model, prior, rng);
    let sim = Simulator::new(model, &params, sites).ok()?;
    let data = sim.dataset(&sites.ids, n_reps, rng).ok()?;
    let s = design.summarize(&data, sites).ok()?;
    s.is_valid().then_some(TrainingRecord { model, params, summary: s.values })
}

/// Draws M prior-predictive records split across `models` according to the
/// model prior, then standardises the covariates.
pub fn generate_training_set(
    models: &[ModelId],
    prior: &PriorSpec,
    sites: &SiteSet,
    n_reps: usize,
    m: usize,
    design: &SummaryDesign,
    rng: &SplitRng,
) -> Result<TrainingSet> {
    if models.is_empty() || m == 0 {
        return Err(Error::invalid("training set needs at least one model and one draw"));
    }
    let counts = allocate(models, prior, m);
    let labels: Vec<ModelId> = models.iter().zip(&counts).flat_map(|(&k, &c)| std::iter::repeat_n(k, c)).collect();
    let drawn: Vec<Option<TrainingRecord>> = labels
        .par_iter()
        .enumerate()
        .map(|(i, &k)| simulate_record(k, prior, sites, n_reps, design, &mut rng.child(i as u64)))
        .collect();
    let n_invalid = drawn.iter().filter(|r| r.is_none()).count();
    let records: Vec<TrainingRecord> = drawn.into_iter().flatten().collect();
    let names = summary_names(design)?;
    let mut warnings = Vec::new();
    let p = names.len();
    let recommended = models.len() * (p + 5);
    if m < recommended {
        warnings.push(format!("training size {m} is below the recommended {recommended}"));
    }
    if n_invalid > 0 {
        warnings.push(format!("{n_invalid} of {m} prior-predictive draws gave invalid summaries and were excluded"));
    }
    if records.len() < 2 {
        return Err(Error::invalid("fewer than two valid training records"));
    }
    let rows: Vec<&[f64]> = records.iter().map(|r| r.summary.as_slice()).collect();
    let (standardization, w) = Standardization::fit(&names, &rows);
    warnings.extend(w);
    Ok(TrainingSet { models: models.to_vec(), names, records, n_invalid, standardization, warnings })
}

fn summary_names(design: &SummaryDesign) -> Result<Vec<String>> {
    let nb = design.bins.n_bins();
    let mut names = Vec::with_capacity(design.len());
    for (label, groups, tag) in [
        ("fmado", nb, "bin"),
        ("ext2", nb, "bin"),
        ("ext3", design.clusters.g, "cluster"),
        ("tau", nb, "bin"),
    ] {
        for g in 1..=groups {
            names.push(format!("{label}_mean_{tag}{g}"));
            names.push(format!("{label}_sd_{tag}{g}"));
        }
    }
    names.extend(design.score_ctx.component_names());
    Ok(names)
}

/// Linear regression of one working-scale parameter of one model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamRegression {
    pub model: ModelId,
    /// Index into (λ, κ, α, r, ν).
    pub param: usize,
    /// Responses are ln λ, κ, α, ln r, ln ν.
    pub log_response: bool,
    pub fit: LinearFit,
    /// Standard deviation of the fitted values over the whole training set.
    pub sd_phi: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpFit {
    pub models: Vec<ModelId>,
    pub names: Vec<String>,
    pub standardization: Standardization,
    pub logistic: LogisticFit,
    pub linear: Vec<ParamRegression>,
    #[serde(default)]
    pub warnings: Vec<String>,
    /// Summary design the fit was trained on.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub design: Option<SummaryDesign>,
}

/// Projected statistics: model probabilities and parameter predictions.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FpStats {
    pub probs: Vec<f64>,
    pub phi: Vec<f64>,
}

pub fn fit_model_choice_regression(ts: &TrainingSet) -> Result<LogisticFit> {
    let x = ts.standardized();
    let rows: Vec<&[f64]> = x.iter().map(|r| r.as_slice()).collect();
    let y: Vec<usize> = ts
        .records
        .iter()
        .map(|r| ts.models.iter().position(|&m| m == r.model).expect("record model in set"))
        .collect();
    let n_cov = ts.standardization.kept_indices().len();
    stepwise_logistic(&rows, &y, ts.models.len(), n_cov)
}

pub fn fit_param_regressions(ts: &TrainingSet) -> Result<(Vec<ParamRegression>, Vec<String>)> {
    let x = ts.standardized();
    let n_cov = ts.standardization.kept_indices().len();
    let jobs: Vec<(ModelId, usize)> = ts
        .models
        .iter()
        .flat_map(|&m| (0..m.n_params()).map(move |j| (m, j)))
        .collect();
    let fits: Vec<Result<(ParamRegression, Option<String>)>> = jobs
        .par_iter()
        .map(|&(model, j)| {
            let idx: Vec<usize> = (0..ts.records.len()).filter(|&i| ts.records[i].model == model).collect();
            if idx.is_empty() {
                return Err(Error::invalid(format!("no valid training records for {model}")));
            }
            let rows: Vec<&[f64]> = idx.iter().map(|&i| x[i].as_slice()).collect();
            let y: Vec<f64> = idx.iter().map(|&i| ts.records[i].params.to_working()[j]).collect();
            let fit = stepwise_ols(&rows, &y, n_cov);
            let fitted: Vec<f64> = x.iter().map(|r| fit.predict(r)).collect();
            let sd_phi = mean_sd_sample(&fitted).1;
            let warn = fit
                .rank_deficient
                .then(|| format!("regression for {model} {} used a pseudo-inverse", model.param_names()[j]));
            Ok((ParamRegression { model, param: j, log_response: j == 0 || j >= 3, fit, sd_phi }, warn))
        })
        .collect();
    let mut out = Vec::with_capacity(fits.len());
    let mut warnings = Vec::new();
    for f in fits {
        let (r, w) = f?;
        warnings.extend(w);
        out.push(r);
    }
    Ok((out, warnings))
}

impl FpFit {
    pub fn fit(ts: &TrainingSet) -> Result<Self> {
        let logistic = fit_model_choice_regression(ts)?;
        let (linear, w) = fit_param_regressions(ts)?;
        let mut warnings = ts.warnings.clone();
        warnings.extend(w);
        Ok(Self {
            models: ts.models.clone(),
            names: ts.names.clone(),
            standardization: ts.standardization.clone(),
            logistic,
            linear,
            warnings,
            design: None,
        })
    }

    pub fn with_design(mut self, design: SummaryDesign) -> Self {
        self.design = Some(design);
        self
    }

    /// Projects a raw summary vector.
    pub fn project(&self, raw: &[f64]) -> Result<FpStats> {
        let x = self.standardization.apply(raw, &self.names)?;
        Ok(self.project_standardized(&x))
    }

    pub fn project_standardized(&self, x: &[f64]) -> FpStats {
        FpStats { probs: self.logistic.predict(x), phi: self.linear.iter().map(|r| r.fit.predict(x)).collect() }
    }

    pub fn predict_model_probs(&self, raw: &[f64]) -> Result<Vec<f64>> {
        Ok(self.project(raw)?.probs)
    }

    pub fn discrepancy(&self, t_obs: &FpStats, t_sim: &FpStats) -> Discrepancy {
        discrepancy(self, t_obs, t_sim)
    }

    /// Rows: true model; columns: average predicted probability.
    pub fn average_probability_matrix(&self, records: &[TrainingRecord]) -> Result<Vec<Vec<f64>>> {
        let k = self.models.len();
        let mut sums = vec![vec![0.0; k]; k];
        let mut counts = vec![0usize; k];
        for r in records {
            let Some(row) = self.models.iter().position(|&m| m == r.model) else { continue };
            let p = self.predict_model_probs(&r.summary)?;
            for c in 0..k {
                sums[row][c] += p[c];
            }
            counts[row] += 1;
        }
        for (row, &n) in sums.iter_mut().zip(&counts) {
            for v in row.iter_mut() {
                *v /= n.max(1) as f64;
            }
        }
        Ok(sums)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Discrepancy {
    pub d_m: f64,
    pub d_p: f64,
    pub d_t: f64,
}

/// d_M over the non-baseline probabilities, d_P over the scaled parameter
/// predictions, d_T = ln(d_M·d_P). Regressions whose fitted values are
/// constant contribute nothing to d_P.
pub fn discrepancy(fit: &FpFit, t_obs: &FpStats, t_sim: &FpStats) -> Discrepancy {
    let d_m: f64 = t_obs.probs[1..].iter().zip(&t_sim.probs[1..]).map(|(a, b)| (a - b) * (a - b)).sum();
    let d_p: f64 = fit
        .linear
        .iter()
        .zip(t_obs.phi.iter().zip(&t_sim.phi))
        .filter(|(r, _)| r.sd_phi > 0.0)
        .map(|(r, (a, b))| ((a - b) / r.sd_phi).powi(2))
        .sum();
    Discrepancy { d_m, d_p, d_t: (d_m * d_p).ln() }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn allocation_is_exact_for_uniform_prior() {
        let prior = PriorSpec::default();
        assert_eq!(allocate(&ModelId::ALL, &prior, 10_000), vec![2000; 5]);
        assert_eq!(allocate(&ModelId::ALL, &prior, 7).iter().sum::<usize>(), 7);
    }

    fn dummy_fit(sd: f64) -> FpFit {
        FpFit {
            models: vec![ModelId::BrownResnick, ModelId::TCopPe],
            names: vec!["a".into()],
            standardization: Standardization { mean: vec![0.0], sd: vec![1.0], kept: vec![true] },
            logistic: LogisticFit {
                n_classes: 2,
                retained: vec![0],
                coef: vec![vec![0.0, 1.5]],
                loglik: 0.0,
                aic: 0.0,
                full_aic: 0.0,
            },
            linear: vec![ParamRegression {
                model: ModelId::BrownResnick,
                param: 1,
                log_response: false,
                fit: LinearFit { retained: vec![], coef: vec![0.5], aic: 0.0, full_aic: 0.0, rank_deficient: false },
                sd_phi: sd,
            }],
            warnings: vec![],
            design: None,
        }
    }

    #[test]
    fn discrepancy_examples() {
        let fit = dummy_fit(1.0);
        let a = FpStats { probs: vec![0.5, 0.5], phi: vec![1.0] };
        let d = discrepancy(&fit, &a, &a);
        assert_eq!((d.d_m, d.d_p), (0.0, 0.0));
        assert_eq!(d.d_t, f64::NEG_INFINITY);
        let b = FpStats { probs: vec![0.3, 0.7], phi: vec![1.0 + 2.5f64.sqrt()] };
        let d = discrepancy(&fit, &a, &b);
        assert!((d.d_m - 0.04).abs() < 1e-12 && (d.d_p - 2.5).abs() < 1e-12);
        assert!((d.d_t - 0.1f64.ln()).abs() < 1e-10);
        let c = FpStats { probs: vec![-0.5, 1.5], phi: vec![2.0] };
        assert!(discrepancy(&fit, &a, &c).d_t.abs() < 1e-12);
    }

    #[test]
    fn log_odds_linear_in_covariate() {
        let fit = dummy_fit(1.0);
        let lo = |x: f64| {
            let p = fit.project(&[x]).unwrap().probs;
            (p[1] / p[0]).ln()
        };
        assert!((lo(1.0) - lo(0.0) - 1.5).abs() < 1e-12);
        assert!((lo(-2.0) - lo(0.0) + 3.0).abs() < 1e-12);
        assert!(fit.project(&[f64::NAN]).is_err());
    }

    #[test]
    fn standardization_drops_constant_and_nonfinite() {
        let names: Vec<String> = ["a", "b", "c"].iter().map(|s| s.to_string()).collect();
        let data = [vec![1.0, 5.0, 1.0], vec![2.0, 5.0, f64::NAN], vec![4.0, 5.0, 0.0]];
        let rows: Vec<&[f64]> = data.iter().map(|r| r.as_slice()).collect();
        let (s, w) = Standardization::fit(&names, &rows);
        assert_eq!(s.kept, vec![true, false, false]);
        assert_eq!(w.len(), 2);
        let z: Vec<f64> = rows.iter().map(|r| s.apply(r, &names).unwrap()[0]).collect();
        let (m, sd) = mean_sd_sample(&z);
        assert!(m.abs() < 1e-12 && (sd - 1.0).abs() < 1e-12);
    }
}
