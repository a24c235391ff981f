//! End-to-end analysis: score context, training set, regression summaries
//! and the SMC ABC sampler, driven by one configuration.

use crate::clikelihood::{fit_score_context, McleFit, McleOptions};
use crate::error::{Error, Result};
use crate::fpstep::{generate_training_set, FpFit, FpStats, TrainingSet};
use crate::margins::{DataMatrix, ScaleTag};
use crate::models::{ModelId, PriorSpec};
use crate::numerics::SplitRng;
use crate::smcabc::{posterior_model_probs, rejection_init, smc_run, AbcProblem, RejectionInit, SmcConfig, SmcOutput};
use crate::spatial::{make_pair_bins, make_triplet_clusters, SiteSet};
use crate::summaries::SummaryDesign;
use serde::{Deserialize, Serialize};
use std::path::PathBuf;

pub const SCHEMA_VERSION: u32 = 1;

/// Child stream keys of the global seed.
pub mod streams {
    pub const MCLE: u64 = 1;
    pub const TRAINING: u64 = 2;
    pub const HOLDOUT: u64 = 3;
    pub const SMC: u64 = 4;
    pub const PREDICTIVE: u64 = 5;
    pub const SIMULATE: u64 = 6;
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SummaryConfig {
    pub n_bins: usize,
    /// Explicit bin edges; overrides `n_bins`.
    pub bin_edges: Option<Vec<f64>>,
    pub n_clusters: usize,
    pub cluster_seed: u64,
}

impl Default for SummaryConfig {
    fn default() -> Self {
        Self { n_bins: 4, bin_edges: None, n_clusters: 10, cluster_seed: 1 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FpConfig {
    /// Training-set size across all models.
    pub m: usize,
    /// Size of an optional held-out set; zero disables it.
    pub holdout_m: usize,
}

impl Default for FpConfig {
    fn default() -> Self {
        Self { m: 10_000, holdout_m: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AnalysisConfig {
    pub schema_version: u32,
    pub sites: Option<PathBuf>,
    pub maxima: Option<PathBuf>,
    pub maxima_scale: ScaleTag,
    pub models: Vec<ModelId>,
    pub prior: PriorSpec,
    pub summary: SummaryConfig,
    pub mcle: McleOptions,
    pub fp: FpConfig,
    pub smc: SmcConfig,
    pub predictive_draws: usize,
    pub seed: u64,
}

impl Default for AnalysisConfig {
    fn default() -> Self {
        Self {
            schema_version: SCHEMA_VERSION,
            sites: None,
            maxima: None,
            maxima_scale: ScaleTag::UnitFrechet,
            models: ModelId::ALL.to_vec(),
            prior: PriorSpec::default(),
            summary: SummaryConfig::default(),
            mcle: McleOptions::default(),
            fp: FpConfig::default(),
            smc: SmcConfig::default(),
            predictive_draws: 10_000,
            seed: 1,
        }
    }
}

impl AnalysisConfig {
    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::invalid(format!("unsupported config schema version {}", self.schema_version)));
        }
        if self.models.is_empty() {
            return Err(Error::invalid("at least one model is required"));
        }
        let mut seen = self.models.clone();
        seen.sort();
        seen.dedup();
        if seen.len() != self.models.len() {
            return Err(Error::invalid("duplicate model in the model set"));
        }
        self.prior.validate()?;
        self.smc.validate()?;
        if self.fp.m < 2 {
            return Err(Error::invalid("training set size must be at least 2"));
        }
        Ok(())
    }

    pub fn rng(&self) -> SplitRng {
        SplitRng::new(self.seed)
    }
}

/// Pair bins, triplet clusters and the MCLE-based score context for the
/// observed data.
pub fn build_design(
    sites: &SiteSet,
    data: &DataMatrix,
    cfg: &AnalysisConfig,
    rng: &SplitRng,
) -> Result<(SummaryDesign, Vec<McleFit>)> {
    let bins = make_pair_bins(sites, cfg.summary.n_bins, cfg.summary.bin_edges.as_deref())?;
    let clusters = make_triplet_clusters(sites, cfg.summary.n_clusters, cfg.summary.cluster_seed)?;
    let (score_ctx, fits) = fit_score_context(&cfg.models, data, sites, &cfg.prior, &cfg.mcle, &rng.child(streams::MCLE))
        .map_err(|e| Error::NumericalAbort(format!("composite likelihood fit failed: {e}")))?;
    Ok((SummaryDesign { bins, clusters, score_ctx }, fits))
}

/// Generates the training set and fits both regressions.
pub fn train(
    sites: &SiteSet,
    n_reps: usize,
    design: &SummaryDesign,
    cfg: &AnalysisConfig,
    rng: &SplitRng,
) -> Result<(FpFit, TrainingSet)> {
    let ts = generate_training_set(&cfg.models, &cfg.prior, sites, n_reps, cfg.fp.m, design, &rng.child(streams::TRAINING))?;
    let fit = FpFit::fit(&ts)
        .map_err(|e| Error::NumericalAbort(format!("regression summaries failed: {e}")))?
        .with_design(design.clone());
    Ok((fit, ts))
}

/// Held-out prior-predictive records for the overfitting check.
pub fn holdout_set(
    sites: &SiteSet,
    n_reps: usize,
    design: &SummaryDesign,
    cfg: &AnalysisConfig,
    rng: &SplitRng,
) -> Result<TrainingSet> {
    generate_training_set(&cfg.models, &cfg.prior, sites, n_reps, cfg.fp.holdout_m, design, &rng.child(streams::HOLDOUT))
}

/// Projected statistic of the observed data.
pub fn observed_stats(fit: &FpFit, design: &SummaryDesign, sites: &SiteSet, data: &DataMatrix) -> Result<FpStats> {
    let s = design.summarize(data, sites)?;
    let raw = s.require_valid().map_err(|e| Error::NumericalAbort(format!("observed summaries: {e}")))?;
    fit.project(raw).map_err(|e| Error::NumericalAbort(format!("standardisation of the observed summaries failed: {e}")))
}

pub fn run_abc(
    fit: &FpFit,
    design: &SummaryDesign,
    sites: &SiteSet,
    data: &DataMatrix,
    cfg: &AnalysisConfig,
    rng: &SplitRng,
) -> Result<(RejectionInit, SmcOutput)> {
    let obs = observed_stats(fit, design, sites, data)?;
    let problem = AbcProblem { fit, design, sites, n_reps: data.n_reps(), prior: &cfg.prior, obs };
    let smc_rng = rng.child(streams::SMC);
    let init = rejection_init(&problem, &cfg.smc, &smc_rng.child(0))?;
    let out = smc_run(&init, &problem, &cfg.smc, &smc_rng.child(1))?;
    Ok((init, out))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnalysisOutput {
    pub mcle: Vec<McleFit>,
    pub fit: FpFit,
    pub training_matrix: Vec<Vec<f64>>,
    pub init_eps: f64,
    pub smc: SmcOutput,
    pub model_probs: Vec<f64>,
}

/// Runs the whole pipeline on observed unit-Fréchet data.
pub fn run_analysis(sites: &SiteSet, data: &DataMatrix, cfg: &AnalysisConfig) -> Result<AnalysisOutput> {
    cfg.validate()?;
    if data.scale != ScaleTag::UnitFrechet {
        return Err(Error::invalid("analysis needs data on the unit Fréchet scale"));
    }
    if data.site_ids != sites.ids {
        return Err(Error::invalid("data columns and site ids differ"));
    }
    let rng = cfg.rng();
    let (design, mcle) = build_design(sites, data, cfg, &rng)?;
    let (fit, ts) = train(sites, data.n_reps(), &design, cfg, &rng)?;
    let training_matrix = fit.average_probability_matrix(&ts.records)?;
    let (init, smc) = run_abc(&fit, &design, sites, data, cfg, &rng)?;
    let model_probs = posterior_model_probs(&smc.particles, &fit.models);
    Ok(AnalysisOutput { mcle, fit, training_matrix, init_eps: init.eps, smc, model_probs })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_defaults_round_trip() {
        let cfg = AnalysisConfig::default();
        cfg.validate().unwrap();
        let json = serde_json::to_string(&cfg).unwrap();
        assert_eq!(serde_json::from_str::<AnalysisConfig>(&json).unwrap(), cfg);
        let partial: AnalysisConfig = serde_json::from_str(r#"{"models": ["br", "tcop_pe"], "seed": 9}"#).unwrap();
        assert_eq!(partial.models, vec![ModelId::BrownResnick, ModelId::TCopPe]);
        assert_eq!(partial.smc, SmcConfig::default());
        let dup = AnalysisConfig { models: vec![ModelId::BrownResnick; 2], ..Default::default() };
        assert!(dup.validate().is_err());
    }
}
