//! Pairwise composite log-likelihood, composite score and score summaries.

use super::bivariate::{
    br_terms, copula_const, copula_eta, extt_terms, ln_frechet_density, tcop_loglik, StudentCtx,
};
use super::geometry::{correlation_dual, lag, seed, I_KAPPA, I_NU};
use crate::error::{Error, Result};
use crate::margins::{DataMatrix, ScaleTag};
use crate::models::{ModelId, ParamVector};
use crate::numerics::dual::Dual;
use crate::spatial::{site_pairs, SiteSet};
use serde::{Deserialize, Serialize};

/// Parameter checks that leave α unrestricted, for use inside optimisers.
pub(crate) fn check_numeric(model: ModelId, p: &ParamVector) -> Result<()> {
    let ok = p.lambda > 0.0
        && p.lambda.is_finite()
        && p.kappa > 0.0
        && p.kappa <= 2.0
        && p.alpha.is_finite()
        && p.ratio > 0.0
        && p.ratio.is_finite()
        && match (model.has_nu(), p.nu) {
            (true, Some(nu)) => nu > 0.0 && nu.is_finite(),
            (false, None) => true,
            _ => false,
        };
    if ok {
        Ok(())
    } else {
        Err(Error::domain(format!("parameters {p:?} are invalid for {model}")))
    }
}

fn check_data(data: &DataMatrix, sites: &SiteSet, weights: Option<&[f64]>) -> Result<()> {
    if data.scale != ScaleTag::UnitFrechet {
        return Err(Error::invalid("composite likelihood needs unit Fréchet data"));
    }
    if data.n_sites() != sites.len() {
        return Err(Error::invalid(format!(
            "data has {} sites but the site set has {}",
            data.n_sites(),
            sites.len()
        )));
    }
    if let Some(w) = weights {
        let np = sites.len() * (sites.len() - 1) / 2;
        if w.len() != np {
            return Err(Error::invalid(format!("expected {np} pair weights, got {}", w.len())));
        }
    }
    Ok(())
}

/// Composite log-likelihood per replicate, as duals.
pub(crate) fn per_replicate<const N: usize>(
    model: ModelId,
    params: &ParamVector,
    data: &DataMatrix,
    sites: &SiteSet,
    weights: Option<&[f64]>,
) -> Result<Vec<Dual<N>>> {
    check_numeric(model, params)?;
    check_data(data, sites, weights)?;
    let pairs = site_pairs(sites.len());
    let kappa: Dual<N> = seed(params.kappa, I_KAPPA);
    let lags: Vec<Dual<N>> = pairs
        .iter()
        .map(|&(i, j)| {
            let (a, b) = (sites.coords[i], sites.coords[j]);
            lag([a[0] - b[0], a[1] - b[1]], params)
        })
        .collect();
    let weight = |k: usize| weights.map_or(1.0, |w| w[k]);
    let mut out = vec![Dual::<N>::constant(0.0); data.n_reps()];
    match model {
        ModelId::BrownResnick => {
            for (row, acc) in data.values.iter().zip(out.iter_mut()) {
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    *acc = *acc + br_terms(lags[k], kappa, row[i], row[j]).loglik() * weight(k);
                }
            }
        }
        ModelId::ExtTWm | ModelId::ExtTPe => {
            let family = model.corr_family().unwrap();
            let nu_v = params.nu_or_nan();
            let nu: Dual<N> = seed(nu_v, I_NU);
            let ctx = StudentCtx::new(nu_v, N > 0);
            let rhos: Vec<Dual<N>> = lags.iter().map(|&h| correlation_dual(family, h, kappa)).collect();
            for (row, acc) in data.values.iter().zip(out.iter_mut()) {
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    *acc = *acc + extt_terms(rhos[k], nu, row[i], row[j], &ctx).loglik() * weight(k);
                }
            }
        }
        ModelId::TCopWm | ModelId::TCopPe => {
            let family = model.corr_family().unwrap();
            let nu_v = params.nu_or_nan();
            let nu: Dual<N> = seed(nu_v, I_NU);
            let konst = copula_const(nu);
            let rhos: Vec<Dual<N>> = lags.iter().map(|&h| correlation_dual(family, h, kappa)).collect();
            for (row, acc) in data.values.iter().zip(out.iter_mut()) {
                let eta: Vec<Dual<N>> = row.iter().map(|&z| copula_eta(z, nu_v)).collect();
                let lg: Vec<f64> = row.iter().map(|&z| ln_frechet_density(z)).collect();
                for (k, &(i, j)) in pairs.iter().enumerate() {
                    let l = tcop_loglik(rhos[k], nu, konst, eta[i], eta[j], lg[i] + lg[j]);
                    *acc = *acc + l * weight(k);
                }
            }
        }
    }
    Ok(out)
}

/// Σ_k Σ_{i<j} w_ij ℓ_ij(θ; Z_k(x_i), Z_k(x_j)).
pub fn pairwise_loglik(
    model: ModelId,
    params: &ParamVector,
    data: &DataMatrix,
    sites: &SiteSet,
    weights: Option<&[f64]>,
) -> Result<f64> {
    let v: f64 = per_replicate::<0>(model, params, data, sites, weights)?.iter().map(|d| d.v).sum();
    Ok(if v.is_nan() { f64::NEG_INFINITY } else { v })
}

/// Pairwise log-likelihood and its gradient in (λ, κ, α, r[, ν]).
pub fn pairwise_loglik_and_score(
    model: ModelId,
    params: &ParamVector,
    data: &DataMatrix,
    sites: &SiteSet,
    weights: Option<&[f64]>,
) -> Result<(f64, Vec<f64>)> {
    let reps = per_replicate::<5>(model, params, data, sites, weights)?;
    let total = reps.iter().fold(Dual::<5>::constant(0.0), |a, b| a + *b);
    Ok((total.v, total.d[..model.n_params()].to_vec()))
}

/// Gradient of [`pairwise_loglik`].
pub fn composite_score(
    model: ModelId,
    params: &ParamVector,
    data: &DataMatrix,
    sites: &SiteSet,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    Ok(pairwise_loglik_and_score(model, params, data, sites, weights)?.1)
}

/// Per-replicate score contributions (rows are replicates).
pub fn score_contributions(
    model: ModelId,
    params: &ParamVector,
    data: &DataMatrix,
    sites: &SiteSet,
    weights: Option<&[f64]>,
) -> Result<Vec<Vec<f64>>> {
    Ok(per_replicate::<5>(model, params, data, sites, weights)?
        .iter()
        .map(|d| d.d[..model.n_params()].to_vec())
        .collect())
}

/// Composite-likelihood estimates fitted to the observed data, at which the
/// scores of other datasets are evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreContext {
    pub fits: Vec<(ModelId, ParamVector)>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
}

impl ScoreContext {
    pub fn new(fits: Vec<(ModelId, ParamVector)>) -> Self {
        Self { fits, weights: None }
    }

    /// A context without score components.
    pub fn empty() -> Self {
        Self::new(Vec::new())
    }

    pub fn len(&self) -> usize {
        self.fits.iter().map(|(m, _)| m.n_params()).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn component_names(&self) -> Vec<String> {
        self.fits
            .iter()
            .flat_map(|(m, _)| m.param_names().iter().map(move |p| format!("score_{}_{p}", m.name())))
            .collect()
    }
}

/// Composite scores of `data` at each fitted parameter vector, concatenated
/// in context order. Numerical failures show up as NaN components.
pub fn score_summary(data: &DataMatrix, sites: &SiteSet, ctx: &ScoreContext) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(ctx.len());
    for (model, params) in &ctx.fits {
        let s = composite_score(*model, params, data, sites, ctx.weights.as_deref())?;
        out.extend(s.into_iter().map(|v| if v.is_finite() { v } else { f64::NAN }));
    }
    Ok(out)
}
