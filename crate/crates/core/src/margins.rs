//! Per-site GEV fitting, transformation to unit Fréchet margins and
//! Kolmogorov–Smirnov checks on the Gumbel scale.

use crate::error::{Error, Result};
use crate::numerics::{kolmogorov_sf, minimize_bounded, OptimOptions};
use serde::{Deserialize, Serialize};

/// Shapes below this magnitude use the Gumbel limit.
pub const GUMBEL_THRESHOLD: f64 = 1e-6;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GevParams {
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ScaleTag {
    RawGev,
    UnitFrechet,
}

/// n replicates × H sites.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataMatrix {
    /// Row k holds replicate k across all sites.
    pub values: Vec<Vec<f64>>,
    pub scale: ScaleTag,
    pub site_ids: Vec<String>,
}

impl DataMatrix {
    pub fn new(values: Vec<Vec<f64>>, scale: ScaleTag, site_ids: Vec<String>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::invalid("data matrix has no replicates"));
        }
        let h = site_ids.len();
        for (k, row) in values.iter().enumerate() {
            if row.len() != h {
                return Err(Error::invalid(format!("replicate {k} has {} values, expected {h}", row.len())));
            }
            for (j, &v) in row.iter().enumerate() {
                if !v.is_finite() {
                    return Err(Error::invalid(format!("non-finite value at replicate {k}, site '{}'", site_ids[j])));
                }
                if scale == ScaleTag::UnitFrechet && v <= 0.0 {
                    return Err(Error::invalid(format!(
                        "unit Fréchet value {v} not positive at replicate {k}, site '{}'",
                        site_ids[j]
                    )));
                }
            }
        }
        Ok(Self { values, scale, site_ids })
    }

    pub fn n_reps(&self) -> usize {
        self.values.len()
    }

    pub fn n_sites(&self) -> usize {
        self.site_ids.len()
    }

    pub fn column(&self, j: usize) -> Vec<f64> {
        self.values.iter().map(|r| r[j]).collect()
    }

    /// Site-major copy: `out[j][k]` is replicate k at site j.
    pub fn columns(&self) -> Vec<Vec<f64>> {
        (0..self.n_sites()).map(|j| self.column(j)).collect()
    }
}

#[inline]
fn gumbel_branch(xi: f64) -> bool {
    xi.abs() < GUMBEL_THRESHOLD
}

/// GEV log-likelihood; −∞ when an observation violates the support.
pub fn gev_loglik(p: &GevParams, data: &[f64]) -> f64 {
    if !(p.sigma > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = data.len() as f64;
    let mut ll = -n * p.sigma.ln();
    if gumbel_branch(p.xi) {
        for &z in data {
            let y = (z - p.mu) / p.sigma;
            ll -= y + (-y).exp();
        }
    } else {
        for &z in data {
            let t = 1.0 + p.xi * (z - p.mu) / p.sigma;
            if !(t > 0.0) {
                return f64::NEG_INFINITY;
            }
            let lt = t.ln();
            ll -= (1.0 + 1.0 / p.xi) * lt + (-lt / p.xi).exp();
        }
    }
    ll
}

/// Options for [`gev_fit_mle`].
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct GevFitOptions {
    pub min_n: usize,
    pub xi_bounds: (f64, f64),
    pub restarts: usize,
}

impl Default for GevFitOptions {
    fn default() -> Self {
        Self { min_n: 5, xi_bounds: (-0.5, 1.0), restarts: 4 }
    }
}

pub fn gev_fit_mle(column: &[f64]) -> Result<GevParams> {
    gev_fit_mle_with(column, &GevFitOptions::default())
}

pub fn gev_fit_mle_with(column: &[f64], opts: &GevFitOptions) -> Result<GevParams> {
    let n = column.len();
    if n < opts.min_n {
        return Err(Error::invalid(format!("GEV fit needs at least {} values, got {n}", opts.min_n)));
    }
    if column.iter().any(|v| !v.is_finite()) {
        return Err(Error::invalid("GEV fit input contains non-finite values"));
    }
    let mean = column.iter().sum::<f64>() / n as f64;
    let sd = (column.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n as f64 - 1.0)).sqrt();
    let range = column.iter().cloned().fold(f64::NEG_INFINITY, f64::max) - column.iter().cloned().fold(f64::INFINITY, f64::min);
    if !(sd > 0.0) || range <= 1e-12 * mean.abs().max(1.0) {
        return Err(Error::Convergence("GEV fit failed: constant column (scale degenerates)".into()));
    }
    let sigma0 = 6f64.sqrt() * sd / std::f64::consts::PI;
    let mu0 = mean - 0.577_215_664_901_532_9 * sigma0;
    let lower = [mu0 - 20.0 * sd, sigma0.ln() - 10.0, opts.xi_bounds.0];
    let upper = [mu0 + 20.0 * sd, sigma0.ln() + 5.0, opts.xi_bounds.1];
    let objective = |x: &[f64]| {
        let p = GevParams { mu: x[0], sigma: x[1].exp(), xi: x[2] };
        -gev_loglik(&p, column)
    };
    let mut starts = vec![[mu0, sigma0.ln(), 0.1], [mu0, sigma0.ln(), 0.0]];
    // deterministic jitter around the moment start
    let jit: [(f64, f64, f64); 4] = [(0.3, 0.2, -0.2), (-0.3, -0.2, 0.3), (0.5, 0.4, 0.05), (-0.2, 0.1, -0.35)];
    for &(a, b, c) in jit.iter().take(opts.restarts) {
        starts.push([mu0 + a * sigma0, sigma0.ln() + b, (0.1f64 + c).clamp(opts.xi_bounds.0, opts.xi_bounds.1)]);
    }
    let nm = OptimOptions { max_iter: 4000, f_tol: 1e-12, x_tol: 1e-9, ..Default::default() };
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for s in &starts {
        if !objective(s).is_finite() {
            continue;
        }
        let r = minimize_bounded(&objective, None, &lower, &upper, s, &nm);
        if r.min.is_finite() && best.as_ref().is_none_or(|b| r.min < b.1) {
            best = Some((r.argmin, r.min, r.converged));
        }
    }
    match best {
        Some((x, _, true)) => Ok(GevParams { mu: x[0], sigma: x[1].exp(), xi: x[2] }),
        Some((x, f, false)) => Err(Error::Convergence(format!(
            "GEV fit did not converge; best attempt mu={}, sigma={}, xi={}, nll={f}",
            x[0],
            x[1].exp(),
            x[2]
        ))),
        None => Err(Error::Convergence("GEV fit: no feasible starting value".into())),
    }
}

/// Maps one GEV value to the unit Fréchet scale.
pub fn gev_to_frechet(z: f64, p: &GevParams) -> Option<f64> {
    let y = (z - p.mu) / p.sigma;
    if gumbel_branch(p.xi) {
        return Some(y.exp());
    }
    let t = 1.0 + p.xi * y;
    (t > 0.0).then(|| t.powf(1.0 / p.xi))
}

/// Inverse of [`gev_to_frechet`].
pub fn frechet_to_gev(z: f64, p: &GevParams) -> f64 {
    if gumbel_branch(p.xi) {
        p.mu + p.sigma * z.ln()
    } else {
        p.mu + p.sigma * (z.powf(p.xi) - 1.0) / p.xi
    }
}

pub fn to_unit_frechet(data: &DataMatrix, fits: &[GevParams]) -> Result<DataMatrix> {
    if data.scale != ScaleTag::RawGev {
        return Err(Error::invalid("data already on the unit Fréchet scale"));
    }
    if fits.len() != data.n_sites() {
        return Err(Error::invalid(format!("{} GEV fits for {} sites", fits.len(), data.n_sites())));
    }
    let mut values = data.values.clone();
    for (k, row) in values.iter_mut().enumerate() {
        for (j, v) in row.iter_mut().enumerate() {
            match gev_to_frechet(*v, &fits[j]) {
                Some(z) if z > 0.0 && z.is_finite() => *v = z,
                _ => {
                    return Err(Error::domain(format!(
                        "value {} at site '{}', replicate {k} outside the fitted GEV support",
                        v, data.site_ids[j]
                    )))
                }
            }
        }
    }
    DataMatrix::new(values, ScaleTag::UnitFrechet, data.site_ids.clone())
}

/// One-sample KS test of ln Z against the standard Gumbel distribution.
/// Returns (D, p) with the p-value from the Kolmogorov limit law using the
/// small-sample scaling (√n + 0.12 + 0.11/√n)·D.
pub fn gumbel_ks(column: &[f64]) -> (f64, f64) {
    let mut x: Vec<f64> = column.iter().map(|z| z.ln()).collect();
    x.sort_by(f64::total_cmp);
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &xi) in x.iter().enumerate() {
        let f = (-(-xi).exp()).exp();
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let sn = n.sqrt();
    (d, kolmogorov_sf((sn + 0.12 + 0.11 / sn) * d))
}

/// Per-site margin fit summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GevSiteReport {
    pub id: String,
    pub mu: f64,
    pub sigma: f64,
    pub xi: f64,
    pub ks_d: f64,
    pub ks_p: f64,
}

/// Fits every site, transforms to unit Fréchet and runs the KS checks.
pub fn fit_margins(data: &DataMatrix) -> Result<(DataMatrix, Vec<GevSiteReport>)> {
    use rayon::prelude::*;
    let fits: Vec<Result<GevParams>> = (0..data.n_sites()).into_par_iter().map(|j| gev_fit_mle(&data.column(j))).collect();
    let mut failed = Vec::new();
    let mut ok = Vec::new();
    for (j, f) in fits.into_iter().enumerate() {
        match f {
            Ok(p) => ok.push(p),
            Err(e) => failed.push(format!("{}: {e}", data.site_ids[j])),
        }
    }
    if !failed.is_empty() {
        return Err(Error::Convergence(format!("GEV fit failed for sites {}", failed.join("; "))));
    }
    let out = to_unit_frechet(data, &ok)?;
    let reports = ok
        .iter()
        .enumerate()
        .map(|(j, p)| {
            let (d, pv) = gumbel_ks(&out.column(j));
            GevSiteReport { id: data.site_ids[j].clone(), mu: p.mu, sigma: p.sigma, xi: p.xi, ks_d: d, ks_p: pv }
        })
        .collect();
    Ok((out, reports))
}
