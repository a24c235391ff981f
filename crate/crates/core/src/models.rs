//! Model catalogue: identifiers, parameter vectors, priors, correlation and
//! variogram functions and theoretical extremal coefficients.

use crate::error::{Error, Result};
use crate::numerics::special::{ln_gamma, norm_cdf};
use crate::numerics::student;
use crate::numerics::{ln_bessel_k, SplitRng};
use crate::spatial::AnisotropyParams;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::{FRAC_PI_2, LN_2, PI};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(into = "String", try_from = "String")]
pub enum ModelId {
    ExtTWm,
    ExtTPe,
    BrownResnick,
    TCopWm,
    TCopPe,
}

/// Correlation function family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum CorrFamily {
    /// Whittle–Matérn
    Wm,
    /// Powered exponential
    Pe,
}

pub const PARAM_NAMES: [&str; 5] = ["lambda", "kappa", "alpha", "ratio", "nu"];

impl ModelId {
    pub const ALL: [ModelId; 5] = [
        ModelId::ExtTWm,
        ModelId::ExtTPe,
        ModelId::BrownResnick,
        ModelId::TCopWm,
        ModelId::TCopPe,
    ];

    pub fn code(self) -> usize {
        self as usize
    }

    pub fn from_code(code: usize) -> Result<Self> {
        Self::ALL
            .get(code)
            .copied()
            .ok_or_else(|| Error::invalid(format!("unknown model code {code}")))
    }

    pub fn name(self) -> &'static str {
        match self {
            ModelId::ExtTWm => "extt_wm",
            ModelId::ExtTPe => "extt_pe",
            ModelId::BrownResnick => "br",
            ModelId::TCopWm => "tcop_wm",
            ModelId::TCopPe => "tcop_pe",
        }
    }

    pub fn is_maxstable(self) -> bool {
        matches!(self, ModelId::ExtTWm | ModelId::ExtTPe | ModelId::BrownResnick)
    }

    pub fn has_nu(self) -> bool {
        self != ModelId::BrownResnick
    }

    pub fn n_params(self) -> usize {
        if self.has_nu() {
            5
        } else {
            4
        }
    }

    pub fn param_names(self) -> &'static [&'static str] {
        &PARAM_NAMES[..self.n_params()]
    }

    pub fn corr_family(self) -> Option<CorrFamily> {
        match self {
            ModelId::ExtTWm | ModelId::TCopWm => Some(CorrFamily::Wm),
            ModelId::ExtTPe | ModelId::TCopPe => Some(CorrFamily::Pe),
            ModelId::BrownResnick => None,
        }
    }
}

impl fmt::Display for ModelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl From<ModelId> for String {
    fn from(m: ModelId) -> String {
        m.name().to_string()
    }
}

impl TryFrom<String> for ModelId {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl FromStr for ModelId {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        let k = s.to_ascii_lowercase().replace(['-', ' '], "_");
        Ok(match k.as_str() {
            "extt_wm" | "ext_t_wm" | "extremal_t_wm" => ModelId::ExtTWm,
            "extt_pe" | "ext_t_pe" | "extremal_t_pe" => ModelId::ExtTPe,
            "br" | "brown_resnick" | "brownresnick" => ModelId::BrownResnick,
            "tcop_wm" | "t_copula_wm" => ModelId::TCopWm,
            "tcop_pe" | "t_copula_pe" => ModelId::TCopPe,
            _ => return Err(Error::invalid(format!("unknown model '{s}'"))),
        })
    }
}

/// Range λ, smoothness κ, rotation α, axis ratio r and degrees of freedom ν.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamVector {
    pub lambda: f64,
    pub kappa: f64,
    pub alpha: f64,
    pub ratio: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub nu: Option<f64>,
}

impl ParamVector {
    pub fn new(model: ModelId, lambda: f64, kappa: f64, alpha: f64, ratio: f64, nu: Option<f64>) -> Result<Self> {
        let p = Self { lambda, kappa, alpha, ratio, nu };
        p.validate(model)?;
        Ok(p)
    }

    /// Parameters in the fixed order (λ, κ, α, r[, ν]).
    pub fn to_vec(&self) -> Vec<f64> {
        let mut v = vec![self.lambda, self.kappa, self.alpha, self.ratio];
        if let Some(nu) = self.nu {
            v.push(nu);
        }
        v
    }

    pub fn from_slice(model: ModelId, v: &[f64]) -> Result<Self> {
        if v.len() != model.n_params() {
            return Err(Error::invalid(format!(
                "model {model} takes {} parameters, got {}",
                model.n_params(),
                v.len()
            )));
        }
        Ok(Self {
            lambda: v[0],
            kappa: v[1],
            alpha: v[2],
            ratio: v[3],
            nu: if model.has_nu() { Some(v[4]) } else { None },
        })
    }

    pub fn nu_or_nan(&self) -> f64 {
        self.nu.unwrap_or(f64::NAN)
    }

    pub fn aniso(&self) -> AnisotropyParams {
        AnisotropyParams { alpha: self.alpha, ratio: self.ratio }
    }

    pub fn validate(&self, model: ModelId) -> Result<()> {
        let bad = |name: &str, v: f64| Err(Error::domain(format!("{name} = {v} outside its range for {model}")));
        if !(self.lambda > 0.0 && self.lambda.is_finite()) {
            return bad("lambda", self.lambda);
        }
        if !(self.kappa > 0.0 && self.kappa <= 2.0) {
            return bad("kappa", self.kappa);
        }
        if !(self.alpha >= 0.0 && self.alpha < FRAC_PI_2) {
            return bad("alpha", self.alpha);
        }
        if !(self.ratio > 0.0 && self.ratio.is_finite()) {
            return bad("ratio", self.ratio);
        }
        match (model.has_nu(), self.nu) {
            (true, Some(nu)) if nu > 0.0 && nu.is_finite() => Ok(()),
            (true, Some(nu)) => bad("nu", nu),
            (true, None) => Err(Error::domain(format!("{model} requires nu"))),
            (false, Some(_)) => Err(Error::domain(format!("{model} takes no nu"))),
            (false, None) => Ok(()),
        }
    }

    /// Working-scale coordinates (ln λ, κ, α, ln r[, ln ν]).
    pub fn to_working(&self) -> Vec<f64> {
        let mut u = vec![self.lambda.ln(), self.kappa, self.alpha, self.ratio.ln()];
        if let Some(nu) = self.nu {
            u.push(nu.ln());
        }
        u
    }

    pub fn from_working(model: ModelId, u: &[f64]) -> Self {
        Self {
            lambda: u[0].exp(),
            kappa: u[1],
            alpha: u[2],
            ratio: u[3].exp(),
            nu: if model.has_nu() { Some(u[4].exp()) } else { None },
        }
    }
}

/// Whether the (mean, spread) of a normal prior gives a variance or a
/// standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SpreadReading {
    #[default]
    Variance,
    StdDev,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormalPrior {
    pub mean: f64,
    pub spread: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct UniformPrior {
    pub lo: f64,
    pub hi: f64,
}

/// Independent priors on the working-scale parameters plus the model prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PriorSpec {
    pub log_lambda: NormalPrior,
    pub kappa: UniformPrior,
    pub alpha: UniformPrior,
    pub log_ratio: NormalPrior,
    pub log_nu: NormalPrior,
    pub log_nu_truncation: (f64, f64),
    #[serde(default)]
    pub spread_reading: SpreadReading,
    /// Probability per model in [`ModelId::ALL`] order.
    pub model_prior: Vec<f64>,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            log_lambda: NormalPrior { mean: 1.0, spread: 4.0 },
            kappa: UniformPrior { lo: 0.0, hi: 2.0 },
            alpha: UniformPrior { lo: 0.0, hi: FRAC_PI_2 },
            log_ratio: NormalPrior { mean: 0.0, spread: 8.0 },
            log_nu: NormalPrior { mean: 0.0, spread: 1.0 },
            log_nu_truncation: (-2.5, 2.5),
            spread_reading: SpreadReading::Variance,
            model_prior: vec![0.2; 5],
        }
    }
}

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

impl PriorSpec {
    pub fn sd(&self, p: &NormalPrior) -> f64 {
        match self.spread_reading {
            SpreadReading::Variance => p.spread.sqrt(),
            SpreadReading::StdDev => p.spread,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.model_prior.iter().sum();
        if self.model_prior.len() != 5 || self.model_prior.iter().any(|p| !(*p >= 0.0)) || (total - 1.0).abs() > 1e-9 {
            return Err(Error::invalid("model prior must hold five non-negative probabilities summing to 1"));
        }
        for p in [self.log_lambda, self.log_ratio, self.log_nu] {
            if !(p.spread > 0.0) || !p.mean.is_finite() {
                return Err(Error::invalid("normal prior spreads must be positive"));
            }
        }
        if !(self.kappa.lo >= 0.0 && self.kappa.hi <= 2.0 && self.kappa.lo < self.kappa.hi) {
            return Err(Error::invalid("kappa prior must lie within (0, 2]"));
        }
        if !(self.alpha.lo >= 0.0 && self.alpha.hi <= FRAC_PI_2 && self.alpha.lo < self.alpha.hi) {
            return Err(Error::invalid("alpha prior must lie within [0, pi/2)"));
        }
        if !(self.log_nu_truncation.0 < self.log_nu_truncation.1) {
            return Err(Error::invalid("empty truncation interval for log nu"));
        }
        Ok(())
    }

    fn normal_logpdf(&self, p: &NormalPrior, x: f64) -> f64 {
        let sd = self.sd(p);
        let z = (x - p.mean) / sd;
        -0.5 * z * z - sd.ln() - LN_SQRT_2PI
    }

    fn log_nu_mass(&self) -> f64 {
        let sd = self.sd(&self.log_nu);
        let (a, b) = self.log_nu_truncation;
        norm_cdf((b - self.log_nu.mean) / sd) - norm_cdf((a - self.log_nu.mean) / sd)
    }

    /// Prior density on the working scale (ln λ, κ, α, ln r[, ln ν]).
    pub fn working_logpdf(&self, model: ModelId, u: &[f64]) -> f64 {
        if u.len() != model.n_params() || u.iter().any(|v| !v.is_finite()) {
            return f64::NEG_INFINITY;
        }
        let kappa = u[1];
        let alpha = u[2];
        if !(kappa > self.kappa.lo && kappa < self.kappa.hi) || !(alpha >= self.alpha.lo && alpha < self.alpha.hi) {
            return f64::NEG_INFINITY;
        }
        let mut lp = self.normal_logpdf(&self.log_lambda, u[0])
            - (self.kappa.hi - self.kappa.lo).ln()
            - (self.alpha.hi - self.alpha.lo).ln()
            + self.normal_logpdf(&self.log_ratio, u[3]);
        if model.has_nu() {
            let (a, b) = self.log_nu_truncation;
            if !(u[4] >= a && u[4] <= b) {
                return f64::NEG_INFINITY;
            }
            lp += self.normal_logpdf(&self.log_nu, u[4]) - self.log_nu_mass().ln();
        }
        lp
    }

    /// Variances of the working-scale prior coordinates.
    pub fn working_variances(&self, model: ModelId) -> Vec<f64> {
        let mut v = vec![
            self.sd(&self.log_lambda).powi(2),
            (self.kappa.hi - self.kappa.lo).powi(2) / 12.0,
            (self.alpha.hi - self.alpha.lo).powi(2) / 12.0,
            self.sd(&self.log_ratio).powi(2),
        ];
        if model.has_nu() {
            let (a, b) = self.log_nu_truncation;
            v.push(self.sd(&self.log_nu).powi(2).min((b - a).powi(2) / 12.0));
        }
        v
    }
}

/// Draws a parameter vector from the prior of `model`.
pub fn prior_sample<R: Rng + ?Sized>(model: ModelId, prior: &PriorSpec, rng: &mut R) -> ParamVector {
    let normal = |p: &NormalPrior, rng: &mut R| p.mean + prior.sd(p) * rng.sample::<f64, _>(StandardNormal);
    let uniform_open = |p: &UniformPrior, rng: &mut R| loop {
        let x = p.lo + (p.hi - p.lo) * rng.random::<f64>();
        if x > p.lo && x < p.hi {
            break x;
        }
    };
    let lambda = normal(&prior.log_lambda, rng).exp();
    let kappa = uniform_open(&prior.kappa, rng);
    let alpha = prior.alpha.lo + (prior.alpha.hi - prior.alpha.lo) * rng.random::<f64>();
    let ratio = normal(&prior.log_ratio, rng).exp();
    let nu = if model.has_nu() {
        let (a, b) = prior.log_nu_truncation;
        Some(loop {
            let x = normal(&prior.log_nu, rng);
            if x >= a && x <= b {
                break x.exp();
            }
        })
    } else {
        None
    };
    ParamVector { lambda, kappa, alpha, ratio, nu }
}

/// Log prior density on the natural scale, including the Jacobians of the
/// log-transformed coordinates.
pub fn prior_logpdf(model: ModelId, params: &ParamVector, prior: &PriorSpec) -> f64 {
    if params.validate(model).is_err() {
        return f64::NEG_INFINITY;
    }
    let u = params.to_working();
    let mut lp = prior.working_logpdf(model, &u);
    lp -= params.lambda.ln() + params.ratio.ln();
    if let Some(nu) = params.nu {
        lp -= nu.ln();
    }
    lp
}

/// Draws a model index from the model prior.
pub fn sample_model<R: Rng + ?Sized>(prior: &PriorSpec, rng: &mut R) -> ModelId {
    let u: f64 = rng.random();
    let mut acc = 0.0;
    for (k, p) in prior.model_prior.iter().enumerate() {
        acc += p;
        if u < acc {
            return ModelId::ALL[k];
        }
    }
    *ModelId::ALL
        .iter()
        .rev()
        .find(|m| prior.model_prior[m.code()] > 0.0)
        .unwrap_or(&ModelId::BrownResnick)
}

/// Correlation function ρ(h) of the given family.
pub fn correlation(family: CorrFamily, h: f64, lambda: f64, kappa: f64) -> Result<f64> {
    if !(h >= 0.0) || !(lambda > 0.0) || !(kappa > 0.0) {
        return Err(Error::domain(format!("correlation needs h ≥ 0, λ > 0, κ > 0 (h={h}, λ={lambda}, κ={kappa})")));
    }
    let t = h / lambda;
    match family {
        CorrFamily::Pe => {
            if kappa > 2.0 {
                return Err(Error::domain(format!("powered exponential needs κ ≤ 2, got {kappa}")));
            }
            Ok((-t.powf(kappa)).exp())
        }
        CorrFamily::Wm => {
            if t == 0.0 {
                return Ok(1.0);
            }
            if t < 1e-12 {
                return Ok(1.0);
            }
            let lr = (1.0 - kappa) * LN_2 - ln_gamma(kappa) + kappa * t.ln() + ln_bessel_k(kappa, t)?;
            Ok(lr.exp().min(1.0))
        }
    }
}

/// Power variogram γ(h) = (h/λ)^κ.
pub fn variogram_br(h: f64, lambda: f64, kappa: f64) -> Result<f64> {
    if !(h >= 0.0) || !(lambda > 0.0) || !(kappa > 0.0 && kappa <= 2.0) {
        return Err(Error::domain(format!("variogram needs h ≥ 0, λ > 0, κ ∈ (0,2] (h={h}, λ={lambda}, κ={kappa})")));
    }
    Ok((h / lambda).powf(kappa))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExtremalCoefficient {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub warning: Option<String>,
}

pub const MIN_COPULA_MC: usize = 10_000;

/// Theoretical pairwise extremal coefficient at standardised lag `h`
/// (anisotropy applied and divided by λ by the caller).
///
/// Brown–Resnick and extremal-t use closed forms; the t copula is estimated
/// from `mc_size` simulated pairs.
pub fn theoretical_extremal_coef(
    model: ModelId,
    params: &ParamVector,
    h: f64,
    mc_size: usize,
    rng: &mut SplitRng,
) -> Result<ExtremalCoefficient> {
    if !(h >= 0.0) {
        return Err(Error::domain(format!("lag must be non-negative, got {h}")));
    }
    let kappa = params.kappa;
    let value = match model {
        ModelId::BrownResnick => {
            let a = (2.0 * h.powf(kappa)).sqrt();
            2.0 * norm_cdf(a / 2.0)
        }
        ModelId::ExtTWm | ModelId::ExtTPe => {
            let nu = params.nu.ok_or_else(|| Error::domain("extremal-t needs nu"))?;
            let rho = correlation(model.corr_family().unwrap(), h, 1.0, kappa)?;
            let x = ((nu + 1.0) * (1.0 - rho) / (1.0 + rho)).sqrt();
            2.0 * student::cdf_unchecked(x, nu + 1.0)
        }
        ModelId::TCopWm | ModelId::TCopPe => {
            let nu = params.nu.ok_or_else(|| Error::domain("t copula needs nu"))?;
            let rho = correlation(model.corr_family().unwrap(), h, 1.0, kappa)?;
            let warning = (mc_size < MIN_COPULA_MC)
                .then(|| format!("Monte Carlo size {mc_size} below {MIN_COPULA_MC}; estimate is noisy"));
            let value = copula_extremal_coef_mc(rho, nu, mc_size.max(1), rng);
            return Ok(ExtremalCoefficient { value, warning });
        }
    };
    Ok(ExtremalCoefficient { value, warning: None })
}

/// θ̂ = n / Σ 1/max(Z₁, Z₂) for pairs from the bivariate t copula with unit
/// Fréchet margins.
fn copula_extremal_coef_mc(rho: f64, nu: f64, n: usize, rng: &mut SplitRng) -> f64 {
    let chi = ChiSquared::new(nu).expect("positive dof");
    let s = (1.0 - rho * rho).max(0.0).sqrt();
    let mut acc = 0.0;
    for _ in 0..n {
        let w1: f64 = rng.sample(StandardNormal);
        let e: f64 = rng.sample(StandardNormal);
        let w2 = rho * w1 + s * e;
        let scale = (nu / chi.sample(rng)).sqrt();
        // 1/Z = −ln F(T)
        let inv = |t: f64| -(-student::tails(t, nu).1).ln_1p();
        acc += inv(w1 * scale).min(inv(w2 * scale));
    }
    n as f64 / acc
}

/// Whether the angle lies in the canonical rotation range.
pub fn alpha_in_range(alpha: f64) -> bool {
    (0.0..FRAC_PI_2).contains(&alpha)
}

/// Maps (α, r, λ) to the equivalent parametrisation with α ∈ [0, π/2).
/// Uses h(α + π/2, r, λ) = h(α, 1/r, λ·r) and the period π in α.
pub fn canonical_anisotropy(alpha: f64, ratio: f64, lambda: f64) -> (f64, f64, f64) {
    let mut a = alpha.rem_euclid(PI);
    let (mut r, mut l) = (ratio, lambda);
    if a >= FRAC_PI_2 {
        a -= FRAC_PI_2;
        l *= r;
        r = 1.0 / r;
    }
    if a >= FRAC_PI_2 {
        a = 0.0;
    }
    (a, r, l)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spatial::aniso_norm;

    #[test]
    fn model_codes() {
        for (i, m) in ModelId::ALL.iter().enumerate() {
            assert_eq!(m.code(), i);
            assert_eq!(ModelId::from_code(i).unwrap(), *m);
            assert_eq!(m.name().parse::<ModelId>().unwrap(), *m);
        }
        assert!("schlather".parse::<ModelId>().is_err());
        let n: usize = ModelId::ALL.iter().map(|m| m.n_params()).sum();
        assert_eq!(n, 24);
    }

    #[test]
    fn correlation_examples() {
        for f in [CorrFamily::Wm, CorrFamily::Pe] {
            assert_eq!(correlation(f, 0.0, 2.0, 0.7).unwrap(), 1.0);
        }
        assert!((correlation(CorrFamily::Pe, 3.0, 3.0, 1.0).unwrap() - (-1.0f64).exp()).abs() < 1e-15);
        for &h in &[0.01, 0.5, 2.0, 9.0] {
            let got = correlation(CorrFamily::Wm, h, 1.5, 0.5).unwrap();
            assert!((got - (-h / 1.5f64).exp()).abs() < 1e-12);
        }
        assert!(correlation(CorrFamily::Pe, 1.0, 1.0, 2.5).is_err());
        assert!(correlation(CorrFamily::Wm, -1.0, 1.0, 1.0).is_err());
    }

    #[test]
    fn correlation_monotone() {
        for f in [CorrFamily::Wm, CorrFamily::Pe] {
            for &k in &[0.25, 0.5, 1.0, 1.5, 2.0] {
                let mut prev = 1.0;
                for i in 0..=400 {
                    let h = i as f64 * 0.02;
                    let r = correlation(f, h, 1.0, k).unwrap();
                    assert!(r <= prev + 1e-14, "{f:?} k={k} h={h}");
                    assert!(r > 0.0 || h > 0.0);
                    prev = r;
                }
            }
        }
    }

    #[test]
    fn variogram_examples() {
        assert_eq!(variogram_br(0.0, 2.0, 1.0).unwrap(), 0.0);
        assert!((variogram_br(2.5, 2.5, 0.3).unwrap() - 1.0).abs() < 1e-15);
        assert!((variogram_br(4.0, 2.0, 2.0).unwrap() - 4.0).abs() < 1e-15);
        // Smith case: a(h) = √(2γ) = h√2 for λ = 1
        let h: f64 = 1.7;
        assert!(((2.0 * variogram_br(h, 1.0, 2.0).unwrap()).sqrt() - h * 2f64.sqrt()).abs() < 1e-14);
    }

    #[test]
    fn prior_draws_in_support() {
        let prior = PriorSpec::default();
        let mut rng = SplitRng::new(3);
        for m in ModelId::ALL {
            for _ in 0..2000 {
                let p = prior_sample(m, &prior, &mut rng);
                assert!(p.validate(m).is_ok());
                assert_eq!(p.nu.is_some(), m.has_nu());
                assert!(p.kappa > 0.0 && p.kappa < 2.0);
                assert!(prior_logpdf(m, &p, &prior).is_finite());
                if let Some(nu) = p.nu {
                    assert!(nu.ln().abs() <= 2.5);
                }
            }
        }
    }

    #[test]
    fn prior_mean_log_lambda() {
        let prior = PriorSpec::default();
        let mut rng = SplitRng::new(17);
        let n = 100_000;
        let mean: f64 = (0..n).map(|_| prior_sample(ModelId::BrownResnick, &prior, &mut rng).lambda.ln()).sum::<f64>() / n as f64;
        assert!((mean - 1.0).abs() < 3.0 * 2.0 / (n as f64).sqrt());
    }

    #[test]
    fn prior_logpdf_support() {
        let prior = PriorSpec::default();
        let base = ParamVector { lambda: 1.0, kappa: 1.0, alpha: 0.3, ratio: 1.0, nu: Some(2.0) };
        assert!(prior_logpdf(ModelId::ExtTWm, &base, &prior).is_finite());
        let p = ParamVector { kappa: 3.0, ..base };
        assert_eq!(prior_logpdf(ModelId::ExtTWm, &p, &prior), f64::NEG_INFINITY);
        let p = ParamVector { nu: Some(3.0f64.exp()), ..base };
        assert_eq!(prior_logpdf(ModelId::ExtTWm, &p, &prior), f64::NEG_INFINITY);
    }

    fn integrate(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        // composite Simpson
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let x = a + i as f64 * h;
            s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(x);
        }
        s * h / 3.0
    }

    #[test]
    fn prior_coordinates_normalised() {
        let prior = PriorSpec::default();
        let m = ModelId::ExtTPe;
        let base = vec![1.0, 1.0, 0.5, 0.0, 0.0];
        let base_lp = prior.working_logpdf(m, &base);
        // each coordinate's conditional density integrates to one
        let ranges = [(-20.0, 22.0), (1e-12, 2.0 - 1e-12), (0.0, FRAC_PI_2 - 1e-12), (-25.0, 25.0), (-2.5, 2.5)];
        for (c, &(a, b)) in ranges.iter().enumerate() {
            let marginal = |x: f64| {
                let mut u = base.clone();
                u[c] = x;
                (prior.working_logpdf(m, &u) - base_lp + single(&prior, c, base[c])).exp()
            };
            let total = integrate(marginal, a, b, 20_000);
            assert!((total - 1.0).abs() < 1e-6, "coordinate {c}: {total}");
        }
        // ratio of natural-scale densities against an independently normalised oracle for λ
        let unnorm = |l: f64| (-(l.ln() - 1.0).powi(2) / 8.0).exp() / l;
        let z = integrate(|t| unnorm(t.exp()) * t.exp(), -20.0, 22.0, 20_000);
        let p1 = ParamVector { lambda: 0.7, kappa: 1.0, alpha: 0.5, ratio: 1.0, nu: Some(1.0) };
        let p2 = ParamVector { lambda: 5.3, ..p1 };
        let got = prior_logpdf(m, &p1, &prior) - prior_logpdf(m, &p2, &prior);
        let want = (unnorm(0.7) / z).ln() - (unnorm(5.3) / z).ln();
        assert!((got - want).abs() < 1e-8);
    }

    fn single(prior: &PriorSpec, c: usize, x: f64) -> f64 {
        let sd = |p: &NormalPrior| prior.sd(p);
        let n = |p: &NormalPrior, x: f64| -0.5 * ((x - p.mean) / sd(p)).powi(2) - sd(p).ln() - LN_SQRT_2PI;
        match c {
            0 => n(&prior.log_lambda, x),
            1 => -(2.0f64).ln(),
            2 => -FRAC_PI_2.ln(),
            3 => n(&prior.log_ratio, x),
            _ => n(&prior.log_nu, x) - prior.log_nu_mass().ln(),
        }
    }

    #[test]
    fn spread_reading() {
        let mut prior = PriorSpec::default();
        assert_eq!(prior.sd(&prior.log_lambda), 2.0);
        prior.spread_reading = SpreadReading::StdDev;
        assert_eq!(prior.sd(&prior.log_lambda), 4.0);
    }

    #[test]
    fn extremal_coef_closed_forms() {
        let mut rng = SplitRng::new(1);
        let br = ParamVector { lambda: 1.0, kappa: 1.0, alpha: 0.0, ratio: 1.0, nu: None };
        let t0 = theoretical_extremal_coef(ModelId::BrownResnick, &br, 0.0, 0, &mut rng).unwrap();
        assert!((t0.value - 1.0).abs() < 1e-15);
        let tinf = theoretical_extremal_coef(ModelId::BrownResnick, &br, 1e6, 0, &mut rng).unwrap();
        assert!((tinf.value - 2.0).abs() < 1e-12);
        // ρ = 0 is the PE limit at large lag; check the formula at ρ = 0 directly
        let x = 2f64.sqrt();
        assert!((2.0 * student::cdf_unchecked(x, 2.0) - 1.707_106_8).abs() < 1e-7);
        for m in [ModelId::BrownResnick, ModelId::ExtTWm, ModelId::ExtTPe] {
            let p = ParamVector { lambda: 1.0, kappa: 0.8, alpha: 0.0, ratio: 1.0, nu: m.has_nu().then_some(2.0) };
            let mut prev = 1.0;
            for i in 0..200 {
                let h = i as f64 * 0.05;
                let t = theoretical_extremal_coef(m, &p, h, 0, &mut rng).unwrap().value;
                assert!((1.0 - 1e-12..=2.0 + 1e-12).contains(&t));
                assert!(t >= prev - 1e-12);
                prev = t;
            }
        }
    }

    #[test]
    fn copula_mc_warning() {
        let mut rng = SplitRng::new(2);
        let p = ParamVector { lambda: 1.0, kappa: 1.0, alpha: 0.0, ratio: 1.0, nu: Some(3.0) };
        let t = theoretical_extremal_coef(ModelId::TCopPe, &p, 1.0, 500, &mut rng).unwrap();
        assert!(t.warning.is_some());
        let t = theoretical_extremal_coef(ModelId::TCopPe, &p, 1.0, 20_000, &mut rng).unwrap();
        assert!(t.warning.is_none());
        assert!(t.value > 1.0 && t.value < 2.0);
    }

    #[test]
    fn canonical_anisotropy_preserves_distance() {
        for &(alpha, r, l) in &[(2.0, 3.0, 1.5), (-0.4, 0.5, 2.0), (4.0, 1.3, 0.7), (0.2, 2.0, 1.0)] {
            let (a2, r2, l2) = canonical_anisotropy(alpha, r, l);
            assert!(alpha_in_range(a2));
            for d in [[1.0, 0.0], [0.3, -2.0], [-1.5, 0.7]] {
                let h1 = aniso_norm(d, &AnisotropyParams { alpha, ratio: r }) / l;
                let h2 = aniso_norm(d, &AnisotropyParams { alpha: a2, ratio: r2 }) / l2;
                assert!((h1 - h2).abs() < 1e-12);
            }
        }
    }
}
