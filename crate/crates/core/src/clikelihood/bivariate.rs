//! Bivariate log-likelihoods of the five models and their gradients.
//!
//! Each kernel is written once over `Dual<N>`: `N = 0` gives the plain
//! log-likelihood and `N = 5` carries the gradient in (λ, κ, α, r, ν).

use super::geometry::{correlation_dual, lag, seed, I_KAPPA, I_NU};
use crate::error::{Error, Result};
use crate::models::{ModelId, ParamVector};
use crate::numerics::dual::Dual;
use crate::numerics::linalg::{chol_logdet, cholesky_jittered};
use crate::numerics::special::{digamma_unchecked, gauss_cdf_pdf, ln_gamma};
use crate::numerics::student::{self, ln_norm_const, pdf_with_const, quantile_from_tails};
use nalgebra::{DMatrix, DVector};

/// Exponent measure V and its partial derivatives at one point, with the
/// intermediate quantities of the closed forms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExponentMeasureTerms {
    pub v: f64,
    pub v1: f64,
    pub v2: f64,
    pub v12: f64,
    pub a: f64,
    pub w: f64,
    pub vv: f64,
    /// (z₂/z₁)^{1/ν} for extremal-t, NaN for Brown–Resnick.
    pub q: f64,
    /// 1/q for extremal-t, NaN for Brown–Resnick.
    pub r: f64,
}

impl ExponentMeasureTerms {
    /// V₁V₂ − V₁₂.
    pub fn density_factor(&self) -> f64 {
        self.v1 * self.v2 - self.v12
    }
}

pub(crate) struct Terms<const N: usize> {
    v: Dual<N>,
    v1: Dual<N>,
    v2: Dual<N>,
    v12: Dual<N>,
    a: f64,
    w: f64,
    vv: f64,
    q: f64,
    r: f64,
}

impl<const N: usize> Terms<N> {
    pub(crate) fn loglik(&self) -> Dual<N> {
        let d = self.v1 * self.v2 - self.v12;
        if !(d.v > 0.0) || !d.v.is_finite() || !self.v.v.is_finite() {
            return Dual::new(f64::NEG_INFINITY, [f64::NAN; N]);
        }
        -self.v + d.ln()
    }

    fn plain(&self) -> ExponentMeasureTerms {
        ExponentMeasureTerms {
            v: self.v.v,
            v1: self.v1.v,
            v2: self.v2.v,
            v12: self.v12.v,
            a: self.a,
            w: self.w,
            vv: self.vv,
            q: self.q,
            r: self.r,
        }
    }
}

#[inline]
fn gauss<const N: usize>(x: Dual<N>) -> (Dual<N>, Dual<N>) {
    let (cdf, pdf) = gauss_cdf_pdf(x.v);
    (x.chain(cdf, pdf), x.chain(pdf, -x.v * pdf))
}

/// Brown–Resnick exponent measure at standardised lag h.
pub(crate) fn br_terms<const N: usize>(h: Dual<N>, kappa: Dual<N>, z1: f64, z2: f64) -> Terms<N> {
    let a = ((h.ln() * kappa).exp() * 2.0).sqrt();
    let lz = (z2 / z1).ln();
    let w = a * 0.5 + lz / a;
    let v = a - w;
    let (cw, pw) = gauss(w);
    let (cv, pv) = gauss(v);
    let vm = cw / z1 + cv / z2;
    let v1 = pv / (a * (z1 * z2)) - pw / (a * (z1 * z1)) - cw / (z1 * z1);
    let v2 = pw / (a * (z1 * z2)) - pv / (a * (z2 * z2)) - cv / (z2 * z2);
    let a2 = a * a;
    let v12 = -(v * pw) / (a2 * (z1 * z1 * z2)) - (w * pv) / (a2 * (z1 * z2 * z2));
    Terms { v: vm, v1, v2, v12, a: a.v, w: w.v, vv: v.v, q: f64::NAN, r: f64::NAN }
}

/// Student-t quantities with ν+1 degrees of freedom shared by one pair.
pub(crate) struct StudentCtx {
    dof: f64,
    ln_c: f64,
    psi_diff: f64,
    step: f64,
    /// Tail constants at dof, dof + step and dof − step.
    lc: [f64; 3],
}

impl StudentCtx {
    pub(crate) fn new(nu: f64, want: bool) -> Self {
        let dof = nu + 1.0;
        let step = 1e-6 * nu.max(1.0);
        let (psi_diff, lc_pm) = if want {
            (
                digamma_unchecked(0.5 * (nu + 2.0)) - digamma_unchecked(0.5 * (nu + 1.0)),
                [student::tail_const(dof + step), student::tail_const(dof - step)],
            )
        } else {
            (0.0, [f64::NAN; 2])
        };
        Self { dof, ln_c: ln_norm_const(dof), psi_diff, step, lc: [student::tail_const(dof), lc_pm[0], lc_pm[1]] }
    }
}

/// (T(x), t(x)) for the t distribution with ν+1 dof, with ν a variable.
#[inline]
fn student_dual<const N: usize>(x: Dual<N>, nu: Dual<N>, ctx: &StudentCtx) -> (Dual<N>, Dual<N>) {
    let xv = x.v;
    let (lo, _) = student::tails_with(xv, ctx.dof, ctx.lc[0]);
    let pdf = pdf_with_const(xv, ctx.dof, ctx.ln_c);
    if N == 0 {
        return (Dual::new(lo, [0.0; N]), Dual::new(pdf, [0.0; N]));
    }
    let step = ctx.step;
    let plus = student::tails_with(xv, ctx.dof + step, ctx.lc[1]);
    let minus = student::tails_with(xv, ctx.dof - step, ctx.lc[2]);
    let d_cdf_nu = if xv > 0.0 { -(plus.1 - minus.1) / (2.0 * step) } else { (plus.0 - minus.0) / (2.0 * step) };
    let x2 = xv * xv;
    let d = ctx.dof;
    let d_pdf_x = -xv * (d + 1.0) / (x2 + d) * pdf;
    let d_pdf_nu = 0.5
        * pdf
        * (ctx.psi_diff - 1.0 / d - (x2 / d).ln_1p() + x2 * (d + 1.0) / (d * (x2 + d)));
    (
        Dual::chain2(x, nu, lo, pdf, d_cdf_nu),
        Dual::chain2(x, nu, pdf, d_pdf_x, d_pdf_nu),
    )
}

/// Extremal-t exponent measure for correlation ρ.
pub(crate) fn extt_terms<const N: usize>(rho: Dual<N>, nu: Dual<N>, z1: f64, z2: f64, ctx: &StudentCtx) -> Terms<N> {
    let a = ((nu + 1.0) / (1.0 - rho * rho)).sqrt();
    let lz = (z2 / z1).ln();
    let q = (lz / nu).exp();
    let r = q.recip();
    let w = a * (q - rho);
    let v = a * (r - rho);
    let (cw, tw) = student_dual(w, nu, ctx);
    let (cv, tv) = student_dual(v, nu, ctx);
    let t_prime = |x: Dual<N>, t: Dual<N>| -(x * (nu + 2.0)) / (x * x + nu + 1.0) * t;
    let dw = t_prime(w, tw);
    let dv = t_prime(v, tv);
    let vm = cw / z1 + cv / z2;
    let aqt = a * q * tw / nu;
    let art = a * r * tv / nu;
    let v1 = -cw / (z1 * z1) - aqt / (z1 * z1) + art / (z1 * z2);
    let v2 = -cv / (z2 * z2) - art / (z2 * z2) + aqt / (z1 * z2);
    let nu2 = nu * nu;
    let v12 = -((nu + 1.0) * a * q * tw + a * a * q * q * dw) / (nu2 * (z1 * z1 * z2))
        - ((nu + 1.0) * a * r * tv + a * a * r * r * dv) / (nu2 * (z1 * z2 * z2));
    Terms { v: vm, v1, v2, v12, a: a.v, w: w.v, vv: v.v, q: q.v, r: r.v }
}

/// η = T_ν⁻¹(exp(−1/z)) with ∂η/∂ν in the ν slot.
pub(crate) fn copula_eta<const N: usize>(z: f64, nu: f64) -> Dual<N> {
    let lower = (-1.0 / z).exp();
    let upper = -(-1.0 / z).exp_m1();
    let eta = quantile_from_tails(lower, upper, nu);
    let mut d = [0.0; N];
    if N > I_NU && eta.is_finite() {
        let step = 1e-6 * nu.max(1.0);
        let d_cdf = if eta > 0.0 {
            -(student::tails(eta, nu + step).1 - student::tails(eta, nu - step).1) / (2.0 * step)
        } else {
            (student::tails(eta, nu + step).0 - student::tails(eta, nu - step).0) / (2.0 * step)
        };
        d[I_NU] = -d_cdf / student::pdf_unchecked(eta, nu);
    }
    Dual::new(eta, d)
}

/// ln(ν/2) + 2 ln Γ(ν/2) − 2 ln Γ((ν+1)/2).
pub(crate) fn copula_const<const N: usize>(nu: Dual<N>) -> Dual<N> {
    let lg = |x: Dual<N>| {
        let psi = if N > 0 { digamma_unchecked(x.v) } else { 0.0 };
        x.chain(ln_gamma(x.v), psi)
    };
    (nu * 0.5).ln() + lg(nu * 0.5) * 2.0 - lg((nu + 1.0) * 0.5) * 2.0
}

#[inline]
pub(crate) fn ln_frechet_density(z: f64) -> f64 {
    -1.0 / z - 2.0 * z.ln()
}

/// Bivariate t-copula log-likelihood with unit Fréchet margins.
#[inline]
pub(crate) fn tcop_loglik<const N: usize>(
    rho: Dual<N>,
    nu: Dual<N>,
    konst: Dual<N>,
    e1: Dual<N>,
    e2: Dual<N>,
    lg: f64,
) -> Dual<N> {
    let om = 1.0 - rho * rho;
    let quad = (e1 * e1 - rho * e1 * e2 * 2.0 + e2 * e2) / om;
    let marg = (e1 * e1 / nu + 1.0).ln() + (e2 * e2 / nu + 1.0).ln();
    let out = konst - om.ln() * 0.5 - (nu + 2.0) * 0.5 * (quad / nu + 1.0).ln() + (nu + 1.0) * 0.5 * marg + lg;
    if out.v.is_finite() {
        out
    } else {
        Dual::new(f64::NEG_INFINITY, [f64::NAN; N])
    }
}

fn check_inputs(model: ModelId, params: &ParamVector, z1: f64, z2: f64) -> Result<()> {
    params.validate(model)?;
    if !(z1 > 0.0 && z2 > 0.0) || !z1.is_finite() || !z2.is_finite() {
        return Err(Error::domain(format!("observations must be positive and finite, got ({z1}, {z2})")));
    }
    Ok(())
}

fn diff(x1: [f64; 2], x2: [f64; 2]) -> [f64; 2] {
    [x1[0] - x2[0], x1[1] - x2[1]]
}

pub(crate) fn biv_dual<const N: usize>(
    model: ModelId,
    params: &ParamVector,
    z1: f64,
    z2: f64,
    x1: [f64; 2],
    x2: [f64; 2],
) -> Result<Dual<N>> {
    check_inputs(model, params, z1, z2)?;
    let h: Dual<N> = lag(diff(x1, x2), params);
    let kappa: Dual<N> = seed(params.kappa, I_KAPPA);
    Ok(match model {
        ModelId::BrownResnick => br_terms(h, kappa, z1, z2).loglik(),
        ModelId::ExtTWm | ModelId::ExtTPe => {
            let nu_v = params.nu_or_nan();
            let rho = correlation_dual(model.corr_family().unwrap(), h, kappa);
            let nu: Dual<N> = seed(nu_v, I_NU);
            extt_terms(rho, nu, z1, z2, &StudentCtx::new(nu_v, N > 0)).loglik()
        }
        ModelId::TCopWm | ModelId::TCopPe => {
            let nu_v = params.nu_or_nan();
            let rho = correlation_dual(model.corr_family().unwrap(), h, kappa);
            let nu: Dual<N> = seed(nu_v, I_NU);
            let lg = ln_frechet_density(z1) + ln_frechet_density(z2);
            tcop_loglik(rho, nu, copula_const(nu), copula_eta(z1, nu_v), copula_eta(z2, nu_v), lg)
        }
    })
}

/// Bivariate log-likelihood of (z₁, z₂) observed at sites x₁, x₂; −∞ when
/// the density is numerically non-positive.
pub fn biv_loglik(model: ModelId, params: &ParamVector, z1: f64, z2: f64, x1: [f64; 2], x2: [f64; 2]) -> Result<f64> {
    Ok(biv_dual::<0>(model, params, z1, z2, x1, x2)?.v)
}

/// Gradient of [`biv_loglik`] in the order (λ, κ, α, r[, ν]).
pub fn biv_score(model: ModelId, params: &ParamVector, z1: f64, z2: f64, x1: [f64; 2], x2: [f64; 2]) -> Result<Vec<f64>> {
    let d = biv_dual::<5>(model, params, z1, z2, x1, x2)?;
    Ok(d.d[..model.n_params()].to_vec())
}

/// Exponent measure terms of a max-stable model.
pub fn exponent_measure(
    model: ModelId,
    params: &ParamVector,
    z1: f64,
    z2: f64,
    x1: [f64; 2],
    x2: [f64; 2],
) -> Result<ExponentMeasureTerms> {
    check_inputs(model, params, z1, z2)?;
    let h: Dual<0> = lag(diff(x1, x2), params);
    let kappa = Dual::constant(params.kappa);
    match model {
        ModelId::BrownResnick => Ok(br_terms(h, kappa, z1, z2).plain()),
        ModelId::ExtTWm | ModelId::ExtTPe => {
            let nu = params.nu_or_nan();
            let rho = correlation_dual(model.corr_family().unwrap(), h, kappa);
            Ok(extt_terms(rho, Dual::constant(nu), z1, z2, &StudentCtx::new(nu, false)).plain())
        }
        _ => Err(Error::invalid(format!("{model} has no exponent measure"))),
    }
}

/// Transformed values, quadratic form and dispersion of the t copula.
#[derive(Debug, Clone, PartialEq)]
pub struct TCopulaTerms {
    pub eta: Vec<f64>,
    pub q: f64,
    pub sigma: DMatrix<f64>,
}

impl TCopulaTerms {
    pub fn new(z: &[f64], sigma: DMatrix<f64>, nu: f64) -> Result<Self> {
        if sigma.nrows() != z.len() || sigma.ncols() != z.len() {
            return Err(Error::invalid("dispersion matrix does not match the observation length"));
        }
        let eta: Vec<f64> = z.iter().map(|&zi| copula_eta::<0>(zi, nu).v).collect();
        let l = cholesky_jittered(&sigma, "t copula dispersion", None)?;
        let sol = l.solve_lower_triangular(&DVector::from_column_slice(&eta)).expect("triangular solve");
        Ok(Self { eta, q: sol.norm_squared(), sigma })
    }
}

/// Bivariate t-copula log-density of a unit Fréchet pair at correlation `rho`.
pub fn tcop_biv_loglik(z1: f64, z2: f64, rho: f64, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::domain(format!("degrees of freedom must be positive, got {nu}")));
    }
    if !(z1 > 0.0 && z2 > 0.0) {
        return Err(Error::domain("observations must be positive"));
    }
    if !(rho.abs() < 1.0) {
        return Err(Error::domain(format!("correlation must lie in (-1, 1), got {rho}")));
    }
    let nu_d = Dual::<0>::constant(nu);
    let l = tcop_loglik(
        Dual::constant(rho),
        nu_d,
        copula_const(nu_d),
        copula_eta(z1, nu),
        copula_eta(z2, nu),
        ln_frechet_density(z1) + ln_frechet_density(z2),
    );
    Ok(l.v)
}

/// H-dimensional t-copula log-likelihood of one unit Fréchet vector.
pub fn tcop_loglik_generic(z: &[f64], sigma: &DMatrix<f64>, nu: f64) -> Result<f64> {
    if !(nu > 0.0) {
        return Err(Error::domain(format!("degrees of freedom must be positive, got {nu}")));
    }
    if z.iter().any(|v| !(*v > 0.0)) {
        return Err(Error::domain("observations must be positive"));
    }
    let l = cholesky_jittered(sigma, "t copula dispersion", None)?;
    Ok(tcop_loglik_factored(z, &l, nu))
}

fn tcop_loglik_factored(z: &[f64], l: &DMatrix<f64>, nu: f64) -> f64 {
    let hd = z.len() as f64;
    let eta: Vec<f64> = z.iter().map(|&zi| copula_eta::<0>(zi, nu).v).collect();
    let sol = l.solve_lower_triangular(&DVector::from_column_slice(&eta)).expect("triangular solve");
    let q = sol.norm_squared();
    let konst = ln_gamma(0.5 * (nu + hd)) - hd * ln_gamma(0.5 * (nu + 1.0)) + (hd - 1.0) * ln_gamma(0.5 * nu);
    let marg: f64 = eta.iter().map(|e| (e * e / nu).ln_1p()).sum();
    let lg: f64 = z.iter().map(|&zi| ln_frechet_density(zi)).sum();
    konst - 0.5 * chol_logdet(l) - 0.5 * (nu + hd) * (q / nu).ln_1p() + 0.5 * (nu + 1.0) * marg + lg
}

/// Full t-copula log-likelihood of a data matrix (rows are replicates).
pub fn tcop_full_loglik(
    model: ModelId,
    params: &ParamVector,
    rows: &[Vec<f64>],
    coords: &[[f64; 2]],
) -> Result<f64> {
    if model.is_maxstable() {
        return Err(Error::invalid(format!("{model} is not a copula model")));
    }
    params.validate(model)?;
    let family = model.corr_family().unwrap();
    let hn = coords.len();
    let mut sigma = DMatrix::identity(hn, hn);
    for i in 0..hn {
        for j in (i + 1)..hn {
            let h: Dual<0> = lag(diff(coords[i], coords[j]), params);
            let r = correlation_dual(family, h, Dual::constant(params.kappa)).v;
            sigma[(i, j)] = r;
            sigma[(j, i)] = r;
        }
    }
    let l = cholesky_jittered(&sigma, "t copula correlation", None)?;
    let nu = params.nu_or_nan();
    let mut total = 0.0;
    for row in rows {
        if row.len() != hn {
            return Err(Error::invalid("row length does not match the number of sites"));
        }
        total += tcop_loglik_factored(row, &l, nu);
    }
    Ok(if total.is_nan() { f64::NEG_INFINITY } else { total })
}
