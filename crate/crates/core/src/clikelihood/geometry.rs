//! Standardised lags and correlations carried as dual numbers over the
//! parameter vector (λ, κ, α, r, ν).

use crate::models::{CorrFamily, ParamVector};
use crate::numerics::bessel::bessel_k_scaled;
use crate::numerics::dual::Dual;
use crate::numerics::special::{digamma_unchecked, ln_gamma};
use crate::numerics::relative_step;
use std::f64::consts::LN_2;

pub(crate) const I_LAMBDA: usize = 0;
pub(crate) const I_KAPPA: usize = 1;
pub(crate) const I_ALPHA: usize = 2;
pub(crate) const I_RATIO: usize = 3;
pub(crate) const I_NU: usize = 4;

#[inline]
pub(crate) fn seed<const N: usize>(v: f64, index: usize) -> Dual<N> {
    let mut d = [0.0; N];
    if index < N {
        d[index] = 1.0;
    }
    Dual::new(v, d)
}

/// h = ‖A d‖/λ with its derivatives in λ, α and r.
pub(crate) fn lag<const N: usize>(d: [f64; 2], p: &ParamVector) -> Dual<N> {
    let (s, c) = p.alpha.sin_cos();
    let u = c * d[0] + s * d[1];
    let w = -s * d[0] + c * d[1];
    let r = p.ratio;
    let norm = (u * u + w * w / (r * r)).sqrt();
    let h = norm / p.lambda;
    let mut g = [0.0; N];
    if N > I_RATIO && norm > 0.0 {
        let denom = 2.0 * norm * p.lambda;
        g[I_LAMBDA] = -h / p.lambda;
        g[I_ALPHA] = (1.0 / (r * r) - 1.0) * (-2.0 * u * w) / denom;
        g[I_RATIO] = -2.0 * w * w / (r * r * r) / denom;
    }
    Dual::new(h, g)
}

/// ρ(h) with partials (∂ρ/∂h, ∂ρ/∂κ); derivatives are skipped when `want` is false.
pub(crate) fn correlation_partials(family: CorrFamily, h: f64, kappa: f64, want: bool) -> (f64, f64, f64) {
    if h <= 0.0 {
        return (1.0, 0.0, 0.0);
    }
    match family {
        CorrFamily::Pe => {
            let hk = h.powf(kappa);
            let rho = (-hk).exp();
            if !want {
                return (rho, 0.0, 0.0);
            }
            (rho, -rho * kappa * hk / h, -rho * hk * h.ln())
        }
        CorrFamily::Wm => {
            if h < 1e-12 {
                return (1.0, 0.0, 0.0);
            }
            let ks = |nu: f64| bessel_k_scaled(nu, h).unwrap_or(f64::NAN);
            let k0 = ks(kappa);
            let ln_rho = (1.0 - kappa) * LN_2 - ln_gamma(kappa) + kappa * h.ln() + k0.ln() - h;
            let rho = ln_rho.exp().min(1.0);
            if !want {
                return (rho, 0.0, 0.0);
            }
            let d_h = rho * (2.0 * kappa / h - ks(kappa + 1.0) / k0);
            let step = relative_step(kappa);
            let dlnk = (ks(kappa + step).ln() - ks(kappa - step).ln()) / (2.0 * step);
            let d_k = rho * ((0.5 * h).ln() - digamma_unchecked(kappa) + dlnk);
            (rho, d_h, d_k)
        }
    }
}

pub(crate) fn correlation_dual<const N: usize>(family: CorrFamily, h: Dual<N>, kappa: Dual<N>) -> Dual<N> {
    let (rho, dh, dk) = correlation_partials(family, h.v, kappa.v, N > 0);
    Dual::chain2(h, kappa, rho, dh, dk)
}
