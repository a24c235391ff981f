//! Gamma-family functions, the normal distribution and the regularized
//! incomplete beta function.

use crate::error::{Error, Result};

pub use statrs::function::gamma::{gamma, ln_gamma};

pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Digamma function ψ(x) for x > 0.
///
/// Uses the upward recurrence ψ(x) = ψ(x+1) − 1/x until x ≥ 10 and then the
/// asymptotic Bernoulli series.
pub fn digamma(x: f64) -> Result<f64> {
    if !(x > 0.0) || !x.is_finite() {
        return Err(Error::domain(format!("digamma requires x > 0, got {x}")));
    }
    Ok(digamma_unchecked(x))
}

pub(crate) fn digamma_unchecked(mut x: f64) -> f64 {
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // B_{2k} / (2k) for k = 1..7
    let series = inv2
        * (1.0 / 12.0
            - inv2
                * (1.0 / 120.0
                    - inv2
                        * (1.0 / 252.0
                            - inv2
                                * (1.0 / 240.0
                                    - inv2
                                        * (1.0 / 132.0
                                            - inv2 * (691.0 / 32760.0 - inv2 / 12.0))))));
    acc + x.ln() - 0.5 * inv - series
}

/// Standard normal CDF and density at `x`.
pub fn gauss_cdf_pdf(x: f64) -> (f64, f64) {
    (norm_cdf(x), norm_pdf(x))
}

#[inline]
pub fn norm_cdf(x: f64) -> f64 {
    0.5 * statrs::function::erf::erfc(-x / std::f64::consts::SQRT_2)
}

#[inline]
pub fn norm_pdf(x: f64) -> f64 {
    const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Regularized incomplete beta function returning the pair (I_x(a,b), 1 − I_x(a,b)).
///
/// `y` must equal `1 − x`; passing it separately keeps the complement accurate
/// when x is close to 1.
#[cfg(test)]
pub(crate) fn beta_reg_pair(a: f64, b: f64, x: f64, y: f64) -> (f64, f64) {
    beta_reg_pair_with(a, b, x, y, ln_inv_beta(a, b))
}

/// −ln B(a, b).
#[inline]
pub(crate) fn ln_inv_beta(a: f64, b: f64) -> f64 {
    ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b)
}

/// [`beta_reg_pair`] with −ln B(a, b) supplied by the caller.
pub(crate) fn beta_reg_pair_with(a: f64, b: f64, x: f64, y: f64, ln_inv_b: f64) -> (f64, f64) {
    if x <= 0.0 {
        return (0.0, 1.0);
    }
    if y <= 0.0 {
        return (1.0, 0.0);
    }
    let ln_front = ln_inv_b + a * x.ln() + b * y.ln();
    let front = ln_front.exp();
    if x < (a + 1.0) / (a + b + 2.0) {
        let p = front * beta_cf(a, b, x) / a;
        (p, 1.0 - p)
    } else {
        let q = front * beta_cf(b, a, y) / b;
        (1.0 - q, q)
    }
}

/// Modified Lentz evaluation of the incomplete beta continued fraction.
fn beta_cf(a: f64, b: f64, x: f64) -> f64 {
    const TINY: f64 = 1e-300;
    const EPS: f64 = 1e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..=500 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}
