//! Univariate central Student-t distribution.

use super::special::{beta_reg_pair_with, ln_gamma, ln_inv_beta, norm_cdf};
use crate::error::{Error, Result};
use std::f64::consts::PI;

/// CDF, density and density derivative of the Student-t distribution.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudentT {
    pub cdf: f64,
    pub pdf: f64,
    pub d_pdf_dx: f64,
}

fn check_dof(dof: f64) -> Result<()> {
    if !(dof > 0.0) || dof.is_nan() {
        return Err(Error::domain(format!("degrees of freedom must be positive, got {dof}")));
    }
    Ok(())
}

/// Lower and upper tail probabilities (P[T ≤ x], P[T > x]).
pub(crate) fn tails(x: f64, dof: f64) -> (f64, f64) {
    tails_with(x, dof, tail_const(dof))
}

/// −ln B(ν/2, 1/2), the per-dof constant of [`tails_with`].
#[inline]
pub(crate) fn tail_const(dof: f64) -> f64 {
    ln_inv_beta(0.5 * dof, 0.5)
}

pub(crate) fn tails_with(x: f64, dof: f64, lc: f64) -> (f64, f64) {
    if x.is_infinite() {
        return if x > 0.0 { (1.0, 0.0) } else { (0.0, 1.0) };
    }
    if dof > 1e8 {
        return (norm_cdf(x), norm_cdf(-x));
    }
    let x2 = x * x;
    let denom = dof + x2;
    // two-sided tail P[|T| > |x|] = I_{ν/(ν+x²)}(ν/2, 1/2)
    let (two_tail, _) = beta_reg_pair_with(0.5 * dof, 0.5, dof / denom, x2 / denom, lc);
    let small = 0.5 * two_tail;
    if x > 0.0 {
        (1.0 - small, small)
    } else {
        (small, 1.0 - small)
    }
}

#[inline]
pub(crate) fn ln_norm_const(dof: f64) -> f64 {
    ln_gamma(0.5 * (dof + 1.0)) - ln_gamma(0.5 * dof) - 0.5 * (dof * PI).ln()
}

#[inline]
pub(crate) fn pdf_with_const(x: f64, dof: f64, ln_c: f64) -> f64 {
    (ln_c - 0.5 * (dof + 1.0) * (x * x / dof).ln_1p()).exp()
}

pub(crate) fn pdf_unchecked(x: f64, dof: f64) -> f64 {
    pdf_with_const(x, dof, ln_norm_const(dof))
}

pub(crate) fn cdf_unchecked(x: f64, dof: f64) -> f64 {
    tails(x, dof).0
}

/// Student-t CDF, density and ∂pdf/∂x at `x` with `dof` degrees of freedom.
pub fn student_t(x: f64, dof: f64) -> Result<StudentT> {
    check_dof(dof)?;
    let cdf = cdf_unchecked(x, dof);
    let pdf = pdf_unchecked(x, dof);
    let d_pdf_dx = if x.is_finite() {
        -x * (dof + 1.0) / (x * x + dof) * pdf
    } else {
        0.0
    };
    Ok(StudentT { cdf, pdf, d_pdf_dx })
}

/// Student-t quantile function.
pub fn student_t_quantile(p: f64, dof: f64) -> Result<f64> {
    check_dof(dof)?;
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::domain(format!("quantile level must lie in (0,1), got {p}")));
    }
    Ok(quantile_from_tails(p, 1.0 - p, dof))
}

/// Quantile given both tail probabilities, which must sum to one. Passing the
/// smaller tail exactly keeps extreme quantiles accurate.
pub(crate) fn quantile_from_tails(lower: f64, upper: f64, dof: f64) -> f64 {
    if lower == upper {
        return 0.0;
    }
    if upper <= 0.0 {
        return f64::INFINITY;
    }
    if lower <= 0.0 {
        return f64::NEG_INFINITY;
    }
    let (target, sign) = if upper < lower { (upper, 1.0) } else { (lower, -1.0) };
    sign * upper_tail_inverse(target, dof)
}

/// Solves P[T > x] = u for x ≥ 0, u ∈ (0, 1/2).
fn upper_tail_inverse(u: f64, dof: f64) -> f64 {
    let ln_u = u.ln();
    let ln_c = ln_norm_const(dof);
    // bracket
    let mut lo = 0.0;
    let mut hi = 1.0;
    while tails(hi, dof).1 > u {
        lo = hi;
        hi *= 2.0;
        if hi > 1e300 {
            return hi;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..200 {
        let up = tails(x, dof).1;
        if up > u {
            lo = x;
        } else {
            hi = x;
        }
        let f = up.ln() - ln_u;
        let pdf = pdf_with_const(x, dof, ln_c);
        let step = if up > 0.0 && pdf > 0.0 { f * up / pdf } else { f64::NAN };
        let mut next = x + step;
        if !next.is_finite() || next <= lo || next >= hi {
            next = 0.5 * (lo + hi);
        }
        if (next - x).abs() <= 1e-15 * x.abs().max(1e-300) || hi - lo <= 1e-15 * hi {
            return next;
        }
        x = next;
    }
    x
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cdf_known_values() {
        assert!((student_t(0.0, 3.7).unwrap().cdf - 0.5).abs() < 1e-15);
        assert!((student_t(1.0, 1.0).unwrap().cdf - 0.75).abs() < 1e-14);
        let x = 2.0f64.sqrt();
        let want = 0.5 + x / (2.0 * (2.0 + x * x).sqrt());
        assert!((student_t(x, 2.0).unwrap().cdf - want).abs() < 1e-14);
        assert!((want - 0.853_553_4).abs() < 1e-7);
        // Cauchy arctan form
        for &x in &[-30.0f64, -2.0, 0.3, 5.0, 1e4] {
            let want = 0.5 + x.atan() / PI;
            assert!((student_t(x, 1.0).unwrap().cdf - want).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_identity() {
        for &nu in &[0.5, 1.0, 3.0, 12.0] {
            for &x in &[-4.0, -0.7, 0.0, 0.2, 2.5] {
                let s = student_t(x, nu).unwrap();
                let h = 1e-5;
                let fd = (pdf_unchecked(x + h, nu) - pdf_unchecked(x - h, nu)) / (2.0 * h);
                assert!((fd - s.d_pdf_dx).abs() < 1e-8);
                let fd_cdf = (cdf_unchecked(x + h, nu) - cdf_unchecked(x - h, nu)) / (2.0 * h);
                assert!((fd_cdf - s.pdf).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn pdf_integrates_to_one() {
        for &nu in &[0.5f64, 1.0, 3.0, 10.0] {
            // x = e^y turns the power-law tail into an exponential one
            let h = 1e-3;
            let mut sum = 0.0;
            let mut y = -40.0;
            while y < 400.0 {
                let x = f64::exp(y);
                sum += pdf_unchecked(x, nu) * x;
                y += h;
            }
            sum *= 2.0 * h;
            assert!((sum - 1.0).abs() < 1e-6, "nu={nu} integral={sum}");
        }
    }

    #[test]
    fn quantile_values() {
        assert_eq!(student_t_quantile(0.5, 4.0).unwrap(), 0.0);
        assert!((student_t_quantile(0.75, 1.0).unwrap() - 1.0).abs() < 1e-12);
        let q = student_t_quantile(0.9, 5.0).unwrap();
        assert!((student_t(q, 5.0).unwrap().cdf - 0.9).abs() < 1e-10);
        // bisection against own cdf
        let (mut lo, mut hi) = (0.0, 10.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if cdf_unchecked(mid, 5.0) < 0.9 {
                lo = mid
            } else {
                hi = mid
            }
        }
        assert!((q - lo).abs() < 1e-10);
    }

    #[test]
    fn quantile_roundtrip() {
        for &nu in &[0.3, 1.0, 2.0, 5.5, 12.2, 40.0] {
            for i in 1..100 {
                let p = i as f64 / 100.0;
                let q = student_t_quantile(p, nu).unwrap();
                assert!((cdf_unchecked(q, nu) - p).abs() < 1e-10, "nu={nu} p={p}");
            }
        }
    }

    #[test]
    fn extreme_tails() {
        let u = 1e-12;
        let x = quantile_from_tails(1.0 - u, u, 3.0);
        assert!(((tails(x, 3.0).1 - u) / u).abs() < 1e-9);
        let x = quantile_from_tails(u, 1.0 - u, 3.0);
        assert!(((tails(x, 3.0).0 - u) / u).abs() < 1e-9);
    }

    #[test]
    fn rejects_bad_input() {
        assert!(student_t(0.0, 0.0).is_err());
        assert!(student_t_quantile(0.0, 2.0).is_err());
        assert!(student_t_quantile(1.0, 2.0).is_err());
        assert!(student_t_quantile(0.5, -1.0).is_err());
    }
}
