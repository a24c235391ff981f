//! Central finite differences.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Numeric control shared by finite-difference and tolerance-driven routines.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RealFunctionTolerances {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub fd_step: f64,
}

impl Default for RealFunctionTolerances {
    fn default() -> Self {
        Self {
            abs_tol: 1e-10,
            rel_tol: 1e-10,
            fd_step: 1e-6,
        }
    }
}

impl RealFunctionTolerances {
    pub fn validate(&self) -> Result<()> {
        if !(self.abs_tol > 0.0 && self.rel_tol > 0.0) {
            return Err(Error::invalid("tolerances must be strictly positive"));
        }
        if !(1e-8..=1e-3).contains(&self.fd_step) {
            return Err(Error::invalid(format!(
                "finite-difference step {} outside [1e-8, 1e-3]",
                self.fd_step
            )));
        }
        Ok(())
    }
}

/// Step max(1e-6, 1e-6·|v|) used for derivatives with respect to shape-like
/// parameters.
#[inline]
pub fn relative_step(v: f64) -> f64 {
    (1e-6 * v.abs()).max(1e-6)
}

/// Central-difference gradient of `f` at `x`.
pub fn finite_difference_gradient<F>(f: F, x: &[f64], step: f64) -> Result<Vec<f64>>
where
    F: Fn(&[f64]) -> f64,
{
    let mut xp = x.to_vec();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        xp[i] = x[i] + step;
        let fp = f(&xp);
        xp[i] = x[i] - step;
        let fm = f(&xp);
        xp[i] = x[i];
        if !fp.is_finite() || !fm.is_finite() {
            return Err(Error::NonFiniteEvaluation {
                coordinate: i,
                detail: format!("f(x+h)={fp}, f(x-h)={fm}"),
            });
        }
        out.push((fp - fm) / (2.0 * step));
    }
    Ok(out)
}

/// Central-difference Jacobian of a vector function; row `i` holds ∂g/∂x_i.
pub fn finite_difference_jacobian<G>(g: G, x: &[f64], steps: &[f64]) -> Result<Vec<Vec<f64>>>
where
    G: Fn(&[f64]) -> Result<Vec<f64>>,
{
    let mut xp = x.to_vec();
    let mut rows = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let h = steps[i];
        xp[i] = x[i] + h;
        let gp = g(&xp)?;
        xp[i] = x[i] - h;
        let gm = g(&xp)?;
        xp[i] = x[i];
        let row: Vec<f64> = gp.iter().zip(&gm).map(|(a, b)| (a - b) / (2.0 * h)).collect();
        if row.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFiniteEvaluation {
                coordinate: i,
                detail: "non-finite Jacobian row".into(),
            });
        }
        rows.push(row);
    }
    Ok(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn linear_and_quadratic() {
        let g = finite_difference_gradient(|x| x.iter().sum(), &[0.3, -2.0, 7.0], 1e-5).unwrap();
        assert!(g.iter().all(|v| (v - 1.0).abs() < 1e-10));
        let g = finite_difference_gradient(|x| x[0] * x[0], &[3.0], 1e-5).unwrap();
        assert!((g[0] - 6.0).abs() < 1e-6);
    }

    #[test]
    fn reports_coordinate() {
        let err = finite_difference_gradient(|x| if x[1] > 1.0 { f64::NAN } else { 0.0 }, &[0.0, 1.0], 1e-3)
            .unwrap_err();
        assert!(matches!(err, Error::NonFiniteEvaluation { coordinate: 1, .. }));
    }

    #[test]
    fn tolerance_validation() {
        assert!(RealFunctionTolerances::default().validate().is_ok());
        let bad = RealFunctionTolerances { fd_step: 1e-2, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
