use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};

pub const JITTER: f64 = 1e-10;

/// Lower Cholesky factor of a symmetric matrix, retrying once with a
/// diagonal jitter. `labels` maps row indices to site indices for the error.
pub fn cholesky_jittered(m: &DMatrix<f64>, context: &str, labels: Option<&[usize]>) -> Result<DMatrix<f64>> {
    if let Some(c) = m.clone().cholesky() {
        return Ok(c.l());
    }
    let n = m.nrows();
    let mut j = m.clone();
    for i in 0..n {
        j[(i, i)] += JITTER;
    }
    if let Some(c) = j.cholesky() {
        return Ok(c.l());
    }
    let (a, b) = most_collinear_pair(m);
    let map = |i: usize| labels.map_or(i, |l| l[i]);
    Err(Error::NotPositiveDefinite {
        context: context.to_string(),
        site_a: map(a),
        site_b: map(b),
    })
}

fn most_collinear_pair(m: &DMatrix<f64>) -> (usize, usize) {
    let n = m.nrows();
    let mut best = (0, n.min(2).saturating_sub(1), f64::NEG_INFINITY);
    for i in 0..n {
        for j in (i + 1)..n {
            let c = m[(i, j)] / (m[(i, i)] * m[(j, j)]).abs().sqrt();
            if c.abs() > best.2 {
                best = (i, j, c.abs());
            }
        }
    }
    (best.0, best.1)
}

/// Solves L Lᵀ x = b given the lower factor.
pub fn chol_solve(l: &DMatrix<f64>, b: &DVector<f64>) -> DVector<f64> {
    let y = l.solve_lower_triangular(b).expect("non-singular factor");
    l.tr_solve_lower_triangular(&y).expect("non-singular factor")
}

/// ln det of L Lᵀ.
pub fn chol_logdet(l: &DMatrix<f64>) -> f64 {
    2.0 * (0..l.nrows()).map(|i| l[(i, i)].ln()).sum::<f64>()
}

/// Moore–Penrose pseudo-inverse via SVD.
pub fn pinv(m: &DMatrix<f64>) -> DMatrix<f64> {
    let svd = m.clone().svd(true, true);
    let max_s = svd.singular_values.iter().cloned().fold(0.0, f64::max);
    let tol = max_s * 1e-12 * m.nrows().max(m.ncols()) as f64;
    svd.pseudo_inverse(tol).unwrap_or_else(|_| DMatrix::zeros(m.ncols(), m.nrows()))
}
