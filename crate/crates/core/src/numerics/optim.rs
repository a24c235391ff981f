//! Box-constrained minimisation.
//!
//! With a gradient the solver is a projected quasi-Newton method: BFGS
//! directions restricted to the free variables, an Armijo search along the
//! projected path and an active set built from the bound multipliers. Without
//! a gradient a Nelder–Mead simplex with projection onto the box is used.
//! Non-finite objective values are treated as rejected trial points.

use serde::{Deserialize, Serialize};

/// Stopping rules for [`minimize_bounded`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OptimOptions {
    pub max_iter: usize,
    /// Infinity norm of the projected gradient at convergence.
    pub grad_tol: f64,
    /// Simplex function-value spread at convergence (gradient-free mode).
    pub f_tol: f64,
    /// Simplex diameter at convergence (gradient-free mode).
    pub x_tol: f64,
}

impl Default for OptimOptions {
    fn default() -> Self {
        Self {
            max_iter: 500,
            grad_tol: 1e-6,
            f_tol: 1e-10,
            x_tol: 1e-8,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimResult {
    pub argmin: Vec<f64>,
    pub min: f64,
    pub converged: bool,
    pub iterations: usize,
    pub message: String,
}

pub type Objective<'a> = &'a (dyn Fn(&[f64]) -> f64 + Sync);
pub type Gradient<'a> = &'a (dyn Fn(&[f64]) -> Vec<f64> + Sync);

fn project(x: &mut [f64], lower: &[f64], upper: &[f64]) {
    for i in 0..x.len() {
        x[i] = x[i].clamp(lower[i], upper[i]);
    }
}

fn projected_gradient_norm(x: &[f64], g: &[f64], lower: &[f64], upper: &[f64]) -> f64 {
    let mut m: f64 = 0.0;
    for i in 0..x.len() {
        let moved = (x[i] - g[i]).clamp(lower[i], upper[i]) - x[i];
        m = m.max(moved.abs());
    }
    m
}

/// Minimises `objective` over the box `[lower, upper]` starting at `start`.
///
/// Never panics on non-finite evaluations; the result then carries
/// `converged = false` and a diagnostic message.
pub fn minimize_bounded(
    objective: Objective<'_>,
    gradient: Option<Gradient<'_>>,
    lower: &[f64],
    upper: &[f64],
    start: &[f64],
    opts: &OptimOptions,
) -> OptimResult {
    let n = start.len();
    assert!(lower.len() == n && upper.len() == n, "bound dimension mismatch");
    let mut x0 = start.to_vec();
    project(&mut x0, lower, upper);
    let f0 = objective(&x0);
    if !f0.is_finite() {
        return OptimResult {
            argmin: x0,
            min: f0,
            converged: false,
            iterations: 0,
            message: "objective not finite at start".into(),
        };
    }
    match gradient {
        Some(g) => bfgs(objective, g, lower, upper, x0, f0, opts),
        None => nelder_mead(objective, lower, upper, x0, f0, opts),
    }
}

fn bfgs(
    f: Objective<'_>,
    grad: Gradient<'_>,
    lower: &[f64],
    upper: &[f64],
    mut x: Vec<f64>,
    mut fx: f64,
    opts: &OptimOptions,
) -> OptimResult {
    let n = x.len();
    let mut g = grad(&x);
    if g.iter().any(|v| !v.is_finite()) {
        return OptimResult {
            argmin: x,
            min: fx,
            converged: false,
            iterations: 0,
            message: "gradient not finite at start".into(),
        };
    }
    let mut hinv = vec![vec![0.0; n]; n];
    let reset = |h: &mut Vec<Vec<f64>>| {
        for i in 0..n {
            for j in 0..n {
                h[i][j] = if i == j { 1.0 } else { 0.0 };
            }
        }
    };
    reset(&mut hinv);
    let mut message = String::from("iteration limit reached");
    let mut iter = 0;
    let mut stalls = 0;
    while iter < opts.max_iter {
        let pg = projected_gradient_norm(&x, &g, lower, upper);
        if pg <= opts.grad_tol {
            return OptimResult {
                argmin: x,
                min: fx,
                converged: true,
                iterations: iter,
                message: "projected gradient below tolerance".into(),
            };
        }
        iter += 1;
        let active: Vec<bool> = (0..n)
            .map(|i| {
                let tol = 1e-12 * (1.0 + x[i].abs());
                (x[i] <= lower[i] + tol && g[i] > 0.0) || (x[i] >= upper[i] - tol && g[i] < 0.0)
            })
            .collect();
        let mut d = vec![0.0; n];
        for i in 0..n {
            if active[i] {
                continue;
            }
            let mut s = 0.0;
            for j in 0..n {
                if !active[j] {
                    s -= hinv[i][j] * g[j];
                }
            }
            d[i] = s;
        }
        let mut slope: f64 = d.iter().zip(&g).map(|(a, b)| a * b).sum();
        if !(slope < 0.0) {
            reset(&mut hinv);
            for i in 0..n {
                d[i] = if active[i] { 0.0 } else { -g[i] };
            }
            slope = d.iter().zip(&g).map(|(a, b)| a * b).sum();
            if !(slope < 0.0) {
                message = "no descent direction".into();
                break;
            }
        }
        // projected Armijo backtracking
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let mut xt: Vec<f64> = x.iter().zip(&d).map(|(a, b)| a + t * b).collect();
            project(&mut xt, lower, upper);
            let decrease: f64 = g.iter().zip(xt.iter().zip(&x)).map(|(gi, (a, b))| gi * (a - b)).sum();
            let ft = f(&xt);
            if ft.is_finite() && ft <= fx + 1e-4 * decrease.min(0.0) && decrease < 0.0 {
                accepted = Some((xt, ft));
                break;
            }
            t *= 0.5;
        }
        let Some((xn, fnew)) = accepted else {
            if stalls == 0 {
                // retry once along steepest descent
                reset(&mut hinv);
                stalls += 1;
                continue;
            }
            message = "line search failed".into();
            break;
        };
        let gn = grad(&xn);
        if gn.iter().any(|v| !v.is_finite()) {
            message = "gradient not finite".into();
            x = xn;
            fx = fnew;
            break;
        }
        stalls = 0;
        let s: Vec<f64> = xn.iter().zip(&x).map(|(a, b)| a - b).collect();
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        let ss: f64 = s.iter().map(|a| a * a).sum::<f64>().sqrt();
        let yy: f64 = y.iter().map(|a| a * a).sum::<f64>().sqrt();
        if sy > 1e-12 * ss * yy && sy > 0.0 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += rho * ((1.0 + rho * yhy) * s[i] * s[j] - hy[i] * s[j] - s[i] * hy[j]);
                }
            }
        }
        let df = fx - fnew;
        x = xn;
        fx = fnew;
        g = gn;
        if df.abs() <= 1e-15 * fx.abs().max(1.0) && ss <= 1e-15 {
            message = "no progress".into();
            break;
        }
    }
    let pg = projected_gradient_norm(&x, &g, lower, upper);
    OptimResult {
        argmin: x,
        min: fx,
        converged: pg <= opts.grad_tol,
        iterations: iter,
        message,
    }
}

fn nelder_mead(
    f: Objective<'_>,
    lower: &[f64],
    upper: &[f64],
    x0: Vec<f64>,
    f0: f64,
    opts: &OptimOptions,
) -> OptimResult {
    let n = x0.len();
    let eval = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() { v } else { f64::INFINITY }
    };
    let mut simplex = vec![(x0.clone(), f0)];
    for i in 0..n {
        let mut xi = x0.clone();
        let range = upper[i] - lower[i];
        let mut step = if range.is_finite() { 0.1 * range } else { 0.1 * x0[i].abs().max(1.0) };
        step = step.min(0.5 * x0[i].abs().max(1.0));
        if xi[i] + step > upper[i] {
            step = -step;
        }
        xi[i] += step;
        project(&mut xi, lower, upper);
        let fi = eval(&xi);
        simplex.push((xi, fi));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    let mut iter = 0;
    let max_iter = opts.max_iter.max(200 * n);
    let mut converged = false;
    while iter < max_iter {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        let spread = (worst - best).abs();
        let diam = simplex[1..]
            .iter()
            .map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max))
            .fold(0.0, f64::max);
        if spread.is_finite() && spread <= opts.f_tol * (1.0 + best.abs()) && diam <= opts.x_tol * (1.0 + simplex[0].0.iter().fold(0.0f64, |m, v| m.max(v.abs()))) {
            converged = true;
            break;
        }
        iter += 1;
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for i in 0..n {
                centroid[i] += x[i] / n as f64;
            }
        }
        let along = |t: f64| {
            let mut p: Vec<f64> = (0..n).map(|i| centroid[i] + t * (simplex[n].0[i] - centroid[i])).collect();
            project(&mut p, lower, upper);
            p
        };
        let xr = along(-alpha);
        let fr = eval(&xr);
        if fr < simplex[0].1 {
            let xe = along(-gamma);
            let fe = eval(&xe);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = along(-rho);
                let fc = eval(&xc);
                (xc, fc)
            } else {
                let xc = along(rho);
                let fc = eval(&xc);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x_best = simplex[0].0.clone();
                for (x, fx) in simplex.iter_mut().skip(1) {
                    for i in 0..n {
                        x[i] = x_best[i] + sigma * (x[i] - x_best[i]);
                    }
                    *fx = eval(x);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, fx) = simplex.swap_remove(0);
    OptimResult {
        argmin: x,
        min: fx,
        converged,
        iterations: iter,
        message: if converged { "simplex converged".into() } else { "iteration limit reached".into() },
    }
}
