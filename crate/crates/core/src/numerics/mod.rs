//! Special functions, distributions, optimisation and differencing.

pub mod bessel;
pub mod diff;
pub mod dual;
pub mod linalg;
pub mod optim;
pub mod rng;
pub mod special;
pub mod student;

pub use bessel::{bessel_k, bessel_k_scaled, ln_bessel_k};
pub use diff::{finite_difference_gradient, finite_difference_jacobian, relative_step, RealFunctionTolerances};
pub use optim::{minimize_bounded, OptimOptions, OptimResult};
pub use rng::SplitRng;
pub use special::{digamma, gauss_cdf_pdf, ln_gamma, norm_cdf, norm_pdf};
pub use student::{student_t, student_t_quantile, StudentT};

/// Type-7 (linear interpolation) sample quantile of sorted data.
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    if n == 0 {
        return f64::NAN;
    }
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = h.floor() as usize;
    let hi = (lo + 1).min(n - 1);
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Mean and population standard deviation.
pub fn mean_sd_population(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
    (m, v.sqrt())
}

/// Mean and sample (n − 1) standard deviation.
pub fn mean_sd_sample(x: &[f64]) -> (f64, f64) {
    let n = x.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let m = x.iter().sum::<f64>() / n as f64;
    if n < 2 {
        return (m, 0.0);
    }
    let v = x.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (n - 1) as f64;
    (m, v.sqrt())
}

/// Asymptotic Kolmogorov distribution survival function P[K > λ].
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 0.2 {
        return 1.0;
    }
    let mut s = 0.0;
    for k in 1..=100 {
        let k = k as f64;
        let term = (-2.0 * k * k * lambda * lambda).exp();
        s += if (k as i64) % 2 == 1 { term } else { -term };
        if term < 1e-18 {
            break;
        }
    }
    (2.0 * s).clamp(0.0, 1.0)
}

/// Two-sample Kolmogorov–Smirnov statistic and asymptotic p-value.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> (f64, f64) {
    let mut x = a.to_vec();
    let mut y = b.to_vec();
    x.sort_by(f64::total_cmp);
    y.sort_by(f64::total_cmp);
    let (n, m) = (x.len(), y.len());
    let (mut i, mut j, mut d) = (0, 0, 0.0f64);
    while i < n && j < m {
        let v = x[i].min(y[j]);
        while i < n && x[i] <= v {
            i += 1;
        }
        while j < m && y[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / n as f64 - j as f64 / m as f64).abs());
    }
    let ne = (n * m) as f64 / (n + m) as f64;
    let lam = (ne.sqrt() + 0.12 + 0.11 / ne.sqrt()) * d;
    (d, kolmogorov_sf(lam))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quantiles_type7() {
        let x = [1.0, 2.0, 3.0, 4.0];
        assert_eq!(quantile_sorted(&x, 0.5), 2.5);
        assert_eq!(quantile_sorted(&x, 0.0), 1.0);
        assert_eq!(quantile_sorted(&x, 1.0), 4.0);
        assert!((quantile_sorted(&x, 0.025) - 1.075).abs() < 1e-12);
    }

    #[test]
    fn kolmogorov_values() {
        // classical critical values
        assert!((kolmogorov_sf(1.358) - 0.05).abs() < 1e-3);
        assert!((kolmogorov_sf(1.628) - 0.01).abs() < 1e-3);
    }

    #[test]
    fn sds() {
        let (m, s) = mean_sd_population(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        let (_, s) = mean_sd_sample(&[1.0, 3.0]);
        assert!((s - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(mean_sd_population(&[5.0]).1, 0.0);
    }
}
