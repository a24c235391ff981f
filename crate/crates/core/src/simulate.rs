//! Exact simulation of max-stable processes via extremal functions and of
//! Student-t copula fields with unit Fréchet margins.

use crate::error::{Error, Result};
use crate::margins::{DataMatrix, ScaleTag};
use crate::models::{correlation, variogram_br, ModelId, ParamVector};
use crate::numerics::linalg::cholesky_jittered;
use crate::numerics::student;
use crate::numerics::SplitRng;
use crate::spatial::{aniso_distance, SiteSet};
use nalgebra::DMatrix;
use rand::Rng;
use rand_distr::{ChiSquared, Distribution, Exp1, StandardNormal};

/// Row-major lower-triangular factor.
#[derive(Debug, Clone)]
struct Lower {
    n: usize,
    l: Vec<f64>,
}

impl Lower {
    fn from_matrix(m: &DMatrix<f64>) -> Self {
        let n = m.nrows();
        let mut l = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..=i {
                l[i * n + j] = m[(i, j)];
            }
        }
        Self { n, l }
    }

    /// out = L·w for a freshly drawn standard normal w.
    fn gaussian<R: Rng + ?Sized>(&self, rng: &mut R, w: &mut Vec<f64>, out: &mut [f64]) {
        w.clear();
        w.extend((0..self.n).map(|_| rng.sample::<f64, _>(StandardNormal)));
        for i in 0..self.n {
            let row = &self.l[i * self.n..i * self.n + i + 1];
            out[i] = row.iter().zip(w.iter()).map(|(a, b)| a * b).sum();
        }
    }
}

#[derive(Debug, Clone)]
enum Law {
    BrownResnick {
        /// γ(x_j − x_k), indexed [k][j]
        gamma: Vec<Vec<f64>>,
        factors: Vec<Lower>,
    },
    ExtremalT {
        rho: Vec<Vec<f64>>,
        factors: Vec<Lower>,
        nu: f64,
        chi: ChiSquared<f64>,
    },
    Copula {
        factor: Lower,
        nu: f64,
        chi: ChiSquared<f64>,
    },
}

/// Precomputed simulator for one (model, parameters, sites) combination.
#[derive(Debug, Clone)]
pub struct Simulator {
    model: ModelId,
    /// Unique-location index of every input site.
    site_map: Vec<usize>,
    /// First input index of each unique location.
    unique_first: Vec<usize>,
    law: Law,
}

fn dedupe(coords: &[[f64; 2]]) -> (Vec<usize>, Vec<[f64; 2]>, Vec<usize>) {
    let mut map = Vec::with_capacity(coords.len());
    let mut uniq: Vec<[f64; 2]> = Vec::new();
    let mut first = Vec::new();
    for (i, c) in coords.iter().enumerate() {
        match uniq.iter().position(|u| u == c) {
            Some(p) => map.push(p),
            None => {
                map.push(uniq.len());
                uniq.push(*c);
                first.push(i);
            }
        }
    }
    (map, uniq, first)
}

impl Simulator {
    pub fn new(model: ModelId, params: &ParamVector, sites: &SiteSet) -> Result<Self> {
        Self::from_coords(model, params, &sites.coords)
    }

    pub fn from_coords(model: ModelId, params: &ParamVector, coords: &[[f64; 2]]) -> Result<Self> {
        params.validate(model)?;
        if coords.is_empty() {
            return Err(Error::invalid("simulation needs at least one site"));
        }
        let (site_map, uniq, unique_first) = dedupe(coords);
        let m = uniq.len();
        let aniso = params.aniso();
        let dist = |i: usize, j: usize| aniso_distance(uniq[i], uniq[j], &aniso);
        let law = match model {
            ModelId::BrownResnick => {
                let mut gamma = vec![vec![0.0; m]; m];
                for i in 0..m {
                    for j in 0..m {
                        gamma[i][j] = variogram_br(dist(i, j), params.lambda, params.kappa)?;
                    }
                }
                let mut factors = Vec::with_capacity(m);
                for k in 0..m {
                    let others: Vec<usize> = (0..m).filter(|&j| j != k).collect();
                    let c = DMatrix::from_fn(m - 1, m - 1, |a, b| {
                        let (i, j) = (others[a], others[b]);
                        gamma[i][k] + gamma[j][k] - gamma[i][j]
                    });
                    let labels: Vec<usize> = others.iter().map(|&o| unique_first[o]).collect();
                    let l = cholesky_jittered(&c, "Brown-Resnick extremal function covariance", Some(&labels))?;
                    factors.push(Lower::from_matrix(&l));
                }
                Law::BrownResnick { gamma, factors }
            }
            ModelId::ExtTWm | ModelId::ExtTPe => {
                let family = model.corr_family().expect("correlation family");
                let nu = params.nu.expect("validated");
                let mut rho = vec![vec![1.0; m]; m];
                for i in 0..m {
                    for j in (i + 1)..m {
                        let r = correlation(family, dist(i, j), params.lambda, params.kappa)?;
                        rho[i][j] = r;
                        rho[j][i] = r;
                    }
                }
                let mut factors = Vec::with_capacity(m);
                for k in 0..m {
                    let others: Vec<usize> = (0..m).filter(|&j| j != k).collect();
                    let c = DMatrix::from_fn(m - 1, m - 1, |a, b| {
                        let (i, j) = (others[a], others[b]);
                        rho[i][j] - rho[i][k] * rho[j][k]
                    });
                    let labels: Vec<usize> = others.iter().map(|&o| unique_first[o]).collect();
                    let l = cholesky_jittered(&c, "extremal-t conditional dispersion", Some(&labels))?;
                    factors.push(Lower::from_matrix(&l));
                }
                let chi = ChiSquared::new(nu + 1.0).map_err(|e| Error::domain(e.to_string()))?;
                Law::ExtremalT { rho, factors, nu, chi }
            }
            ModelId::TCopWm | ModelId::TCopPe => {
                let family = model.corr_family().expect("correlation family");
                let nu = params.nu.expect("validated");
                let sigma = DMatrix::from_fn(m, m, |i, j| {
                    if i == j {
                        1.0
                    } else {
                        correlation(family, dist(i, j), params.lambda, params.kappa).unwrap_or(f64::NAN)
                    }
                });
                if sigma.iter().any(|v| !v.is_finite()) {
                    return Err(Error::domain("correlation evaluation failed"));
                }
                let labels = unique_first.clone();
                let l = cholesky_jittered(&sigma, "t copula correlation", Some(&labels))?;
                let chi = ChiSquared::new(nu).map_err(|e| Error::domain(e.to_string()))?;
                Law::Copula { factor: Lower::from_matrix(&l), nu, chi }
            }
        };
        Ok(Self { model, site_map, unique_first, law })
    }

    pub fn model(&self) -> ModelId {
        self.model
    }

    fn n_unique(&self) -> usize {
        self.unique_first.len()
    }

    /// Spectral function conditioned to equal 1 at unique site `k`.
    fn extremal_function<R: Rng + ?Sized>(&self, k: usize, rng: &mut R, w: &mut Vec<f64>, g: &mut [f64], y: &mut [f64]) {
        let m = self.n_unique();
        match &self.law {
            Law::BrownResnick { gamma, factors } => {
                factors[k].gaussian(rng, w, g);
                let mut a = 0;
                for j in 0..m {
                    if j == k {
                        y[j] = 1.0;
                    } else {
                        y[j] = (g[a] - gamma[k][j]).exp();
                        a += 1;
                    }
                }
            }
            Law::ExtremalT { rho, factors, nu, chi } => {
                factors[k].gaussian(rng, w, g);
                let s = chi.sample(rng).sqrt();
                let mut a = 0;
                for j in 0..m {
                    if j == k {
                        y[j] = 1.0;
                    } else {
                        let t = rho[k][j] + g[a] / s;
                        y[j] = if t > 0.0 { t.powf(*nu) } else { 0.0 };
                        a += 1;
                    }
                }
            }
            Law::Copula { .. } => unreachable!("copula fields have no extremal functions"),
        }
    }

    /// One realisation on the unique sites and the number of extremal
    /// functions drawn.
    fn draw_unique<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let m = self.n_unique();
        match &self.law {
            Law::Copula { factor, nu, chi } => loop {
                let mut w = Vec::with_capacity(m);
                let mut g = vec![0.0; m];
                factor.gaussian(rng, &mut w, &mut g);
                let s = chi.sample(rng);
                let scale = (nu / s).sqrt();
                let z: Vec<f64> = g
                    .iter()
                    .map(|&x| {
                        let t = x * scale;
                        let (lo, up) = student::tails(t, *nu);
                        let ln_f = if t > 0.0 { (-up).ln_1p() } else { lo.ln() };
                        -1.0 / ln_f
                    })
                    .collect();
                if z.iter().all(|v| v.is_finite() && *v > 0.0) {
                    return (z, 0);
                }
            },
            _ => {
                let mut z = vec![0.0; m];
                let mut w = Vec::with_capacity(m);
                let mut g = vec![0.0; m.max(1)];
                let mut y = vec![0.0; m];
                let mut count = 0;
                for k in 0..m {
                    let mut gamma: f64 = rng.sample(Exp1);
                    while 1.0 / gamma > z[k] {
                        self.extremal_function(k, rng, &mut w, &mut g, &mut y);
                        count += 1;
                        let zeta = 1.0 / gamma;
                        if (0..k).all(|j| zeta * y[j] < z[j]) {
                            for j in 0..m {
                                let v = zeta * y[j];
                                if v > z[j] {
                                    z[j] = v;
                                }
                            }
                        }
                        gamma += rng.sample::<f64, _>(Exp1);
                    }
                }
                (z, count)
            }
        }
    }

    /// One realisation at every input site and the number of extremal
    /// functions drawn.
    pub fn draw_counted<R: Rng + ?Sized>(&self, rng: &mut R) -> (Vec<f64>, usize) {
        let (u, c) = self.draw_unique(rng);
        (self.site_map.iter().map(|&i| u[i]).collect(), c)
    }

    pub fn draw<R: Rng + ?Sized>(&self, rng: &mut R) -> Vec<f64> {
        self.draw_counted(rng).0
    }

    /// `n_reps` independent realisations as a unit Fréchet data matrix.
    pub fn dataset<R: Rng + ?Sized>(&self, ids: &[String], n_reps: usize, rng: &mut R) -> Result<DataMatrix> {
        if n_reps == 0 {
            return Err(Error::invalid("number of replicates must be positive"));
        }
        let values = (0..n_reps).map(|_| self.draw(rng)).collect();
        DataMatrix::new(values, ScaleTag::UnitFrechet, ids.to_vec())
    }
}

/// One exact realisation of a max-stable model.
pub fn simulate_maxstable(model: ModelId, params: &ParamVector, sites: &SiteSet, rng: &mut SplitRng) -> Result<Vec<f64>> {
    if !model.is_maxstable() {
        return Err(Error::invalid(format!("{model} is not a max-stable model")));
    }
    Ok(Simulator::new(model, params, sites)?.draw(rng))
}

/// One realisation of a Student-t copula model with unit Fréchet margins.
pub fn simulate_tcopula(model: ModelId, params: &ParamVector, sites: &SiteSet, rng: &mut SplitRng) -> Result<Vec<f64>> {
    if model.is_maxstable() {
        return Err(Error::invalid(format!("{model} is not a copula model")));
    }
    Ok(Simulator::new(model, params, sites)?.draw(rng))
}

/// `n_reps` independent realisations of any model.
pub fn simulate_dataset(
    model: ModelId,
    params: &ParamVector,
    sites: &SiteSet,
    n_reps: usize,
    rng: &mut SplitRng,
) -> Result<DataMatrix> {
    Simulator::new(model, params, sites)?.dataset(&sites.ids, n_reps, rng)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::margins::gumbel_ks;

    fn br(lambda: f64, kappa: f64) -> ParamVector {
        ParamVector { lambda, kappa, alpha: 0.0, ratio: 1.0, nu: None }
    }

    #[test]
    fn single_site_margins() {
        let mut rng = SplitRng::new(4);
        for (m, p) in [
            (ModelId::BrownResnick, br(1.0, 1.0)),
            (ModelId::ExtTPe, ParamVector { nu: Some(2.0), ..br(1.0, 1.0) }),
            (ModelId::TCopWm, ParamVector { nu: Some(0.5), ..br(1.0, 1.0) }),
        ] {
            let sim = Simulator::from_coords(m, &p, &[[0.0, 0.0]]).unwrap();
            let col: Vec<f64> = (0..10_000).map(|_| sim.draw(&mut rng)[0]).collect();
            let (d, pv) = gumbel_ks(&col);
            assert!(pv > 0.01, "{m}: D={d}");
        }
    }

    #[test]
    fn coincident_sites_identical() {
        let sites = SiteSet::from_coords(vec![[0.0, 0.0], [0.0, 0.0], [1.0, 0.5]]).unwrap();
        let mut rng = SplitRng::new(1);
        for m in ModelId::ALL {
            let p = ParamVector { nu: m.has_nu().then_some(3.0), ..br(1.0, 1.0) };
            for _ in 0..50 {
                let z = Simulator::new(m, &p, &sites).unwrap().draw(&mut rng);
                assert_eq!(z[0], z[1]);
                assert!(z.iter().all(|v| *v > 0.0));
            }
        }
    }

    #[test]
    fn deterministic_and_shaped() {
        let coords: Vec<[f64; 2]> = (0..25).map(|i| [(i % 5) as f64, (i / 5) as f64]).collect();
        let sites = SiteSet::from_coords(coords).unwrap();
        let p = br(2.0, 1.0);
        let a = simulate_dataset(ModelId::BrownResnick, &p, &sites, 18, &mut SplitRng::new(3)).unwrap();
        let b = simulate_dataset(ModelId::BrownResnick, &p, &sites, 18, &mut SplitRng::new(3)).unwrap();
        assert_eq!(a, b);
        assert_eq!((a.n_reps(), a.n_sites()), (18, 25));
        assert!(a.values.iter().flatten().all(|v| *v > 0.0));
    }

    #[test]
    fn extremal_function_count_near_h() {
        let coords: Vec<[f64; 2]> = (0..10).map(|i| [(i as f64 * 0.7).sin() * 3.0, i as f64 * 0.4]).collect();
        let sim = Simulator::from_coords(ModelId::BrownResnick, &br(1.5, 1.0), &coords).unwrap();
        let mut rng = SplitRng::new(8);
        let runs = 1000;
        let total: usize = (0..runs).map(|_| sim.draw_counted(&mut rng).1).sum();
        let mean = total as f64 / runs as f64;
        assert!((mean - 10.0).abs() <= 1.5, "mean draws {mean}");
    }

    #[test]
    fn copula_kendall_tau() {
        // Kendall's τ of an elliptical pair equals (2/π) arcsin ρ
        let coords = [[0.0, 0.0], [1.0, 0.0]];
        let p = ParamVector { lambda: 1.0, kappa: 1.0, alpha: 0.0, ratio: 1.0, nu: Some(4.0) };
        let rho = (-1.0f64).exp();
        let sim = Simulator::from_coords(ModelId::TCopPe, &p, &coords).unwrap();
        let mut rng = SplitRng::new(21);
        let n = 100_000;
        let draws: Vec<Vec<f64>> = (0..n).map(|_| sim.draw(&mut rng)).collect();
        let a: Vec<f64> = draws.iter().map(|z| z[0]).collect();
        let b: Vec<f64> = draws.iter().map(|z| z[1]).collect();
        let tau = crate::summaries::kendall_tau(&a, &b).unwrap();
        let want = 2.0 / std::f64::consts::PI * rho.asin();
        assert!((tau - want).abs() < 0.01, "tau={tau} want={want}");
    }

    #[test]
    fn rejects_wrong_family() {
        let sites = SiteSet::from_coords(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
        let mut rng = SplitRng::new(0);
        assert!(simulate_maxstable(ModelId::TCopPe, &ParamVector { nu: Some(1.0), ..br(1.0, 1.0) }, &sites, &mut rng).is_err());
        assert!(simulate_tcopula(ModelId::BrownResnick, &br(1.0, 1.0), &sites, &mut rng).is_err());
    }
}
