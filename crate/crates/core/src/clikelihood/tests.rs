use super::*;
use crate::margins::{DataMatrix, ScaleTag};
use crate::models::{correlation, ModelId, ParamVector, PriorSpec};
use crate::numerics::{finite_difference_gradient, SplitRng};
use crate::simulate::simulate_dataset;
use crate::spatial::{site_pairs, SiteSet};
use nalgebra::DMatrix;
use rand::Rng;

fn params_for(model: ModelId, rng: &mut SplitRng) -> ParamVector {
    ParamVector {
        lambda: rng.random_range(0.5..3.0),
        kappa: rng.random_range(0.3..1.8),
        alpha: rng.random_range(0.1..1.4),
        ratio: rng.random_range(0.5..2.5),
        nu: model.has_nu().then(|| rng.random_range(0.5..6.0)),
    }
}

fn fd_score(model: ModelId, p: &ParamVector, z1: f64, z2: f64, x1: [f64; 2], x2: [f64; 2]) -> Vec<f64> {
    let theta = p.to_vec();
    let f = |t: &[f64]| {
        let q = ParamVector::from_slice(model, t).unwrap();
        biv_loglik(model, &q, z1, z2, x1, x2).unwrap()
    };
    (0..theta.len())
        .map(|i| {
            let h = 1e-5 * theta[i].abs().max(0.1);
            let mut a = theta.clone();
            let mut b = theta.clone();
            a[i] += h;
            b[i] -= h;
            let mut a2 = theta.clone();
            let mut b2 = theta.clone();
            a2[i] += 2.0 * h;
            b2[i] -= 2.0 * h;
            (8.0 * (f(&a) - f(&b)) - (f(&a2) - f(&b2))) / (12.0 * h)
        })
        .collect()
}

#[test]
fn score_matches_finite_differences() {
    let mut rng = SplitRng::new(77);
    for model in ModelId::ALL {
        for _ in 0..15 {
            let p = params_for(model, &mut rng);
            let z1 = (-1.0 / rng.random::<f64>().ln()).max(0.05);
            let z2 = (-1.0 / rng.random::<f64>().ln()).max(0.05);
            let x1 = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let x2 = [rng.random_range(0.0..3.0), rng.random_range(0.0..3.0)];
            let s = biv_score(model, &p, z1, z2, x1, x2).unwrap();
            let fd = fd_score(model, &p, z1, z2, x1, x2);
            assert_eq!(s.len(), model.n_params());
            for (i, (a, b)) in s.iter().zip(&fd).enumerate() {
                let tol = if i == 4 { 1e-3 } else { 1e-4 };
                assert!(
                    (a - b).abs() <= tol * b.abs().max(1e-2),
                    "{model} component {i}: analytic {a} vs fd {b} at {p:?} z=({z1},{z2})"
                );
            }
        }
    }
}

#[test]
fn loglik_symmetric() {
    let mut rng = SplitRng::new(5);
    for model in ModelId::ALL {
        let p = params_for(model, &mut rng);
        let (x1, x2) = ([0.0, 0.0], [1.0, 0.5]);
        let a = biv_loglik(model, &p, 0.7, 3.1, x1, x2).unwrap();
        let b = biv_loglik(model, &p, 3.1, 0.7, x2, x1).unwrap();
        assert!((a - b).abs() < 1e-9 * a.abs().max(1.0), "{model}: {a} vs {b}");
    }
}

#[test]
fn independence_limit() {
    let p = ParamVector { lambda: 1e-3, kappa: 1.0, alpha: 0.0, ratio: 1.0, nu: None };
    let l = biv_loglik(ModelId::BrownResnick, &p, 1.0, 1.0, [0.0, 0.0], [50.0, 0.0]).unwrap();
    assert!((l + 2.0).abs() < 1e-9, "{l}");
}

#[test]
fn alpha_derivative_vanishes_when_isotropic() {
    for model in ModelId::ALL {
        let p = ParamVector { lambda: 1.3, kappa: 1.1, alpha: 0.4, ratio: 1.0, nu: model.has_nu().then_some(2.0) };
        let s = biv_score(model, &p, 1.2, 0.8, [0.0, 0.0], [0.7, 0.9]).unwrap();
        assert_eq!(s[2], 0.0, "{model}");
    }
}

fn mixed_partial_cdf(model: ModelId, p: &ParamVector, z1: f64, z2: f64, x1: [f64; 2], x2: [f64; 2]) -> f64 {
    let cdf = |a: f64, b: f64| (-exponent_measure(model, p, a, b, x1, x2).unwrap().v).exp();
    let est = |e: f64| {
        let (e1, e2) = (e * z1, e * z2);
        (cdf(z1 + e1, z2 + e2) - cdf(z1 + e1, z2 - e2) - cdf(z1 - e1, z2 + e2) + cdf(z1 - e1, z2 - e2)) / (4.0 * e1 * e2)
    };
    let (a, b) = (est(2e-3), est(1e-3));
    (4.0 * b - a) / 3.0
}

#[test]
fn density_is_mixed_partial_of_cdf() {
    let mut rng = SplitRng::new(11);
    for model in [ModelId::BrownResnick, ModelId::ExtTWm, ModelId::ExtTPe] {
        for _ in 0..4 {
            let p = params_for(model, &mut rng);
            for &(z1, z2) in &[(0.5, 0.8), (1.0, 2.5), (3.0, 1.5)] {
                let (x1, x2) = ([0.0, 0.0], [0.9, 0.4]);
                let dens = biv_loglik(model, &p, z1, z2, x1, x2).unwrap().exp();
                let fd = mixed_partial_cdf(model, &p, z1, z2, x1, x2);
                assert!((dens - fd).abs() <= 1e-6 * dens, "{model} {p:?} ({z1},{z2}): {dens} vs {fd}");
            }
        }
    }
}

#[test]
fn frechet_margins_of_exponent_measure() {
    let p = ParamVector { lambda: 1.0, kappa: 1.2, alpha: 0.3, ratio: 1.5, nu: None };
    for z in [0.3, 1.0, 4.0] {
        let v = exponent_measure(ModelId::BrownResnick, &p, z, 1e8, [0.0, 0.0], [0.5, 0.5]).unwrap().v;
        assert!((v - 1.0 / z).abs() < 1e-6);
    }
}

#[test]
fn copula_closed_form_matches_generic() {
    let grid = [0.2, 0.7, 1.0, 3.0, 20.0];
    for rho in [-0.5, 0.0, 0.8] {
        for nu in [1.0, 5.0] {
            let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
            for &z1 in &grid {
                for &z2 in &grid {
                    let generic = tcop_loglik_generic(&[z1, z2], &sigma, nu).unwrap();
                    let closed = super::bivariate::tcop_loglik::<0>(
                        crate::numerics::dual::Dual::constant(rho),
                        crate::numerics::dual::Dual::constant(nu),
                        super::bivariate::copula_const(crate::numerics::dual::Dual::constant(nu)),
                        super::bivariate::copula_eta(z1, nu),
                        super::bivariate::copula_eta(z2, nu),
                        super::bivariate::ln_frechet_density(z1) + super::bivariate::ln_frechet_density(z2),
                    )
                    .v;
                    assert!((generic - closed).abs() < 1e-10, "ρ={rho} ν={nu} z=({z1},{z2})");
                }
            }
        }
    }
}

#[test]
fn copula_bivariate_matches_correlation_route() {
    let p = ParamVector { lambda: 1.4, kappa: 0.9, alpha: 0.0, ratio: 1.0, nu: Some(3.0) };
    let rho = correlation(crate::models::CorrFamily::Pe, 1.0 / 1.4, 1.0, 0.9).unwrap();
    let sigma = DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0]);
    let a = biv_loglik(ModelId::TCopPe, &p, 0.9, 2.0, [0.0, 0.0], [1.0, 0.0]).unwrap();
    let b = tcop_loglik_generic(&[0.9, 2.0], &sigma, 3.0).unwrap();
    assert!((a - b).abs() < 1e-10);
}

fn small_sites() -> SiteSet {
    SiteSet::from_coords(vec![[0.0, 0.0], [1.0, 0.2], [0.3, 1.1], [1.4, 1.3]]).unwrap()
}

fn frechet(rows: Vec<Vec<f64>>, h: usize) -> DataMatrix {
    DataMatrix::new(rows, ScaleTag::UnitFrechet, (1..=h).map(|i| format!("s{i}")).collect()).unwrap()
}

#[test]
fn pairwise_sum_structure() {
    let sites = SiteSet::from_coords(vec![[0.0, 0.0], [1.0, 0.0]]).unwrap();
    let p = ParamVector { lambda: 1.0, kappa: 1.0, alpha: 0.2, ratio: 1.3, nu: Some(2.0) };
    let one = frechet(vec![vec![0.8, 1.7]], 2);
    for model in ModelId::ALL {
        let q = ParamVector { nu: model.has_nu().then_some(2.0), ..p };
        let pl = pairwise_loglik(model, &q, &one, &sites, None).unwrap();
        let b = biv_loglik(model, &q, 0.8, 1.7, [0.0, 0.0], [1.0, 0.0]).unwrap();
        assert!((pl - b).abs() < 1e-12);
        let w2 = pairwise_loglik(model, &q, &one, &sites, Some(&[2.0])).unwrap();
        assert!((w2 - 2.0 * pl).abs() < 1e-12);
    }

    let sites3 = SiteSet::from_coords(vec![[0.0, 0.0], [1.0, 0.0], [0.2, 0.9]]).unwrap();
    let data = frechet(vec![vec![0.5, 1.2, 2.0], vec![3.0, 0.9, 1.1]], 3);
    for model in ModelId::ALL {
        let q = ParamVector { nu: model.has_nu().then_some(2.0), ..p };
        let mut brute = 0.0;
        for row in &data.values {
            for (i, j) in site_pairs(3) {
                brute += biv_loglik(model, &q, row[i], row[j], sites3.coords[i], sites3.coords[j]).unwrap();
            }
        }
        let pl = pairwise_loglik(model, &q, &data, &sites3, None).unwrap();
        assert!((pl - brute).abs() < 1e-10);
    }
}

#[test]
fn composite_score_additive_and_matches_differences() {
    let sites = small_sites();
    let mut rng = SplitRng::new(9);
    for model in ModelId::ALL {
        let p = params_for(model, &mut rng);
        let data = simulate_dataset(model, &p, &sites, 10, &mut rng).unwrap();
        let head = frechet(data.values[..4].to_vec(), 4);
        let tail = frechet(data.values[4..].to_vec(), 4);
        let s = composite_score(model, &p, &data, &sites, None).unwrap();
        let s1 = composite_score(model, &p, &head, &sites, None).unwrap();
        let s2 = composite_score(model, &p, &tail, &sites, None).unwrap();
        for i in 0..s.len() {
            assert!((s[i] - s1[i] - s2[i]).abs() < 1e-9 * s[i].abs().max(1.0));
        }
        let theta = p.to_vec();
        let fd = finite_difference_gradient(
            |t| pairwise_loglik(model, &ParamVector::from_slice(model, t).unwrap(), &data, &sites, None).unwrap(),
            &theta,
            1e-6,
        )
        .unwrap();
        for (i, (a, b)) in s.iter().zip(&fd).enumerate() {
            let tol = if i == 4 { 1e-3 } else { 1e-4 };
            assert!((a - b).abs() <= tol * b.abs().max(1.0), "{model} {i}: {a} vs {b}");
        }
    }
}

#[test]
fn score_summary_blocks() {
    let sites = small_sites();
    let mut rng = SplitRng::new(3);
    let data = simulate_dataset(ModelId::BrownResnick, &params_for(ModelId::BrownResnick, &mut rng), &sites, 6, &mut rng)
        .unwrap();
    let fits: Vec<(ModelId, ParamVector)> = ModelId::ALL.iter().map(|&m| (m, params_for(m, &mut rng))).collect();
    let ctx = ScoreContext::new(fits.clone());
    let s = score_summary(&data, &sites, &ctx).unwrap();
    assert_eq!(s.len(), 24);
    assert_eq!(ctx.component_names().len(), 24);
    let mut off = 0;
    for (m, p) in fits {
        let block = composite_score(m, &p, &data, &sites, None).unwrap();
        assert_eq!(&s[off..off + block.len()], block.as_slice());
        off += block.len();
    }
}

#[test]
fn mcle_reaches_stationary_point() {
    let coords: Vec<[f64; 2]> = (0..6).map(|i| [(i % 3) as f64, (i / 3) as f64 * 1.3]).collect();
    let sites = SiteSet::from_coords(coords).unwrap();
    let truth = ParamVector { lambda: 1.5, kappa: 1.0, alpha: 0.5, ratio: 1.5, nu: None };
    let mut rng = SplitRng::new(12);
    let data = simulate_dataset(ModelId::BrownResnick, &truth, &sites, 40, &mut rng).unwrap();
    let opts = McleOptions { n_converged: 2, max_starts: 10, ..McleOptions::default() };
    let fit = mcle_fit(ModelId::BrownResnick, &data, &sites, &PriorSpec::default(), None, &opts, &mut rng).unwrap();
    assert!(fit.score_norm <= 1e-3, "score norm {}", fit.score_norm);
    let at_truth = pairwise_loglik(ModelId::BrownResnick, &truth, &data, &sites, None).unwrap();
    assert!(fit.loglik >= at_truth);
    assert!(crate::models::alpha_in_range(fit.params.alpha));

    let c = clic_at(ModelId::BrownResnick, &fit.params, &data, &sites, None).unwrap();
    assert!(c.penalty > 0.0);
    assert!((c.clic - (-2.0 * fit.loglik + 2.0 * c.penalty)).abs() < 1e-8);
}
