//! Empirical dependence indicators and the summary vector built from them.

use crate::clikelihood::{score_summary, ScoreContext};
use crate::error::{Error, Result};
use crate::margins::{DataMatrix, ScaleTag};
use crate::numerics::mean_sd_population;
use crate::spatial::{site_pairs, site_triplets, PairBinning, SiteSet, TripletClustering};
use serde::{Deserialize, Serialize};

/// ν̂_F = (1/2n) Σ |F(z1ᵢ) − F(z2ᵢ)| with F(z) = exp(−1/z).
pub fn fmadogram(z1: &[f64], z2: &[f64]) -> Result<f64> {
    check_pair(z1, z2, 1)?;
    let s: f64 = z1
        .iter()
        .zip(z2)
        .map(|(a, b)| ((-1.0 / a).exp() - (-1.0 / b).exp()).abs())
        .sum();
    Ok(s / (2.0 * z1.len() as f64))
}

/// θ̂ = n / Σᵢ 1 / maxₗ Zᵢ(xₗ).
pub fn extremal_coef_estimate(columns: &[&[f64]]) -> Result<f64> {
    let n = columns.first().map_or(0, |c| c.len());
    if columns.is_empty() || n == 0 {
        return Err(Error::invalid("extremal coefficient needs non-empty columns"));
    }
    if columns.iter().any(|c| c.len() != n) {
        return Err(Error::invalid("columns differ in length"));
    }
    let mut acc = 0.0;
    for i in 0..n {
        let mut m = 0.0f64;
        for c in columns {
            let v = c[i];
            if !(v > 0.0) {
                return Err(Error::domain(format!("non-positive value {v} in replicate {i}")));
            }
            m = m.max(v);
        }
        acc += 1.0 / m;
    }
    Ok(n as f64 / acc)
}

fn check_pair(z1: &[f64], z2: &[f64], min_n: usize) -> Result<()> {
    if z1.len() != z2.len() {
        return Err(Error::invalid(format!("length mismatch: {} vs {}", z1.len(), z2.len())));
    }
    if z1.len() < min_n {
        return Err(Error::invalid(format!("need at least {min_n} observations, got {}", z1.len())));
    }
    Ok(())
}

/// Kendall's τ-a via Knight's O(n log n) algorithm.
pub fn kendall_tau(z1: &[f64], z2: &[f64]) -> Result<f64> {
    check_pair(z1, z2, 2)?;
    let n = z1.len();
    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| z1[a].total_cmp(&z1[b]).then(z2[a].total_cmp(&z2[b])));

    let ties = |keys: &dyn Fn(usize) -> bool| -> u64 {
        // keys(i) says whether position i ties with position i−1
        let mut total = 0u64;
        let mut run = 1u64;
        for i in 1..n {
            if keys(i) {
                run += 1;
            } else {
                total += run * (run - 1) / 2;
                run = 1;
            }
        }
        total + run * (run - 1) / 2
    };
    let t_x = ties(&|i| z1[idx[i]] == z1[idx[i - 1]]);
    let t_xy = ties(&|i| z1[idx[i]] == z1[idx[i - 1]] && z2[idx[i]] == z2[idx[i - 1]]);

    let mut ys: Vec<f64> = idx.iter().map(|&i| z2[i]).collect();
    let mut buf = vec![0.0; n];
    let swaps = merge_count(&mut ys, &mut buf);
    let t_y = ties(&|i| ys[i] == ys[i - 1]);

    let n0 = (n * (n - 1) / 2) as f64;
    let s = n0 - t_x as f64 - t_y as f64 + t_xy as f64 - 2.0 * swaps as f64;
    Ok(s / n0)
}

/// Sorts `v` and returns the number of strictly inverted pairs.
fn merge_count(v: &mut [f64], buf: &mut [f64]) -> u64 {
    let n = v.len();
    if n < 2 {
        return 0;
    }
    let mid = n / 2;
    let mut count = merge_count(&mut v[..mid], &mut buf[..mid]) + merge_count(&mut v[mid..], &mut buf[mid..]);
    let (mut i, mut j, mut k) = (0, mid, 0);
    while i < mid && j < n {
        if v[j] < v[i] {
            buf[k] = v[j];
            count += (mid - i) as u64;
            j += 1;
        } else {
            buf[k] = v[i];
            i += 1;
        }
        k += 1;
    }
    buf[k..k + mid - i].copy_from_slice(&v[i..mid]);
    k += mid - i;
    buf[k..k + n - j].copy_from_slice(&v[j..n]);
    v.copy_from_slice(&buf[..n]);
    count
}

/// Named summary statistics with the list of non-finite components.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryVector {
    pub names: Vec<String>,
    pub values: Vec<f64>,
    #[serde(default)]
    pub invalid: Vec<String>,
}

impl SummaryVector {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_valid(&self) -> bool {
        self.invalid.is_empty()
    }

    /// The values, or an error naming the non-finite components.
    pub fn require_valid(&self) -> Result<&[f64]> {
        if self.is_valid() {
            Ok(&self.values)
        } else {
            Err(Error::InvalidSummary(self.invalid.clone()))
        }
    }

    fn push(&mut self, name: String, v: f64) {
        if !v.is_finite() {
            self.invalid.push(name.clone());
        }
        self.names.push(name);
        self.values.push(v);
    }

    /// Header and value rows for a named-column CSV.
    pub fn to_csv_string(&self) -> String {
        let vals: Vec<String> = self.values.iter().map(|v| v.to_string()).collect();
        format!("{}\n{}\n", self.names.join(","), vals.join(","))
    }
}

fn grouped_mean_sd(values: &[f64], membership: &[usize], groups: usize) -> Vec<(f64, f64)> {
    let mut buckets = vec![Vec::new(); groups];
    for (v, &g) in values.iter().zip(membership) {
        buckets[g].push(*v);
    }
    buckets
        .iter()
        .map(|b| if b.is_empty() { (f64::NAN, f64::NAN) } else { mean_sd_population(b) })
        .collect()
}

/// Pair and triplet indicators aggregated by bin and cluster, in the order
/// F-madogram, pairwise θ̂, tripletwise θ̂, Kendall τ (mean then sd per
/// group).
pub fn dependence_summaries(
    data: &DataMatrix,
    sites: &SiteSet,
    bins: &PairBinning,
    clusters: &TripletClustering,
) -> Result<SummaryVector> {
    check_alignment(data, sites)?;
    let h = sites.len();
    let cols = data.columns();
    let pairs = site_pairs(h);
    let triplets = site_triplets(h);
    if bins.membership.len() != pairs.len() || clusters.membership.len() != triplets.len() {
        return Err(Error::invalid("binning or clustering was built for a different site set"));
    }
    let mut fmado = Vec::with_capacity(pairs.len());
    let mut ext2 = Vec::with_capacity(pairs.len());
    let mut tau = Vec::with_capacity(pairs.len());
    for &(i, j) in &pairs {
        fmado.push(fmadogram(&cols[i], &cols[j])?);
        ext2.push(extremal_coef_estimate(&[&cols[i], &cols[j]])?);
        tau.push(if data.n_reps() >= 2 { kendall_tau(&cols[i], &cols[j])? } else { f64::NAN });
    }
    let ext3: Vec<f64> = triplets
        .iter()
        .map(|&(i, j, k)| extremal_coef_estimate(&[&cols[i], &cols[j], &cols[k]]))
        .collect::<Result<_>>()?;

    let mut out = SummaryVector { names: Vec::new(), values: Vec::new(), invalid: Vec::new() };
    let nb = bins.n_bins();
    let mut emit = |label: &str, stats: Vec<(f64, f64)>, group: &str| {
        for (g, (m, s)) in stats.into_iter().enumerate() {
            out.push(format!("{label}_mean_{group}{}", g + 1), m);
            out.push(format!("{label}_sd_{group}{}", g + 1), s);
        }
    };
    emit("fmado", grouped_mean_sd(&fmado, &bins.membership, nb), "bin");
    emit("ext2", grouped_mean_sd(&ext2, &bins.membership, nb), "bin");
    emit("ext3", grouped_mean_sd(&ext3, &clusters.membership, clusters.g), "cluster");
    emit("tau", grouped_mean_sd(&tau, &bins.membership, nb), "bin");
    Ok(out)
}

fn check_alignment(data: &DataMatrix, sites: &SiteSet) -> Result<()> {
    if data.scale != ScaleTag::UnitFrechet {
        return Err(Error::invalid("summaries need unit Fréchet data"));
    }
    if data.n_sites() != sites.len() {
        return Err(Error::invalid(format!(
            "data has {} sites but the site set has {}",
            data.n_sites(),
            sites.len()
        )));
    }
    Ok(())
}

/// Dependence summaries followed by the composite score blocks.
pub fn build_summary_vector(
    data: &DataMatrix,
    sites: &SiteSet,
    bins: &PairBinning,
    clusters: &TripletClustering,
    score_ctx: &ScoreContext,
) -> Result<SummaryVector> {
    let mut out = dependence_summaries(data, sites, bins, clusters)?;
    let scores = score_summary(data, sites, score_ctx)?;
    for (name, v) in score_ctx.component_names().into_iter().zip(scores) {
        out.push(name, v);
    }
    Ok(out)
}

/// Everything needed to turn a dataset into its summary vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryDesign {
    pub bins: PairBinning,
    pub clusters: TripletClustering,
    pub score_ctx: ScoreContext,
}

impl SummaryDesign {
    pub fn summarize(&self, data: &DataMatrix, sites: &SiteSet) -> Result<SummaryVector> {
        build_summary_vector(data, sites, &self.bins, &self.clusters, &self.score_ctx)
    }

    pub fn len(&self) -> usize {
        2 * 3 * self.bins.n_bins() + 2 * self.clusters.g + self.score_ctx.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn brute_tau(a: &[f64], b: &[f64]) -> f64 {
        let n = a.len();
        let mut s = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                s += (a[i] - a[j]).signum() * (b[i] - b[j]).signum()
                    * f64::from(a[i] != a[j] && b[i] != b[j]);
            }
        }
        2.0 * s / (n * (n - 1)) as f64
    }

    #[test]
    fn madogram_examples() {
        assert_eq!(fmadogram(&[1.0, 3.0], &[1.0, 3.0]).unwrap(), 0.0);
        let v = fmadogram(&[1.0, 2.0], &[2.0, 1.0]).unwrap();
        let want = 0.25 * 2.0 * ((-1.0f64).exp() - (-0.5f64).exp()).abs();
        assert!((v - want).abs() < 1e-15);
        assert!((v - 0.11933).abs() < 1e-5);
        assert!(fmadogram(&[1.0], &[1.0, 2.0]).is_err());
    }

    #[test]
    fn extremal_coef_examples() {
        assert_eq!(extremal_coef_estimate(&[&[2.0], &[4.0]]).unwrap(), 4.0);
        let c = [1.0, 2.0];
        assert!((extremal_coef_estimate(&[&c, &c]).unwrap() - 4.0 / 3.0).abs() < 1e-15);
        assert!(extremal_coef_estimate(&[&[1.0], &[0.0]]).is_err());
    }

    #[test]
    fn independent_columns() {
        use crate::numerics::SplitRng;
        use rand::Rng;
        let mut rng = SplitRng::new(2);
        let n = 100_000;
        let mut draw = || -> Vec<f64> { (0..n).map(|_| -1.0 / rng.random::<f64>().ln()).collect() };
        let (a, b) = (draw(), draw());
        assert!((fmadogram(&a, &b).unwrap() - 1.0 / 6.0).abs() < 0.005);
        assert!((extremal_coef_estimate(&[&a, &b]).unwrap() - 2.0).abs() < 0.02);
    }

    #[test]
    fn tau_examples() {
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0], &[2.0, 5.0, 9.0]).unwrap(), 1.0);
        assert!((kendall_tau(&[1.0, 2.0, 3.0], &[3.0, 1.0, 2.0]).unwrap() + 1.0 / 3.0).abs() < 1e-15);
        assert_eq!(kendall_tau(&[1.0, 2.0, 3.0, 4.0], &[-1.0, -2.0, -3.0, -4.0]).unwrap(), -1.0);
        assert!(kendall_tau(&[1.0], &[1.0]).is_err());
    }

    proptest! {
        #[test]
        fn tau_matches_brute_force(v in prop::collection::vec((0u8..6, 0u8..6), 2..60)) {
            let a: Vec<f64> = v.iter().map(|p| p.0 as f64).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1 as f64).collect();
            let fast = kendall_tau(&a, &b).unwrap();
            prop_assert!((fast - brute_tau(&a, &b)).abs() < 1e-12);
        }

        #[test]
        fn tau_continuous(v in prop::collection::vec((-1e3f64..1e3, -1e3f64..1e3), 2..80)) {
            let a: Vec<f64> = v.iter().map(|p| p.0).collect();
            let b: Vec<f64> = v.iter().map(|p| p.1).collect();
            prop_assert!((kendall_tau(&a, &b).unwrap() - brute_tau(&a, &b)).abs() < 1e-12);
        }
    }
}
