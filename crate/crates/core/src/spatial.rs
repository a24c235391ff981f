//! Site geometry: anisotropic distances, distance bins for site pairs and
//! k-median clustering of site triplets.

use crate::error::{Error, Result};
use crate::numerics::SplitRng;
use rand::Rng;
use serde::{Deserialize, Serialize};
use std::collections::HashSet;

/// Planar station locations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiteSet {
    pub ids: Vec<String>,
    pub coords: Vec<[f64; 2]>,
}

impl SiteSet {
    pub fn new(ids: Vec<String>, coords: Vec<[f64; 2]>) -> Result<Self> {
        if ids.len() != coords.len() {
            return Err(Error::invalid("site ids and coordinates differ in length"));
        }
        if ids.len() < 2 {
            return Err(Error::invalid("at least two sites are required"));
        }
        let mut seen = HashSet::new();
        for id in &ids {
            if !seen.insert(id.as_str()) {
                return Err(Error::invalid(format!("duplicate site id '{id}'")));
            }
        }
        if let Some(i) = coords.iter().position(|c| !c[0].is_finite() || !c[1].is_finite()) {
            return Err(Error::invalid(format!("non-finite coordinates for site '{}'", ids[i])));
        }
        Ok(Self { ids, coords })
    }

    /// Sites with generated ids `s1, s2, ...`.
    pub fn from_coords(coords: Vec<[f64; 2]>) -> Result<Self> {
        let ids = (1..=coords.len()).map(|i| format!("s{i}")).collect();
        Self::new(ids, coords)
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }

    pub fn euclidean(&self, i: usize, j: usize) -> f64 {
        let a = self.coords[i];
        let b = self.coords[j];
        (a[0] - b[0]).hypot(a[1] - b[1])
    }

    /// Sites at the given indices, in that order.
    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        Self::new(
            idx.iter().map(|&i| self.ids[i].clone()).collect(),
            idx.iter().map(|&i| self.coords[i]).collect(),
        )
    }
}

/// Rotation angle α ∈ [0, π/2) and principal-axes ratio r > 0.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AnisotropyParams {
    pub alpha: f64,
    pub ratio: f64,
}

impl AnisotropyParams {
    pub const ISOTROPIC: Self = Self { alpha: 0.0, ratio: 1.0 };
}

/// ‖diag(1, 1/r)·Rot(α)·d‖ for a coordinate difference d.
#[inline]
pub fn aniso_norm(d: [f64; 2], aniso: &AnisotropyParams) -> f64 {
    let (s, c) = aniso.alpha.sin_cos();
    let u = c * d[0] + s * d[1];
    let v = (-s * d[0] + c * d[1]) / aniso.ratio;
    u.hypot(v)
}

pub fn aniso_distance(x1: [f64; 2], x2: [f64; 2], aniso: &AnisotropyParams) -> f64 {
    aniso_norm([x1[0] - x2[0], x1[1] - x2[1]], aniso)
}

/// All pairs (i, j), i < j, in lexicographic order.
pub fn site_pairs(h: usize) -> Vec<(usize, usize)> {
    let mut out = Vec::with_capacity(h * h.saturating_sub(1) / 2);
    for i in 0..h {
        for j in (i + 1)..h {
            out.push((i, j));
        }
    }
    out
}

/// All triplets (i, j, k), i < j < k, in lexicographic order.
pub fn site_triplets(h: usize) -> Vec<(usize, usize, usize)> {
    let mut out = Vec::new();
    for i in 0..h {
        for j in (i + 1)..h {
            for k in (j + 1)..h {
                out.push((i, j, k));
            }
        }
    }
    out
}

/// Assignment of site pairs to distance bins. Bin b covers (edges[b], edges[b+1]],
/// except the first, which also contains its left edge.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairBinning {
    pub edges: Vec<f64>,
    /// Bin index per pair in [`site_pairs`] order.
    pub membership: Vec<usize>,
}

impl PairBinning {
    pub fn n_bins(&self) -> usize {
        self.edges.len() - 1
    }

    pub fn sizes(&self) -> Vec<usize> {
        let mut s = vec![0; self.n_bins()];
        for &b in &self.membership {
            s[b] += 1;
        }
        s
    }
}

pub fn make_pair_bins(sites: &SiteSet, n_bins: usize, edges: Option<&[f64]>) -> Result<PairBinning> {
    let pairs = site_pairs(sites.len());
    let dist: Vec<f64> = pairs.iter().map(|&(i, j)| sites.euclidean(i, j)).collect();
    if let Some(edges) = edges {
        if edges.len() < 2 {
            return Err(Error::invalid("explicit bin edges need at least two breakpoints"));
        }
        if n_bins != 0 && edges.len() - 1 != n_bins {
            return Err(Error::invalid(format!(
                "{} explicit edges define {} bins, but {} bins were requested",
                edges.len(),
                edges.len() - 1,
                n_bins
            )));
        }
        if edges.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::invalid("bin edges must be strictly increasing"));
        }
        let mut membership = Vec::with_capacity(pairs.len());
        let mut uncovered = Vec::new();
        for (p, &d) in dist.iter().enumerate() {
            let bin = (0..edges.len() - 1).find(|&b| {
                (d > edges[b] || (b == 0 && d >= edges[0])) && d <= edges[b + 1]
            });
            match bin {
                Some(b) => membership.push(b),
                None => {
                    let (i, j) = pairs[p];
                    uncovered.push(format!("({},{}) at distance {d}", sites.ids[i], sites.ids[j]));
                }
            }
        }
        if !uncovered.is_empty() {
            return Err(Error::invalid(format!("bin edges do not cover pairs: {}", uncovered.join("; "))));
        }
        let binning = PairBinning { edges: edges.to_vec(), membership };
        if let Some(b) = binning.sizes().iter().position(|&s| s == 0) {
            return Err(Error::invalid(format!("explicit bin {b} contains no site pairs")));
        }
        return Ok(binning);
    }
    if n_bins == 0 {
        return Err(Error::invalid("number of bins must be at least 1"));
    }
    let np = pairs.len();
    if n_bins > np {
        return Err(Error::invalid(format!("{n_bins} bins requested for only {np} pairs")));
    }
    let mut order: Vec<usize> = (0..np).collect();
    order.sort_by(|&a, &b| dist[a].total_cmp(&dist[b]));
    let mut membership = vec![0; np];
    let mut edges = vec![dist[order[0]]];
    let mut bin = 0;
    let mut rank = 0;
    while rank < np {
        // advance through a group of tied distances together
        let d = dist[order[rank]];
        let mut end = rank;
        while end < np && dist[order[end]] == d {
            end += 1;
        }
        let target = (rank * n_bins) / np;
        if target > bin && rank > 0 {
            edges.push(dist[order[rank - 1]]);
            bin = target.min(n_bins - 1);
        }
        for &p in &order[rank..end] {
            membership[p] = bin;
        }
        rank = end;
    }
    edges.push(dist[order[np - 1]]);
    let got_bins = edges.len() - 1;
    if got_bins != n_bins {
        return Err(Error::invalid(format!(
            "tied distances allow only {got_bins} distinct bins, {n_bins} requested"
        )));
    }
    Ok(PairBinning { edges, membership })
}

/// k-median clustering of triplets by their sorted pairwise distances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TripletClustering {
    pub g: usize,
    pub centroids: Vec<[f64; 3]>,
    /// Cluster index per triplet in [`site_triplets`] order.
    pub membership: Vec<usize>,
    pub objective: f64,
}

pub const KMEDIAN_RESTARTS: usize = 10;

pub fn triplet_features(sites: &SiteSet) -> Vec<[f64; 3]> {
    site_triplets(sites.len())
        .into_iter()
        .map(|(i, j, k)| {
            let mut f = [sites.euclidean(i, j), sites.euclidean(i, k), sites.euclidean(j, k)];
            f.sort_by(f64::total_cmp);
            f
        })
        .collect()
}

#[inline]
fn l1(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    (a[0] - b[0]).abs() + (a[1] - b[1]).abs() + (a[2] - b[2]).abs()
}

fn median(v: &mut [f64]) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

pub fn make_triplet_clusters(sites: &SiteSet, g: usize, seed: u64) -> Result<TripletClustering> {
    let feats = triplet_features(sites);
    let n = feats.len();
    if g == 0 || g > n {
        return Err(Error::invalid(format!("cluster count {g} must lie in [1, {n}] for {} sites", sites.len())));
    }
    let rng = SplitRng::new(seed);
    let mut best: Option<(Vec<[f64; 3]>, Vec<usize>, f64)> = None;
    for restart in 0..KMEDIAN_RESTARTS {
        let mut r = rng.child(restart as u64);
        let (c, m, obj) = kmedian_once(&feats, g, &mut r);
        if best.as_ref().is_none_or(|b| obj < b.2 - 1e-12) {
            best = Some((c, m, obj));
        }
    }
    let (centroids, membership, objective) = best.expect("at least one restart");
    // canonical labels: clusters ordered by centroid sum
    let mut order: Vec<usize> = (0..g).collect();
    order.sort_by(|&a, &b| {
        let sa: f64 = centroids[a].iter().sum();
        let sb: f64 = centroids[b].iter().sum();
        sa.total_cmp(&sb).then(a.cmp(&b))
    });
    let mut relabel = vec![0; g];
    for (new, &old) in order.iter().enumerate() {
        relabel[old] = new;
    }
    Ok(TripletClustering {
        g,
        centroids: order.iter().map(|&o| centroids[o]).collect(),
        membership: membership.iter().map(|&m| relabel[m]).collect(),
        objective,
    })
}

fn kmedian_once(feats: &[[f64; 3]], g: usize, rng: &mut SplitRng) -> (Vec<[f64; 3]>, Vec<usize>, f64) {
    let n = feats.len();
    // k-means++ style seeding with L1 distances
    let mut centroids = vec![feats[rng.random_range(0..n)]];
    while centroids.len() < g {
        let d: Vec<f64> = feats
            .iter()
            .map(|f| centroids.iter().map(|c| l1(f, c)).fold(f64::INFINITY, f64::min))
            .collect();
        let total: f64 = d.iter().sum();
        let pick = if total > 0.0 {
            let mut u = rng.random::<f64>() * total;
            let mut idx = n - 1;
            for (i, &di) in d.iter().enumerate() {
                if u < di {
                    idx = i;
                    break;
                }
                u -= di;
            }
            idx
        } else {
            rng.random_range(0..n)
        };
        centroids.push(feats[pick]);
    }
    let mut membership = vec![usize::MAX; n];
    for _ in 0..200 {
        let mut changed = false;
        for (i, f) in feats.iter().enumerate() {
            let mut bi = 0;
            let mut bd = f64::INFINITY;
            for (c, cen) in centroids.iter().enumerate() {
                let d = l1(f, cen);
                if d < bd {
                    bd = d;
                    bi = c;
                }
            }
            if membership[i] != bi {
                membership[i] = bi;
                changed = true;
            }
        }
        // repair empty clusters with the point farthest from its centroid
        for c in 0..g {
            if !membership.contains(&c) {
                let far = (0..n)
                    .filter(|&i| membership.iter().filter(|&&m| m == membership[i]).count() > 1)
                    .max_by(|&a, &b| {
                        l1(&feats[a], &centroids[membership[a]]).total_cmp(&l1(&feats[b], &centroids[membership[b]]))
                    });
                if let Some(i) = far {
                    membership[i] = c;
                    centroids[c] = feats[i];
                    changed = true;
                }
            }
        }
        for (c, cen) in centroids.iter_mut().enumerate() {
            let members: Vec<usize> = (0..n).filter(|&i| membership[i] == c).collect();
            if members.is_empty() {
                continue;
            }
            for k in 0..3 {
                let mut v: Vec<f64> = members.iter().map(|&i| feats[i][k]).collect();
                cen[k] = median(&mut v);
            }
        }
        if !changed {
            break;
        }
    }
    let obj = feats.iter().zip(&membership).map(|(f, &m)| l1(f, &centroids[m])).sum();
    (centroids, membership, obj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::PI;

    fn line(n: usize) -> SiteSet {
        SiteSet::from_coords((0..n).map(|i| [i as f64, 0.0]).collect()).unwrap()
    }

    #[test]
    fn aniso_examples() {
        let a = AnisotropyParams { alpha: 0.0, ratio: 2.0 };
        assert!((aniso_distance([0.0, 0.0], [0.0, 2.0], &a) - 1.0).abs() < 1e-15);
        let a = AnisotropyParams { alpha: PI / 4.0, ratio: 1.0 };
        assert!((aniso_distance([0.3, -1.0], [2.0, 4.0], &a) - (1.7f64).hypot(5.0)).abs() < 1e-14);
        let a = AnisotropyParams { alpha: PI / 4.0, ratio: 2.0 };
        assert!((aniso_norm([1.0, 1.0], &a) - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn rejects_bad_sites() {
        assert!(SiteSet::new(vec!["a".into(), "a".into()], vec![[0.0, 0.0], [1.0, 1.0]]).is_err());
        assert!(SiteSet::from_coords(vec![[0.0, 0.0]]).is_err());
        assert!(SiteSet::from_coords(vec![[0.0, f64::NAN], [1.0, 1.0]]).is_err());
    }

    #[test]
    fn single_bin() {
        let b = make_pair_bins(&line(3), 1, None).unwrap();
        assert_eq!(b.membership, vec![0, 0, 0]);
    }

    #[test]
    fn explicit_edges() {
        let s = line(7);
        let b = make_pair_bins(&s, 4, Some(&[0.0, 1.0, 2.0, 3.0, 6.0])).unwrap();
        assert_eq!(b.sizes(), vec![6, 5, 4, 6]);
        assert!(make_pair_bins(&s, 4, Some(&[0.0, 1.0, 2.0, 3.0, 5.0])).is_err());
        let err = make_pair_bins(&s, 4, Some(&[1.5, 2.0, 3.0, 4.0, 6.0])).unwrap_err();
        assert!(err.to_string().contains("(s1,s2)"));
    }

    #[test]
    fn quantile_bins_balanced() {
        let coords: Vec<[f64; 2]> = (0..9).map(|i| [i as f64 * 1.1, (i * i) as f64 * 0.37]).collect();
        let s = SiteSet::from_coords(coords).unwrap();
        let b = make_pair_bins(&s, 4, None).unwrap();
        let sz = b.sizes();
        assert_eq!(sz.iter().sum::<usize>(), 36);
        assert!(sz.iter().max().unwrap() - sz.iter().min().unwrap() <= 1);
        assert!(b.edges.windows(2).all(|w| w[1] > w[0]));
    }

    #[test]
    fn triplet_enumeration() {
        assert_eq!(site_triplets(4).len(), 4);
        let s = line(4);
        let c = make_triplet_clusters(&s, 4, 1).unwrap();
        assert_eq!(c.objective, 0.0);
        assert!(make_triplet_clusters(&s, 5, 1).is_err());
    }

    fn brute_force_objective(feats: &[[f64; 3]]) -> f64 {
        let n = feats.len();
        let mut best = f64::INFINITY;
        for mask in 0u32..(1 << (n - 1)) {
            let mut obj = 0.0;
            for side in 0..2 {
                let members: Vec<usize> = (0..n).filter(|&i| ((mask >> i) & 1) as usize == side).collect();
                if members.is_empty() {
                    continue;
                }
                let mut cen = [0.0; 3];
                for k in 0..3 {
                    let mut v: Vec<f64> = members.iter().map(|&i| feats[i][k]).collect();
                    cen[k] = median(&mut v);
                }
                obj += members.iter().map(|&i| l1(&feats[i], &cen)).sum::<f64>();
            }
            best = best.min(obj);
        }
        best
    }

    #[test]
    fn two_blobs() {
        let s = SiteSet::from_coords(vec![
            [0.0, 0.0],
            [0.3, 0.1],
            [0.1, 0.4],
            [10.0, 10.0],
            [10.2, 9.9],
            [9.8, 10.3],
        ])
        .unwrap();
        let c = make_triplet_clusters(&s, 2, 42).unwrap();
        let trip = site_triplets(6);
        let a = trip.iter().position(|&t| t == (0, 1, 2)).unwrap();
        let b = trip.iter().position(|&t| t == (3, 4, 5)).unwrap();
        assert_eq!(c.membership[a], c.membership[b]);
        let oracle = brute_force_objective(&triplet_features(&s));
        assert!((c.objective - oracle).abs() < 1e-9, "{} vs {}", c.objective, oracle);
    }

    #[test]
    fn clustering_deterministic() {
        let coords: Vec<[f64; 2]> = (0..8).map(|i| [(i as f64 * 1.7).sin() * 3.0, (i as f64 * 0.9).cos() * 2.0]).collect();
        let s = SiteSet::from_coords(coords).unwrap();
        assert_eq!(make_triplet_clusters(&s, 5, 9).unwrap(), make_triplet_clusters(&s, 5, 9).unwrap());
    }

    proptest::proptest! {
        #[test]
        fn aniso_is_a_norm(alpha in 0.0..std::f64::consts::FRAC_PI_2, ratio in 0.1..10.0f64,
                           a in proptest::array::uniform2(-5.0..5.0f64),
                           b in proptest::array::uniform2(-5.0..5.0f64),
                           c in proptest::array::uniform2(-5.0..5.0f64)) {
            let p = AnisotropyParams { alpha, ratio };
            let ab = aniso_distance(a, b, &p);
            let bc = aniso_distance(b, c, &p);
            let ac = aniso_distance(a, c, &p);
            proptest::prop_assert!(ac <= ab + bc + 1e-12);
            proptest::prop_assert!((ab - aniso_distance(b, a, &p)).abs() < 1e-12);
            let iso = AnisotropyParams { alpha, ratio: 1.0 };
            proptest::prop_assert!((aniso_distance(a, b, &iso) - aniso_distance(a, b, &AnisotropyParams::ISOTROPIC)).abs() < 1e-12);
        }
    }
}
