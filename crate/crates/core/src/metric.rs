//! Pullback metric of a sampled curve under an automorphism word: graph
//! distances, the containment certificate for crossing lengths, injectivity
//! and immersion margins, and the completeness ledger.

use alloc::collections::{BTreeMap, BinaryHeap};
use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;

use thiserror::Error;

use crate::autword::AutWord;
use crate::geometry::{ParameterCompact, SampledSubmanifold};
use crate::labyrinth::Labyrinth;
use crate::par;
use crate::point;
#[allow(unused_imports)]
use crate::prelude::*;
use crate::C64;

pub const DEFAULT_QUADRATURE: usize = 4;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MetricError {
    #[error("source or target sample set is empty")]
    EmptySet,
    #[error("target set unreachable from source set")]
    Disconnected,
    #[error("non-finite or non-positive edge weight between samples {0} and {1}")]
    BadWeight(usize, usize),
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
pub fn gauss_legendre(k: usize) -> Vec<(f64, f64)> {
    let k = k.max(1);
    let mut out = Vec::with_capacity(k);
    for i in 0..k {
        let mut x = (core::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        let mut dp = 1.0;
        for _ in 0..100 {
            let (mut p0, mut p1) = (1.0, x);
            for j in 2..=k {
                let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
                p0 = p1;
                p1 = p2;
            }
            let (p, pm1) = if k == 1 { (x, 1.0) } else { (p1, p0) };
            dp = k as f64 * (x * p - pm1) / (x * x - 1.0);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        if k == 1 {
            out.push((0.0, 2.0));
        } else {
            out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
        }
    }
    out
}

/// Length of the image of the parameter segment `[za, zb]` under `f o f0`.
pub fn segment_length(m: &SampledSubmanifold, f: &AutWord, za: C64, zb: C64, rule: &[(f64, f64)]) -> f64 {
    let delta = zb - za;
    rule.iter()
        .map(|&(x, w)| {
            let z = za + delta * (0.5 * (x + 1.0));
            let p = m.f0(z);
            let t: Vec<C64> = m.tangent(z).0.iter().map(|c| c * delta).collect();
            let (_, d) = f.eval_with_directional(&p.0, &t);
            0.5 * w * point::norm(&d)
        })
        .sum()
}

/// Sample grid with edges weighted by image arc length, in CSR form.
#[derive(Clone, Debug)]
pub struct PullbackGraph {
    pub nodes: usize,
    offsets: Vec<usize>,
    targets: Vec<usize>,
    weights: Vec<f64>,
}

impl PullbackGraph {
    /// Edges join grid neighbours that are both in `mask` (all samples when
    /// `None`).
    pub fn build(m: &SampledSubmanifold, f: &AutWord, mask: Option<&[bool]>, quadrature: usize) -> Result<Self, MetricError> {
        let rule = gauss_legendre(quadrature);
        let keep = |i: usize| mask.map_or(true, |mk| mk[i]);
        let lists: Vec<Vec<(usize, f64)>> = par::map_indices(m.len(), |i| {
            if !keep(i) {
                return Vec::new();
            }
            m.neighbors(i)
                .filter(|&j| keep(j))
                .map(|j| (j, segment_length(m, f, m.param(i), m.param(j), &rule)))
                .collect()
        });
        let mut offsets = Vec::with_capacity(m.len() + 1);
        let mut targets = Vec::new();
        let mut weights = Vec::new();
        offsets.push(0);
        for (i, list) in lists.into_iter().enumerate() {
            for (j, w) in list {
                if !(w.is_finite() && w > 0.0) {
                    return Err(MetricError::BadWeight(i, j));
                }
                targets.push(j);
                weights.push(w);
            }
            offsets.push(targets.len());
        }
        let g = PullbackGraph { nodes: m.len(), offsets, targets, weights };
        Ok(g.symmetrized())
    }

    /// Both directions of an edge carry the mean of the two quadratures.
    fn symmetrized(self) -> Self {
        let mut weights = self.weights.clone();
        for i in 0..self.nodes {
            for e in self.offsets[i]..self.offsets[i + 1] {
                let j = self.targets[e];
                if j < i {
                    continue;
                }
                if let Some(back) = (self.offsets[j]..self.offsets[j + 1]).find(|&b| self.targets[b] == i) {
                    let w = 0.5 * (self.weights[e] + self.weights[back]);
                    weights[e] = w;
                    weights[back] = w;
                }
            }
        }
        PullbackGraph { weights, ..self }
    }

    pub fn edges_of(&self, i: usize) -> impl Iterator<Item = (usize, f64)> + '_ {
        (self.offsets[i]..self.offsets[i + 1]).map(move |e| (self.targets[e], self.weights[e]))
    }

    pub fn edge_count(&self) -> usize {
        self.targets.len() / 2
    }

    pub fn weight(&self, i: usize, j: usize) -> Option<f64> {
        self.edges_of(i).find(|&(t, _)| t == j).map(|(_, w)| w)
    }

    /// Multi-source shortest-path distances from `sources`.
    pub fn distances_from(&self, sources: &[usize]) -> Vec<f64> {
        let mut dist = vec![f64::INFINITY; self.nodes];
        let mut heap = BinaryHeap::new();
        for &s in sources {
            dist[s] = 0.0;
            heap.push(Item(0.0, s));
        }
        while let Some(Item(d, i)) = heap.pop() {
            if d > dist[i] {
                continue;
            }
            for (j, w) in self.edges_of(i) {
                let nd = d + w;
                if nd < dist[j] {
                    dist[j] = nd;
                    heap.push(Item(nd, j));
                }
            }
        }
        dist
    }
}

#[derive(PartialEq)]
struct Item(f64, usize);
impl Eq for Item {}
impl PartialOrd for Item {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Item {
    fn cmp(&self, other: &Self) -> Ordering {
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

/// Graph distance between two sample sets; bounds the intrinsic distance
/// from above.
pub fn intrinsic_distance(g: &PullbackGraph, a: &[usize], b: &[usize]) -> Result<f64, MetricError> {
    if a.is_empty() || b.is_empty() {
        return Err(MetricError::EmptySet);
    }
    let dist = g.distances_from(a);
    let d = b.iter().map(|&j| dist[j]).fold(f64::INFINITY, f64::min);
    if d.is_finite() {
        Ok(d)
    } else {
        Err(MetricError::Disconnected)
    }
}

/// `|d/dw (f o f0)|` at each listed sample.
pub fn speeds(m: &SampledSubmanifold, f: &AutWord, idx: &[usize]) -> Vec<f64> {
    par::map_slice(idx, |&i| {
        let z = m.param(i);
        let (_, d) = f.eval_with_directional(&m.f0(z).0, &m.tangent(z).0);
        point::norm(&d)
    })
}

/// Sampled Lipschitz constant of `f o f0` over the listed samples, with a
/// 10% allowance for variation between samples.
pub fn sampled_lipschitz(m: &SampledSubmanifold, f: &AutWord, idx: &[usize]) -> f64 {
    1.1 * speeds(m, f, idx).into_iter().fold(0.0, f64::max)
}

/// Per-sample grid slack: `1.1 h` times the largest speed over the sample
/// and its lattice neighbours. Any point of a grid triangle is within `h`
/// of one of its vertices, so a sampled margin minus this slack bounds the
/// continuum margin near that sample.
pub fn local_slack(m: &SampledSubmanifold, f: &AutWord, idx: &[usize]) -> Vec<f64> {
    let mut slot = vec![usize::MAX; m.len()];
    let mut ring: Vec<usize> = Vec::new();
    for &i in idx {
        for j in core::iter::once(i).chain(m.neighbors(i)) {
            if slot[j] == usize::MAX {
                slot[j] = ring.len();
                ring.push(j);
            }
        }
    }
    let sp = speeds(m, f, &ring);
    idx.iter()
        .map(|&i| {
            let top = core::iter::once(i).chain(m.neighbors(i)).map(|j| sp[slot[j]]).fold(0.0, f64::max);
            1.1 * m.h * top
        })
        .collect()
}

/// Samples whose coarse margin is re-bounded on a sub-lattice, at most.
pub const REFINE_MAX: usize = 20_000;

/// Lower bound of `value(f(f0(z)))` over the Voronoi cell of sample `i`
/// for a 1-Lipschitz `value`, from a `(k + 1)^2` square sub-lattice. Each
/// sub-lattice point answers for the points within `s / sqrt 2` of it, with
/// the speed taken over its own sub-lattice neighbours.
pub fn cell_lower_bound(m: &SampledSubmanifold, f: &AutWord, i: usize, value: &dyn Fn(&[C64]) -> f64, k: usize) -> f64 {
    let k = k.max(1);
    let c = m.h / 3f64.sqrt();
    let s = 2.0 * c / k as f64;
    let z0 = m.param(i);
    let side = k + 1;
    let mut vals = Vec::with_capacity(side * side);
    let mut sp = Vec::with_capacity(side * side);
    for u in 0..side {
        for v in 0..side {
            let z = z0 + C64::new(s * u as f64 - c, s * v as f64 - c);
            let (x, t) = f.eval_with_directional(&m.f0(z).0, &m.tangent(z).0);
            vals.push(value(&x));
            let r = point::norm(&t);
            sp.push(if r.is_finite() { r } else { f64::INFINITY });
        }
    }
    // every point of the disc of radius `c` around the sample (which holds
    // its lattice cell) lies within `s / sqrt 2` of a sub-lattice point no
    // farther than `c + s / sqrt 2` from the centre
    let reach = c + core::f64::consts::FRAC_1_SQRT_2 * s;
    let mut best = f64::INFINITY;
    for u in 0..side {
        for v in 0..side {
            let (du, dv) = (s * u as f64 - c, s * v as f64 - c);
            if du * du + dv * dv > reach * reach {
                continue;
            }
            let mut top: f64 = 0.0;
            for du in u.saturating_sub(1)..=(u + 1).min(k) {
                for dv in v.saturating_sub(1)..=(v + 1).min(k) {
                    top = top.max(sp[du * side + dv]);
                }
            }
            let b = vals[u * side + v] - 1.1 * core::f64::consts::FRAC_1_SQRT_2 * s * top;
            best = best.min(if b.is_nan() { f64::NEG_INFINITY } else { b });
        }
    }
    best
}

/// The best of [`cell_lower_bound`] over sub-lattices of 4 to 64 points a
/// side, stopping at the first positive bound from 16 on.
pub fn refine_cell(m: &SampledSubmanifold, f: &AutWord, i: usize, value: &dyn Fn(&[C64]) -> f64) -> f64 {
    let mut best = f64::NEG_INFINITY;
    let mut k = 4;
    while k <= 64 {
        best = best.max(cell_lower_bound(m, f, i, value, k));
        if best > 0.0 && k >= 16 {
            break;
        }
        k *= 2;
    }
    best
}

/// Replaces the non-positive entries of `coarse` (margins of the samples
/// `idx`) by refined cell bounds when that helps.
pub fn refine_margins(
    m: &SampledSubmanifold,
    f: &AutWord,
    idx: &[usize],
    coarse: &mut [f64],
    value: &(dyn Fn(&[C64]) -> f64 + Sync),
) {
    let low: Vec<usize> = (0..idx.len()).filter(|&p| coarse[p] <= 0.0 && coarse[p] > f64::NEG_INFINITY).take(REFINE_MAX).collect();
    let better = par::map_slice(&low, |&p| refine_cell(m, f, idx[p], value));
    for (&p, b) in low.iter().zip(better) {
        if b > coarse[p] {
            coarse[p] = b;
        }
    }
}

/// Which containment of the crossing argument failed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Containment {
    Inner,
    Outer,
    Labyrinth,
}

#[derive(Clone, Debug, PartialEq)]
pub struct CertificateReport {
    pub certified: bool,
    /// Certified lower bound on the intrinsic distance (0 unless certified).
    pub bound: f64,
    /// `min (r' - |f(x)| - slack(x))` over `K_prev`.
    pub inner_margin: f64,
    /// `min (|f(x)| - R - slack(x))` over the boundary of `K'`.
    pub outer_margin: f64,
    /// `min (dist(f(x), prefix) - slack(x))` over `K'`.
    pub labyrinth_margin: f64,
    /// Largest slack used, divided by the mesh.
    pub lipschitz: f64,
    pub mesh: f64,
    pub violation: Option<(Containment, usize)>,
}

/// Inputs of [`stage_distance_certificate`].
pub struct CertificateInput<'a> {
    pub m: &'a SampledSubmanifold,
    pub f: &'a AutWord,
    pub k_prev: &'a ParameterCompact,
    pub k_prime: &'a ParameterCompact,
    pub r_prime: f64,
    pub r_outer: f64,
    pub lab: &'a Labyrinth,
    pub k0: usize,
}

/// Checks `f(K_prev) in r'B`, `f(bK') outside R B` and `f(K')` clear of the
/// labyrinth prefix on samples, each sampled margin reduced by the local
/// grid slack and re-bounded on a sub-lattice of the cell where that fails. When all hold, every path from `K_prev` leaving `K'` has
/// image length above the prefix ledger.
pub fn stage_distance_certificate(input: &CertificateInput<'_>) -> CertificateReport {
    let m = input.m;
    let kp = &input.k_prime.samples;
    let slack = local_slack(m, input.f, kp);
    let slack_of = |i: usize| slack[kp.binary_search(&i).expect("sample of K'")];
    let norm_of = |i: usize| input.f.eval(&m.f0_sample(i)).norm();
    let r_prime = input.r_prime;
    let r_outer = input.r_outer;
    let mut inner: Vec<f64> = par::map_slice(&input.k_prev.samples, |&i| {
        let s = if input.k_prime.contains(i) { slack_of(i) } else { f64::INFINITY };
        r_prime - norm_of(i) - s
    });
    refine_margins(m, input.f, &input.k_prev.samples, &mut inner, &|x| r_prime - point::norm(x));
    let (inner_margin, inner_arg) = argmin(&inner);
    let mut outer: Vec<f64> = par::map_slice(&input.k_prime.boundary, |&i| norm_of(i) - r_outer - slack_of(i));
    refine_margins(m, input.f, &input.k_prime.boundary, &mut outer, &|x| point::norm(x) - r_outer);
    let (outer_margin, outer_arg) = argmin(&outer);
    let (labyrinth_margin, lab_arg) = if input.k0 == 0 {
        (f64::INFINITY, None)
    } else {
        let prefix = &input.lab.balls[..input.k0.min(input.lab.len())];
        let dist = |x: &[C64]| {
            let y = point::to_real(x);
            prefix.iter().map(|b| b.distance(&y)).fold(f64::INFINITY, f64::min)
        };
        let mut lab: Vec<f64> = par::map_indices(kp.len(), |p| dist(&input.f.eval(&m.f0_sample(kp[p])).0) - slack[p]);
        refine_margins(m, input.f, kp, &mut lab, &dist);
        argmin(&lab)
    };
    let mut violation = None;
    if !(labyrinth_margin > 0.0) {
        violation = lab_arg.map(|p| (Containment::Labyrinth, kp[p]));
    }
    if !(outer_margin > 0.0) {
        violation = outer_arg.map(|p| (Containment::Outer, input.k_prime.boundary[p]));
    }
    if !(inner_margin > 0.0) {
        violation = inner_arg.map(|p| (Containment::Inner, input.k_prev.samples[p]));
    }
    let certified = inner_margin > 0.0 && outer_margin > 0.0 && labyrinth_margin > 0.0;
    let bound = if certified { input.lab.prefix_bound(input.k0) } else { 0.0 };
    CertificateReport {
        certified,
        bound,
        inner_margin,
        outer_margin,
        labyrinth_margin,
        lipschitz: slack.iter().copied().fold(0.0, f64::max) / m.h,
        mesh: m.h,
        violation,
    }
}

fn argmin(v: &[f64]) -> (f64, Option<usize>) {
    v.iter().enumerate().fold((f64::INFINITY, None), |acc, (i, &x)| if x < acc.0 { (x, Some(i)) } else { acc })
}

/// `sum 1 / (2 eps)` over the stage tolerances `eps_{i-1}`.
pub fn completeness_ledger(eps_prev: &[f64]) -> f64 {
    eps_prev.iter().fold(0.0, |s, e| s + 0.5 / e)
}

#[derive(Clone, Debug, PartialEq)]
pub struct InjectivityReport {
    /// Smallest image distance between samples at parameter distance `>= eta`.
    pub margin: f64,
    pub pair: Option<(usize, usize)>,
    /// Smallest `|d/dw (f o f0)|` over the samples.
    pub immersion: f64,
}

/// Injectivity and immersion margins of `f o f0` on the samples of `k`.
pub fn injectivity_margin(m: &SampledSubmanifold, f: &AutWord, k: &ParameterCompact, eta: f64) -> InjectivityReport {
    let n = m.n;
    let idx = &k.samples;
    let imgs = m.images_of(f, idx);
    let immersion = speeds(m, f, idx).into_iter().fold(f64::INFINITY, f64::min);
    let real: Vec<Vec<f64>> = (0..idx.len()).map(|a| point::to_real(&imgs[a * n..(a + 1) * n])).collect();
    let mut cell = (eta * immersion).max(1e-9);
    let span = real.iter().flat_map(|x| x.iter().map(|c| c.abs())).fold(0.0, f64::max) * 2.0 + 1.0;
    loop {
        if let Some(found) = close_pair_within(m, idx, &real, eta, cell) {
            return InjectivityReport { margin: found.0, pair: Some((found.1, found.2)), immersion };
        }
        if cell > span {
            return InjectivityReport { margin: f64::INFINITY, pair: None, immersion };
        }
        cell *= 2.0;
    }
}

/// Smallest chord ratio `|f(x) - f(y)| / |x - y|` over sample pairs of `k`
/// closer than `eta` in the parameter, on a strided subsample of at most
/// `cap` samples plus all lattice-neighbour pairs.
pub fn chord_ratio(m: &SampledSubmanifold, f: &AutWord, k: &ParameterCompact, eta: f64, cap: usize) -> f64 {
    let n = m.n;
    let stride = (k.len() / cap.max(1)).max(1);
    let sub: Vec<usize> = k.samples.iter().copied().step_by(stride).collect();
    let imgs = m.images_of(f, &sub);
    let far = par::map_indices(sub.len(), |a| {
        let mut best = f64::INFINITY;
        for b in a + 1..sub.len() {
            let d = (m.param(sub[a]) - m.param(sub[b])).norm();
            if d < eta {
                best = best.min(point::dist(&imgs[a * n..(a + 1) * n], &imgs[b * n..(b + 1) * n]) / d);
            }
        }
        best
    });
    let adjacent = par::map_slice(&k.samples, |&i| {
        let fi = f.eval(&m.f0_sample(i));
        m.neighbors(i)
            .filter(|&j| j > i && k.contains(j))
            .map(|j| fi.dist(&f.eval(&m.f0_sample(j))) / (m.param(i) - m.param(j)).norm())
            .fold(f64::INFINITY, f64::min)
    });
    far.into_iter().chain(adjacent).fold(f64::INFINITY, f64::min)
}

/// Closest far-apart pair among those with image distance `< cell`.
fn close_pair_within(m: &SampledSubmanifold, idx: &[usize], real: &[Vec<f64>], eta: f64, cell: f64) -> Option<(f64, usize, usize)> {
    let key = |x: &[f64]| -> Vec<i64> { x.iter().map(|c| (c / cell).floor() as i64).collect() };
    let mut grid: BTreeMap<Vec<i64>, Vec<usize>> = BTreeMap::new();
    for (a, x) in real.iter().enumerate() {
        grid.entry(key(x)).or_default().push(a);
    }
    let d = real.first().map_or(0, |x| x.len());
    let offsets: Vec<Vec<i64>> = (0..3usize.pow(d as u32))
        .map(|mut code| {
            (0..d)
                .map(|_| {
                    let o = (code % 3) as i64 - 1;
                    code /= 3;
                    o
                })
                .collect()
        })
        .collect();
    let results: Vec<Option<(f64, usize, usize)>> = par::map_indices(real.len(), |a| {
        let ka = key(&real[a]);
        let mut best: Option<(f64, usize, usize)> = None;
        for off in &offsets {
            let kb: Vec<i64> = ka.iter().zip(off).map(|(x, y)| x + y).collect();
            if let Some(list) = grid.get(&kb) {
                for &b in list {
                    if b <= a || (m.param(idx[a]) - m.param(idx[b])).norm() < eta {
                        continue;
                    }
                    let dd = real[a].iter().zip(&real[b]).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
                    if dd < cell && best.map_or(true, |(bd, _, _)| dd < bd) {
                        best = Some((dd, idx[a], idx[b]));
                    }
                }
            }
        }
        best
    });
    results.into_iter().flatten().min_by(|x, y| x.0.total_cmp(&y.0).then(x.1.cmp(&y.1)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::autword::AffineMap;
    use crate::geometry::{sample_preset, Preset};

    #[test]
    fn gauss_rules_integrate_polynomials() {
        for k in 1..=8 {
            let rule = gauss_legendre(k);
            let deg = 2 * k - 1;
            let got: f64 = rule.iter().map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            let exact = if (deg - 1) % 2 == 0 { 2.0 / deg as f64 } else { 0.0 };
            assert!((got - exact).abs() < 1e-13, "k={k}");
        }
    }

    #[test]
    fn annulus_width_on_identity() {
        let h = 0.05;
        let m = sample_preset(Preset::Line, 2, 3.5, h).unwrap();
        let g = PullbackGraph::build(&m, &AutWord::identity(2), None, 4).unwrap();
        let ring = |r: f64| -> Vec<usize> { (0..m.len()).filter(|&i| (m.param(i).norm() - r).abs() < 0.5 * h).collect() };
        let d = intrinsic_distance(&g, &ring(1.0), &ring(3.0)).unwrap();
        assert!((d - 2.0).abs() <= 2.0 * h, "{d}");
    }

    #[test]
    fn completeness_examples() {
        assert_eq!(completeness_ledger(&[0.5, 0.25, 0.125, 0.0625]), 15.0);
        assert_eq!(completeness_ledger(&[0.5]), 1.0);
    }

    #[test]
    fn identity_injectivity() {
        let h = 0.02;
        let m = sample_preset(Preset::Line, 2, 1.0, h).unwrap();
        let k = ParameterCompact::from_mask(&m, vec![true; m.len()], crate::geometry::CompactRule::Explicit).unwrap();
        let rep = injectivity_margin(&m, &AutWord::identity(2), &k, 0.1);
        assert!(rep.margin >= 0.1 - 2.0 * h);
        assert!((rep.immersion - 1.0).abs() < 1e-12);
        let s = AffineMap::scaling(2, 3.0).unwrap();
        let rep3 = injectivity_margin(&m, &AutWord::single(s), &k, 0.1);
        assert!((rep3.margin - 3.0 * rep.margin).abs() < 1e-12);
    }
}
