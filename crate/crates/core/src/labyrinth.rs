//! Labyrinths of pairwise disjoint balls lying in affine real hyperplanes of
//! `R^{2n}`, placed inside a spherical shell, together with a ledger of
//! certified lower bounds on the length of any path that crosses the shell
//! while avoiding them.
//!
//! Layers are "faceted onions": each layer is a family of flat balls tangent
//! to a sphere of radius `mu` at the nodes of a spherical point set. A facet
//! tangent at direction `w` with angular radius `alpha` occupies radii
//! `[mu, mu / cos(alpha)]`, the layer's band.
//!
//! Ledger. Let the bands be `[lo_k, hi_k]`, sorted outward, and put
//! `hi_0 = r_inner`. A crossing path must meet every band in order, so its
//! length is at least `sum_k (lo_k - hi_{k-1}) + (r_outer - hi_q)`. Entry `k`
//! of the ledger is `lo_k - hi_{k-1}`; the exit term is credited to the last
//! layer. Angular detours between the gap sets of consecutive layers are not
//! credited: for caps smaller than a hemisphere the uncovered part of each
//! layer is connected, so consecutive gap sets always meet.

use alloc::collections::BinaryHeap;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::f64::consts::PI;
use core::ops::Range;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::par;
#[allow(unused_imports)]
use crate::prelude::*;
use crate::C64;

/// Minimum distance a roadmap segment keeps from every ball.
pub const PATH_CLEARANCE: f64 = 1e-6;

const GEOM_TOL: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum LabyrinthError {
    #[error("invalid shell: need 0 < inner < outer (inner = {inner}, outer = {outer})")]
    InvalidShell { inner: f64, outer: f64 },
    #[error("target length {target} is infeasible in this shell; achievable maximum is {achievable}")]
    Infeasible { target: f64, achievable: f64 },
    #[error("requested length {requested} exceeds the total ledger {total}")]
    ExceedsLedger { requested: f64, total: f64 },
    #[error("no crossing path found with a budget of {budget} nodes")]
    NoPath { budget: usize },
    #[error("invalid hyperplane ball: {0}")]
    InvalidBall(&'static str),
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// `{x : <x, u> = c, |x - p| <= s}`.
#[derive(Clone, Debug, PartialEq)]
pub struct HyperplaneBall {
    pub u: Vec<f64>,
    pub c: f64,
    pub p: Vec<f64>,
    pub s: f64,
}

impl HyperplaneBall {
    pub fn new(u: Vec<f64>, c: f64, p: Vec<f64>, s: f64) -> Result<Self, LabyrinthError> {
        if u.len() != p.len() {
            return Err(LabyrinthError::InvalidBall("normal and center differ in dimension"));
        }
        if (norm(&u) - 1.0).abs() > GEOM_TOL {
            return Err(LabyrinthError::InvalidBall("normal is not a unit vector"));
        }
        if (dot(&p, &u) - c).abs() > GEOM_TOL * (1.0 + c.abs()) {
            return Err(LabyrinthError::InvalidBall("center is off the hyperplane"));
        }
        if !(s > 0.0 && s.is_finite()) {
            return Err(LabyrinthError::InvalidBall("radius must be positive"));
        }
        Ok(HyperplaneBall { u, c, p, s })
    }

    /// The ball tangent to the sphere of radius `mu` at direction `w`.
    pub fn tangent(w: &[f64], mu: f64, s: f64) -> Self {
        let wn = norm(w);
        let u: Vec<f64> = w.iter().map(|x| x / wn).collect();
        let p = u.iter().map(|x| x * mu).collect();
        HyperplaneBall { u, c: mu, p, s }
    }

    pub fn dim(&self) -> usize {
        self.u.len()
    }

    /// Euclidean distance from `x` to the ball.
    pub fn distance(&self, x: &[f64]) -> f64 {
        let mut yy = 0.0;
        let off = dot(x, &self.u) - self.c;
        for k in 0..x.len() {
            let y = x[k] - self.p[k] - off * self.u[k];
            yy += y * y;
        }
        let radial = (yy.sqrt() - self.s).max(0.0);
        (off * off + radial * radial).sqrt()
    }

    /// Nearest point of the ball to `x`.
    pub fn closest_point(&self, x: &[f64]) -> Vec<f64> {
        let off = dot(x, &self.u) - self.c;
        let y: Vec<f64> = (0..x.len()).map(|k| x[k] - self.p[k] - off * self.u[k]).collect();
        let yn = norm(&y);
        let f = if yn > self.s { self.s / yn } else { 1.0 };
        (0..x.len()).map(|k| self.p[k] + f * y[k]).collect()
    }

    /// Distance from the segment `[a, b]` to the ball. The distance to a
    /// convex set is convex along the segment, so golden-section search
    /// converges to the minimum; the bracket width times `|b - a|` is
    /// subtracted so the result never overestimates.
    pub fn segment_distance(&self, a: &[f64], b: &[f64]) -> f64 {
        let len = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        // cheap exclusion through the bounding sphere
        let mid: Vec<f64> = a.iter().zip(b).map(|(x, y)| 0.5 * (x + y)).collect();
        let dc = mid.iter().zip(&self.p).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt();
        let lower = dc - 0.5 * len - self.s;
        if lower > 0.0 {
            return lower;
        }
        let mut pt = alloc::vec![0.0; a.len()];
        let mut f = |t: f64| {
            for k in 0..a.len() {
                pt[k] = a[k] + t * (b[k] - a[k]);
            }
            self.distance(&pt)
        };
        let g = 0.618_033_988_749_894_9;
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        let mut x1 = hi - g * (hi - lo);
        let mut x2 = lo + g * (hi - lo);
        let mut f1 = f(x1);
        let mut f2 = f(x2);
        for _ in 0..90 {
            if f1 <= f2 {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - g * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + g * (hi - lo);
                f2 = f(x2);
            }
        }
        let best = f1.min(f2).min(f(0.0)).min(f(1.0));
        (best - len * (hi - lo)).max(0.0)
    }

    /// Exact smallest and largest `|x|` over the ball.
    pub fn radial_extent(&self) -> (f64, f64) {
        let pp = dot(&self.p, &self.p);
        let pu = dot(&self.p, &self.u);
        let perp = (pp - pu * pu).max(0.0).sqrt();
        let max = (pp + 2.0 * self.s * perp + self.s * self.s).sqrt();
        let min = if perp <= self.s {
            pu.abs()
        } else {
            ((perp - self.s) * (perp - self.s) + pu * pu).sqrt()
        };
        (min, max)
    }

    /// Signed gap by which `other` lies strictly on one side of this ball's
    /// hyperplane: `|<p_o, u> - c| - s_o sqrt(1 - <u_o, u>^2)`, with the
    /// sign of `<p_o, u> - c`.
    pub fn side_gap(&self, other: &HyperplaneBall) -> (f64, f64) {
        let off = dot(&other.p, &self.u) - self.c;
        let cu = dot(&other.u, &self.u).clamp(-1.0, 1.0);
        let spread = other.s * (1.0 - cu * cu).max(0.0).sqrt();
        (off.signum(), off.abs() - spread)
    }
}

/// One tangent-facet layer.
#[derive(Clone, Debug, PartialEq)]
pub struct Layer {
    pub mu: f64,
    pub alpha: f64,
    pub band: (f64, f64),
    pub balls: Range<usize>,
}

/// Side of `Λ_{k+1}` on which all earlier balls lie, with the worst gap.
#[derive(Clone, Debug, PartialEq)]
pub struct NestingWitness {
    pub side: f64,
    pub gap: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct Labyrinth {
    pub n: usize,
    pub r_inner: f64,
    pub r_outer: f64,
    pub target: f64,
    pub balls: Vec<HyperplaneBall>,
    pub layer_of: Vec<usize>,
    pub layers: Vec<Layer>,
    /// Per-layer certified length, in layer order.
    pub ledger: Vec<f64>,
    /// Declared pairwise disjointness margin.
    pub margin: f64,
    /// `nesting[k]` certifies balls `0..k` against the hyperplane of ball `k`.
    pub nesting: Vec<NestingWitness>,
}

/// Tuning of [`generate_with`].
#[derive(Clone, Debug)]
pub struct GenerateOptions {
    /// Fixed layer count; `None` searches the smallest feasible ball count.
    pub layers: Option<usize>,
    /// Upper limit on balls before reporting infeasibility.
    pub max_balls: usize,
    /// Fraction of the angular half-gap kept as clearance between facets.
    pub gap_fraction: f64,
}

impl Default for GenerateOptions {
    fn default() -> Self {
        GenerateOptions { layers: None, max_balls: 4000, gap_fraction: 0.1 }
    }
}

/// Result of [`Labyrinth::verify`].
#[derive(Clone, Debug, PartialEq)]
pub struct InvariantReport {
    pub min_pair_distance: f64,
    pub min_nesting_gap: f64,
    pub min_inner_clearance: f64,
    pub min_outer_clearance: f64,
    pub ledger_sum: f64,
    pub ok: bool,
}

/// Result of [`Labyrinth::clearance`].
#[derive(Clone, Debug, PartialEq)]
pub struct Clearance {
    pub ok: bool,
    pub min_dist: f64,
    /// `(point index, ball index)` attaining `min_dist`.
    pub argmin: Option<(usize, usize)>,
}

fn angle(a: &[f64], b: &[f64]) -> f64 {
    (dot(a, b) / (norm(a) * norm(b))).clamp(-1.0, 1.0).acos()
}

/// Hopf-coordinate product grid on `S^3` with `levels` latitude bands.
fn product_nodes(levels: usize, rot: [f64; 3]) -> Vec<Vec<f64>> {
    let step = 0.5 * PI / levels as f64;
    let mut out = Vec::new();
    for a in 0..levels {
        let eta = (a as f64 + 0.5) * step;
        let m1 = ((2.0 * PI * eta.cos() / step).round() as usize).max(1);
        let m2 = ((2.0 * PI * eta.sin() / step).round() as usize).max(1);
        let shift = if a % 2 == 1 { 0.5 } else { 0.0 };
        for k in 0..m1 {
            for l in 0..m2 {
                let p1 = 2.0 * PI * (k as f64 + rot[0]) / m1 as f64 + rot[2];
                let p2 = 2.0 * PI * (l as f64 + rot[1] + shift) / m2 as f64;
                out.push(alloc::vec![eta.cos() * p1.cos(), eta.cos() * p1.sin(), eta.sin() * p2.cos(), eta.sin() * p2.sin()]);
            }
        }
    }
    out
}

/// Greedy spherical code on `S^{d-1}` with angular spacing `spacing`.
fn spaced_nodes(d: usize, spacing: f64, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut out: Vec<Vec<f64>> = Vec::new();
    let mut misses = 0;
    while misses < 400 {
        let w: Vec<f64> = (0..d).map(|_| gaussian(rng)).collect();
        let wn = norm(&w);
        if wn < 1e-9 {
            continue;
        }
        let w: Vec<f64> = w.iter().map(|x| x / wn).collect();
        if out.iter().all(|o| angle(o, &w) >= spacing) {
            out.push(w);
            misses = 0;
        } else {
            misses += 1;
        }
    }
    out
}

fn gaussian(rng: &mut ChaCha8Rng) -> f64 {
    let u1: f64 = rng.gen::<f64>().max(1e-300);
    let u2: f64 = rng.gen();
    (-2.0 * u1.ln()).sqrt() * (2.0 * PI * u2).cos()
}

fn min_angle(nodes: &[Vec<f64>]) -> f64 {
    let mut best = PI;
    for i in 0..nodes.len() {
        for j in i + 1..nodes.len() {
            best = best.min(angle(&nodes[i], &nodes[j]));
        }
    }
    best
}

/// Builds `q` layers with node density `density`; `None` if a band does not
/// fit its sub-shell.
fn build(
    n: usize,
    inner: f64,
    outer: f64,
    q: usize,
    density: usize,
    opts: &GenerateOptions,
    rng: &mut ChaCha8Rng,
) -> Option<(Vec<HyperplaneBall>, Vec<Layer>, f64)> {
    let d = 2 * n;
    let mut balls = Vec::new();
    let mut layers = Vec::new();
    let mut margin = f64::INFINITY;
    let width = (outer - inner) / q as f64;
    for k in 0..q {
        let nodes = if n == 2 {
            let half = if k % 2 == 1 { 0.5 } else { 0.0 };
            let rot = [half + 0.25 * rng.gen::<f64>(), half + 0.25 * rng.gen::<f64>(), 0.1 * rng.gen::<f64>()];
            product_nodes(density, rot)
        } else {
            spaced_nodes(d, 0.5 * PI / density as f64, rng)
        };
        if nodes.len() < 2 || balls.len() + nodes.len() > opts.max_balls {
            return None;
        }
        let theta = min_angle(&nodes);
        let tan_alpha = (1.0 - opts.gap_fraction) * (0.5 * theta).tan();
        let alpha = tan_alpha.atan();
        let (lo_k, hi_k) = (inner + width * k as f64, inner + width * (k + 1) as f64);
        // centre the band [mu, mu / cos alpha] in the sub-shell
        let mu = 0.5 * (lo_k + hi_k) / (0.5 * (1.0 + 1.0 / alpha.cos()));
        let top = mu / alpha.cos();
        if !(mu > lo_k && top < hi_k) {
            return None;
        }
        let s = mu * tan_alpha;
        margin = margin.min(mu * opts.gap_fraction * (1.0 - theta.cos()));
        let start = balls.len();
        for w in &nodes {
            balls.push(HyperplaneBall::tangent(w, mu, s));
        }
        layers.push(Layer { mu, alpha, band: (mu, top), balls: start..balls.len() });
    }
    // layers are disjoint radially; the within-layer margin dominates
    Some((balls, layers, margin))
}

fn ledger_of(inner: f64, outer: f64, layers: &[Layer]) -> Vec<f64> {
    let mut out = Vec::with_capacity(layers.len());
    let mut prev = inner;
    for l in layers {
        out.push(l.band.0 - prev);
        prev = l.band.1;
    }
    if let Some(last) = out.last_mut() {
        *last += outer - prev;
    }
    out
}

/// [`generate_with`] under default options.
pub fn generate(n: usize, inner: f64, outer: f64, target: f64, seed: u64) -> Result<Labyrinth, LabyrinthError> {
    generate_with(n, inner, outer, target, seed, &GenerateOptions::default())
}

/// Builds the labyrinth with the fewest balls whose ledger reaches
/// `target`. Deterministic in `seed`.
pub fn generate_with(
    n: usize,
    inner: f64,
    outer: f64,
    target: f64,
    seed: u64,
    opts: &GenerateOptions,
) -> Result<Labyrinth, LabyrinthError> {
    if !(inner > 0.0 && outer > inner && outer.is_finite()) {
        return Err(LabyrinthError::InvalidShell { inner, outer });
    }
    let empty = |target| Labyrinth {
        n,
        r_inner: inner,
        r_outer: outer,
        target,
        balls: Vec::new(),
        layer_of: Vec::new(),
        layers: Vec::new(),
        ledger: Vec::new(),
        margin: 0.0,
        nesting: Vec::new(),
    };
    if !(target > 0.0) {
        return Ok(empty(0.0));
    }
    let mut best_achievable: f64 = 0.0;
    let mut candidates: Vec<(usize, Labyrinth)> = Vec::new();
    let layer_counts: Vec<usize> = match opts.layers {
        Some(q) => alloc::vec![q.max(1)],
        None => (1..=4).collect(),
    };
    for &q in &layer_counts {
        for density in 1..=64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((q as u64) << 32) ^ density as u64);
            let Some((balls, layers, margin)) = build(n, inner, outer, q, density, opts, &mut rng) else {
                if density > 8 {
                    break;
                }
                continue;
            };
            let ledger = ledger_of(inner, outer, &layers);
            let total: f64 = ledger.iter().sum();
            best_achievable = best_achievable.max(total);
            if total >= target {
                let mut layer_of = Vec::with_capacity(balls.len());
                for (k, l) in layers.iter().enumerate() {
                    layer_of.extend(core::iter::repeat(k).take(l.balls.len()));
                }
                let mut lab = Labyrinth {
                    n,
                    r_inner: inner,
                    r_outer: outer,
                    target,
                    balls,
                    layer_of,
                    layers,
                    ledger,
                    margin,
                    nesting: Vec::new(),
                };
                lab.nesting = lab.nesting_witnesses();
                candidates.push((lab.balls.len(), lab));
                break;
            }
        }
    }
    candidates
        .into_iter()
        .min_by_key(|(m, _)| *m)
        .map(|(_, lab)| lab)
        .ok_or(LabyrinthError::Infeasible { target, achievable: best_achievable })
}

impl Labyrinth {
    pub fn len(&self) -> usize {
        self.balls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.balls.is_empty()
    }

    pub fn ledger_sum(&self) -> f64 {
        self.ledger.iter().sum()
    }

    fn nesting_witnesses(&self) -> Vec<NestingWitness> {
        let mut out = Vec::with_capacity(self.balls.len());
        for k in 0..self.balls.len() {
            let plane = &self.balls[k];
            let mut side = 0.0;
            let mut gap = f64::INFINITY;
            let mut consistent = true;
            for prev in &self.balls[..k] {
                let (s, g) = plane.side_gap(prev);
                if side == 0.0 {
                    side = s;
                } else if s != side {
                    consistent = false;
                }
                gap = gap.min(g);
            }
            if !consistent {
                gap = f64::NEG_INFINITY;
            }
            out.push(NestingWitness { side, gap });
        }
        out
    }

    /// Number of balls in the layers `0..layer_count`.
    pub fn balls_in_layers(&self, layer_count: usize) -> usize {
        if layer_count == 0 {
            0
        } else {
            self.layers[layer_count - 1].balls.end
        }
    }

    /// Certified crossing length when only the first `k0` balls are present:
    /// the cumulative ledger of the layers fully contained in the prefix.
    pub fn prefix_bound(&self, k0: usize) -> f64 {
        self.layers
            .iter()
            .zip(&self.ledger)
            .take_while(|(l, _)| l.balls.end <= k0)
            .map(|(_, d)| d)
            .sum()
    }

    /// Smallest ball prefix whose cumulative ledger reaches `len`.
    pub fn prefix_for_length(&self, len: f64) -> Result<usize, LabyrinthError> {
        prefix_for_ledger(&self.ledger, len).map(|layers| self.balls_in_layers(layers))
    }

    /// Re-checks every structural invariant from the stored geometry.
    pub fn verify(&self) -> InvariantReport {
        let mut min_pair = f64::INFINITY;
        for i in 0..self.balls.len() {
            for j in i + 1..self.balls.len() {
                min_pair = min_pair.min(pair_distance_lower(&self.balls[i], &self.balls[j]));
            }
        }
        let nesting = self.nesting_witnesses();
        let min_nest = nesting.iter().skip(1).map(|w| w.gap).fold(f64::INFINITY, f64::min);
        let mut inner_c = f64::INFINITY;
        let mut outer_c = f64::INFINITY;
        for b in &self.balls {
            let (lo, hi) = b.radial_extent();
            inner_c = inner_c.min(lo - self.r_inner);
            outer_c = outer_c.min(self.r_outer - hi);
        }
        let ledger_sum = self.ledger_sum();
        let ledger_ok = self.ledger.iter().all(|&d| d > 0.0) && ledger_sum >= self.target;
        let ok = (self.balls.len() < 2 || min_pair >= self.margin * (1.0 - 1e-9))
            && (self.balls.len() < 2 || min_nest > 0.0)
            && inner_c > 0.0
            && outer_c > 0.0
            && ledger_ok
            && nesting == self.nesting;
        InvariantReport {
            min_pair_distance: min_pair,
            min_nesting_gap: min_nest,
            min_inner_clearance: inner_c,
            min_outer_clearance: outer_c,
            ledger_sum,
            ok,
        }
    }

    /// Smallest distance from the points (flattened, `n` complex coordinates
    /// each) to the first `k0` balls.
    pub fn clearance_flat(&self, k0: usize, pts: &[C64], margin: f64) -> Clearance {
        let n = self.n;
        let balls = &self.balls[..k0.min(self.balls.len())];
        if balls.is_empty() || pts.is_empty() {
            return Clearance { ok: true, min_dist: f64::INFINITY, argmin: None };
        }
        let count = pts.len() / n;
        let per_point = par::map_indices(count, |i| {
            let x = crate::point::to_real(&pts[i * n..(i + 1) * n]);
            let mut best = (f64::INFINITY, 0usize);
            for (b, ball) in balls.iter().enumerate() {
                // |x - p| - s bounds the distance from below
                let dc = x.iter().zip(&ball.p).map(|(a, c)| (a - c) * (a - c)).sum::<f64>().sqrt();
                if dc - ball.s >= best.0 {
                    continue;
                }
                let d = ball.distance(&x);
                if d < best.0 {
                    best = (d, b);
                }
            }
            best
        });
        let mut min_dist = f64::INFINITY;
        let mut argmin = None;
        for (i, (d, b)) in per_point.into_iter().enumerate() {
            if d < min_dist {
                min_dist = d;
                argmin = Some((i, b));
            }
        }
        Clearance { ok: min_dist >= margin, min_dist, argmin }
    }

    pub fn clearance(&self, k0: usize, pts: &[crate::point::CPoint], margin: f64) -> Clearance {
        let flat: Vec<C64> = pts.iter().flat_map(|p| p.0.iter().copied()).collect();
        self.clearance_flat(k0, &flat, margin)
    }

    fn segment_clear(&self, k0: usize, a: &[f64], b: &[f64]) -> bool {
        self.balls[..k0].iter().all(|ball| ball.segment_distance(a, b) >= PATH_CLEARANCE)
    }

    /// Length of the best crossing path found by a seeded probabilistic
    /// roadmap through the shell avoiding the first `k0` balls. Every
    /// returned path is realized, so the value bounds the true minimum from
    /// above.
    pub fn empirical_shortest_path(&self, k0: usize, budget: usize, seed: u64) -> Result<f64, LabyrinthError> {
        let k0 = k0.min(self.balls.len());
        let d = 2 * self.n;
        let (inner, outer) = (self.r_inner, self.r_outer);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let budget = budget.max(2);
        let mut nodes: Vec<Vec<f64>> = Vec::with_capacity(budget);
        // half the budget near ball rims, half uniform in the shell
        while nodes.len() < budget {
            let x: Vec<f64> = if k0 > 0 && nodes.len() % 2 == 1 {
                let ball = &self.balls[rng.gen_range(0..k0)];
                let w: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
                let along = dot(&w, &ball.u);
                let mut y: Vec<f64> = w.iter().zip(&ball.u).map(|(a, u)| a - along * u).collect();
                let yn = norm(&y).max(1e-12);
                let rim = ball.s * (1.0 + 0.05 * rng.gen::<f64>());
                for v in y.iter_mut() {
                    *v *= rim / yn;
                }
                let lift = 0.02 * ball.s * gaussian(&mut rng);
                (0..d).map(|k| ball.p[k] + y[k] + lift * ball.u[k]).collect()
            } else {
                let w: Vec<f64> = (0..d).map(|_| gaussian(&mut rng)).collect();
                let wn = norm(&w).max(1e-12);
                let u: f64 = rng.gen();
                let r = (inner.powi(d as i32) + u * (outer.powi(d as i32) - inner.powi(d as i32))).powf(1.0 / d as f64);
                w.iter().map(|x| x * r / wn).collect()
            };
            let r = norm(&x);
            if r > inner && r < outer && self.balls[..k0].iter().all(|b| b.distance(&x) >= PATH_CLEARANCE) {
                nodes.push(x);
            }
        }
        let count = nodes.len();
        let source: Vec<f64> = par::map_indices(count, |i| {
            let x = &nodes[i];
            let r = norm(x);
            let foot: Vec<f64> = x.iter().map(|v| v * inner / r).collect();
            if self.segment_clear(k0, &foot, x) { r - inner } else { f64::INFINITY }
        });
        let sink: Vec<f64> = par::map_indices(count, |i| {
            let x = &nodes[i];
            let r = norm(x);
            let head: Vec<f64> = x.iter().map(|v| v * outer / r).collect();
            if self.segment_clear(k0, x, &head) { outer - r } else { f64::INFINITY }
        });
        let knn = 12.min(count - 1);
        let adjacency: Vec<Vec<(usize, f64)>> = par::map_indices(count, |i| {
            let mut cand: Vec<(f64, usize)> = (0..count)
                .filter(|&j| j != i)
                .map(|j| {
                    let dd = nodes[i].iter().zip(&nodes[j]).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
                    (dd, j)
                })
                .collect();
            cand.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            cand.truncate(knn);
            cand.into_iter()
                .filter(|&(_, j)| self.segment_clear(k0, &nodes[i], &nodes[j]))
                .map(|(dd, j)| (j, dd.sqrt()))
                .collect()
        });
        // symmetrize
        let mut adj = adjacency.clone();
        for (i, list) in adjacency.iter().enumerate() {
            for &(j, w) in list {
                if !adj[j].iter().any(|&(k, _)| k == i) {
                    adj[j].push((i, w));
                }
            }
        }
        let dist = dijkstra(&adj, &source);
        let best = dist
            .iter()
            .zip(&sink)
            .map(|(a, b)| a + b)
            .fold(f64::INFINITY, f64::min);
        if best.is_finite() {
            Ok(best)
        } else {
            Err(LabyrinthError::NoPath { budget })
        }
    }
}

/// Smallest number of ledger entries whose cumulative sum reaches `len`.
pub fn prefix_for_ledger(ledger: &[f64], len: f64) -> Result<usize, LabyrinthError> {
    if len <= 0.0 {
        return Ok(0);
    }
    let mut acc = 0.0;
    for (k, d) in ledger.iter().enumerate() {
        acc += d;
        if acc >= len {
            return Ok(k + 1);
        }
    }
    Err(LabyrinthError::ExceedsLedger { requested: len, total: acc })
}

/// A lower bound on the distance between two hyperplane balls: the larger
/// of the bounding-sphere bound and the two half-space gaps.
pub fn pair_distance_lower(a: &HyperplaneBall, b: &HyperplaneBall) -> f64 {
    let dc = norm(&a.p.iter().zip(&b.p).map(|(x, y)| x - y).collect::<Vec<_>>());
    let sphere = dc - a.s - b.s;
    let g1 = a.side_gap(b).1;
    let g2 = b.side_gap(a).1;
    sphere.max(g1).max(g2)
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

/// Multi-source Dijkstra with per-node initial costs.
pub(crate) fn dijkstra(adj: &[Vec<(usize, f64)>], init: &[f64]) -> Vec<f64> {
    let mut dist = init.to_vec();
    let mut heap: BinaryHeap<Item> = init
        .iter()
        .enumerate()
        .filter(|(_, d)| d.is_finite())
        .map(|(i, &d)| Item(d, i))
        .collect();
    while let Some(Item(d, i)) = heap.pop() {
        if d > dist[i] {
            continue;
        }
        for &(j, w) in &adj[i] {
            let nd = d + w;
            if nd < dist[j] {
                dist[j] = nd;
                heap.push(Item(nd, j));
            }
        }
    }
    dist
}
