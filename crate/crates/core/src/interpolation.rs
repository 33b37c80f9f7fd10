//! Automorphism words that fix a finite set exactly, move one point onto a
//! target, and stay close to the identity on a prescribed sample cloud.
//!
//! A mover is at most two shears. In a unitary frame `w = U z` the first
//! shear has form `w_1` and carries `q` to the point `m` with
//! `w_1(m) = w_1(q)` and `w_k(m) = w_k(a)` for `k >= 2`; the second has form
//! `w_2` and carries `m` to `a`. Each profile is
//! `h(w) = D * prod_j (w - f_j) / (w0 - f_j) * ((w - c) / (w0 - c))^m`,
//! vanishing at the fixed values `f_j`, equal to `D` at `w0`, and damped on
//! the cloud by the last factor.

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autword::{AutError, AutWord, Shear, DEFAULT_MAX_DEGREE};
use crate::par;
use crate::point::{self, bilinear, CPoint};
use crate::poly::Poly;
#[allow(unused_imports)]
use crate::prelude::*;
use crate::C64;

/// Exactness tolerance for fixed points and the target, relative to `1 + |p|`.
pub const EXACT_TOL: f64 = 1e-10;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum InterpError {
    #[error("tolerance {tau:e} is infeasible; best sup displacement on the cloud is {achieved:e}")]
    Infeasible { tau: f64, achieved: f64 },
    #[error("form values of the moved point collide with fixed points after {retries} frames")]
    Collision { retries: usize },
    #[error("moved point or target coincides with a fixed point")]
    FixedOverlap,
    #[error("exactness lost: residual {residual:e}")]
    ExactnessLost { residual: f64 },
    #[error("no waypoint path to the target with budget {budget}")]
    NoWaypointPath { budget: usize },
    #[error("arc leaves the admissible region (margin {margin:e})")]
    ArcEscapes { margin: f64 },
    #[error("empty arc")]
    EmptyArc,
    #[error(transparent)]
    Aut(#[from] AutError),
}

/// Tuning of the mover.
#[derive(Clone, Debug)]
pub struct MoverOptions {
    pub max_degree: usize,
    pub rotation_retries: usize,
    pub seed: u64,
}

impl Default for MoverOptions {
    fn default() -> Self {
        MoverOptions { max_degree: DEFAULT_MAX_DEGREE, rotation_retries: 24, seed: 0x5eed }
    }
}

#[derive(Clone, Debug)]
pub struct MoverReport {
    pub word: AutWord,
    /// Sup displacement over the near-identity cloud.
    pub sup_near: f64,
    pub fixed_residual: f64,
    pub target_residual: f64,
}

/// Rows of a unitary matrix: `rows[k]` is the form `w_k`.
fn frame(n: usize, attempt: usize, seed: u64) -> Vec<Vec<C64>> {
    if attempt == 0 {
        return (0..n).map(|k| point::CPoint::basis(n, k).0).collect();
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(attempt as u64 * 0x9e37_79b9));
    let mut rows: Vec<Vec<C64>> = Vec::with_capacity(n);
    while rows.len() < n {
        let mut r: Vec<C64> = (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
        for prev in &rows {
            let c: C64 = r.iter().zip(prev).map(|(x, y)| x * y.conj()).sum();
            for (x, p) in r.iter_mut().zip(prev) {
                *x -= c * p;
            }
        }
        let nr = point::norm(&r);
        if nr > 1e-6 {
            rows.push(r.iter().map(|x| x / nr).collect());
        }
    }
    rows
}

/// `sum_k conj(rows[k]) * w_k`, the inverse of the frame on coordinates.
fn unframe(rows: &[Vec<C64>], w: &[C64]) -> Vec<C64> {
    let n = w.len();
    let mut z = vec![C64::new(0.0, 0.0); n];
    for (k, row) in rows.iter().enumerate() {
        for j in 0..n {
            z[j] += row[j].conj() * w[k];
        }
    }
    z
}

fn dedup_values(vals: &[C64], tol: f64) -> Vec<C64> {
    let mut out: Vec<C64> = Vec::new();
    for &v in vals {
        if out.iter().all(|o| (o - v).norm() > tol) {
            out.push(v);
        }
    }
    out
}

/// Chooses the damping exponent for one shear and returns it.
///
/// `cloud` is flattened; `d` is the displacement vector at the moved point.
fn profile_shear(
    n: usize,
    form: &[C64],
    fixed: &[C64],
    w0: C64,
    d: &[C64],
    cloud: &[C64],
    budget: f64,
    cap: usize,
) -> Result<(Shear, f64), f64> {
    let dn = point::norm(d);
    let v: Vec<C64> = d.iter().map(|x| x / dn).collect();
    let scale = 1.0 + w0.norm();
    let roots = dedup_values(fixed, 1e-13 * scale);
    if roots.iter().any(|f| (f - w0).norm() <= 1e-9 * scale) {
        return Err(f64::INFINITY);
    }
    let count = cloud.len() / n;
    let lam: Vec<C64> = (0..count).map(|i| bilinear(form, &cloud[i * n..(i + 1) * n])).collect();
    let lag = |w: C64| roots.iter().fold(C64::new(1.0, 0.0), |acc, f| acc * (w - f) / (w0 - f));
    let lag_vals: Vec<f64> = lam.iter().map(|&w| dn * lag(w).norm()).collect();
    let mut centers = vec![C64::new(0.0, 0.0)];
    if count > 0 {
        let mean = lam.iter().fold(C64::new(0.0, 0.0), |a, b| a + b) / count as f64;
        centers.push(mean);
    }
    let mut best_sup = f64::INFINITY;
    let max_m = cap.saturating_sub(roots.len());
    for m in 0..=max_m {
        for &c in &centers {
            if m > 0 && (w0 - c).norm() <= 1e-12 * scale {
                continue;
            }
            let sup = lam
                .iter()
                .zip(&lag_vals)
                .map(|(w, l)| if m == 0 { *l } else { l * ((w - c) / (w0 - c)).norm().powi(m as i32) })
                .fold(0.0, f64::max);
            if sup <= budget {
                let mut h = Poly::from_roots(&roots);
                for _ in 0..m {
                    h = h.mul(&Poly::new(vec![-c, C64::new(1.0, 0.0)]));
                }
                let at = h.eval(w0);
                let h = h.scale(C64::new(dn, 0.0) / at);
                return match Shear::with_degree_cap(&v, form, h, cap.max(1)) {
                    Ok(s) => Ok((s, sup)),
                    Err(_) => Err(sup),
                };
            }
            best_sup = best_sup.min(sup);
        }
    }
    Err(best_sup)
}

fn sup_displacement(word: &AutWord, cloud: &[C64]) -> f64 {
    let n = word.dim();
    let count = cloud.len() / n;
    par::map_indices(count, |i| {
        let x = &cloud[i * n..(i + 1) * n];
        let mut y = x.to_vec();
        word.eval_in_place(&mut y);
        point::dist(x, &y)
    })
    .into_iter()
    .fold(0.0, f64::max)
}

fn residuals(word: &AutWord, fixed: &[CPoint], q: &CPoint, a: &CPoint) -> (f64, f64) {
    let fr = fixed
        .iter()
        .map(|p| word.eval(p).dist(p) / (1.0 + p.norm()))
        .fold(0.0, f64::max);
    let tr = word.eval(q).dist(a) / (1.0 + a.norm());
    (fr, tr)
}

fn correct(word: &AutWord, fixed: &[CPoint], q: &CPoint, a: &CPoint, cloud: &[C64], budget: f64, opts: &MoverOptions) -> Option<MoverReport> {
    let n = q.dim();
    let moved: Vec<C64> = (0..cloud.len() / n)
        .flat_map(|i| {
            let mut y = cloud[i * n..(i + 1) * n].to_vec();
            word.eval_in_place(&mut y);
            y
        })
        .collect();
    let q1 = word.eval(q);
    let rep = point_mover_flat(fixed, &q1, a, &moved, budget, opts).ok()?;
    let total = word.compose(&rep.word);
    let sup_near = sup_displacement(&total, cloud);
    let (fr, tr) = residuals(&total, fixed, q, a);
    (sup_near <= budget + sup_displacement(word, cloud) && fr <= EXACT_TOL && tr <= EXACT_TOL)
        .then_some(MoverReport { word: total, sup_near, fixed_residual: fr, target_residual: tr })
}

/// Mover under default options over a list of cloud points.
pub fn point_mover(fixed: &[CPoint], q: &CPoint, a: &CPoint, near_id_on: &[CPoint], tau: f64) -> Result<AutWord, InterpError> {
    let flat: Vec<C64> = near_id_on.iter().flat_map(|p| p.0.iter().copied()).collect();
    point_mover_flat(fixed, q, a, &flat, tau, &MoverOptions::default()).map(|r| r.word)
}

/// Mover over a flattened cloud (`n` coordinates per point).
pub fn point_mover_flat(
    fixed: &[CPoint],
    q: &CPoint,
    a: &CPoint,
    cloud: &[C64],
    tau: f64,
    opts: &MoverOptions,
) -> Result<MoverReport, InterpError> {
    let n = q.dim();
    for p in fixed.iter().chain([a]) {
        if p.dim() != n {
            return Err(AutError::DimensionMismatch { expected: n, got: p.dim() }.into());
        }
    }
    let sep = 1e-9 * (1.0 + q.norm().max(a.norm()));
    if fixed.iter().any(|p| p.dist(q) <= sep || p.dist(a) <= sep) && q.dist(a) > EXACT_TOL * (1.0 + a.norm()) {
        return Err(InterpError::FixedOverlap);
    }
    if q.dist(a) <= EXACT_TOL * (1.0 + a.norm()) * 1e-2 {
        let word = AutWord::identity(n);
        return Ok(MoverReport { word, sup_near: 0.0, fixed_residual: 0.0, target_residual: q.dist(a) / (1.0 + a.norm()) });
    }
    let mut best = f64::INFINITY;
    let mut collided = true;
    for attempt in 0..=opts.rotation_retries {
        let rows = frame(n, attempt, opts.seed);
        let wq: Vec<C64> = rows.iter().map(|r| bilinear(r, &q.0)).collect();
        let wa: Vec<C64> = rows.iter().map(|r| bilinear(r, &a.0)).collect();
        let mut wm = wa.clone();
        wm[0] = wq[0];
        let m = unframe(&rows, &wm);
        let d1: Vec<C64> = m.iter().zip(&q.0).map(|(x, y)| x - y).collect();
        let d2: Vec<C64> = a.0.iter().zip(&m).map(|(x, y)| x - y).collect();
        let tiny = 1e-15 * (1.0 + a.norm());
        let need1 = point::norm(&d1) > tiny;
        let need2 = point::norm(&d2) > tiny;
        let fixed1: Vec<C64> = fixed.iter().map(|p| bilinear(&rows[0], &p.0)).collect();
        let fixed2: Vec<C64> = fixed.iter().map(|p| bilinear(&rows[1], &p.0)).collect();
        // share of tau given to the first shear; the second is checked exactly
        let shares: &[f64] = if need1 && need2 { &[0.5, 0.1, 0.01, 1e-4] } else { &[1.0] };
        for &share in shares {
            let mut word = AutWord::identity(n);
            let mut cloud1 = cloud.to_vec();
            let mut ok = true;
            if need1 {
                match profile_shear(n, &rows[0], &fixed1, wq[0], &d1, cloud, share * tau, opts.max_degree) {
                    Ok((s, _)) => {
                        let count = cloud1.len() / n;
                        for i in 0..count {
                            s.apply(&mut cloud1[i * n..(i + 1) * n]);
                        }
                        word.push(s);
                        collided = false;
                    }
                    Err(sup) => {
                        if sup.is_finite() {
                            collided = false;
                        }
                        best = best.min(sup);
                        ok = false;
                    }
                }
            }
            if ok && need2 {
                let budget = tau - if need1 { sup_displacement(&word, cloud) } else { 0.0 };
                match profile_shear(n, &rows[1], &fixed2, wa[1], &d2, &cloud1, budget.max(0.0), opts.max_degree) {
                    Ok((s, _)) => {
                        word.push(s);
                        collided = false;
                    }
                    Err(sup) => {
                        if sup.is_finite() {
                            collided = false;
                        }
                        best = best.min(sup);
                        ok = false;
                    }
                }
            }
            if !ok {
                continue;
            }
            let sup_near = sup_displacement(&word, cloud);
            let (fr, tr) = residuals(&word, fixed, q, a);
            if sup_near <= tau && fr <= EXACT_TOL && tr <= EXACT_TOL {
                return Ok(MoverReport { word, sup_near, fixed_residual: fr, target_residual: tr });
            }
            // a far-away q loses digits to cancellation; a second, tiny move
            // from the computed image recovers them
            if sup_near < tau && fr <= EXACT_TOL && tr < 1e-6 {
                if let Some(rep) = correct(&word, fixed, q, a, cloud, tau - sup_near, opts) {
                    return Ok(rep);
                }
            }
            best = best.min(sup_near);
        }
    }
    if collided {
        Err(InterpError::Collision { retries: opts.rotation_retries })
    } else {
        Err(InterpError::Infeasible { tau, achieved: best })
    }
}

/// Tuning of [`arc_comb_with`].
#[derive(Clone, Debug)]
pub struct CombOptions {
    pub mover: MoverOptions,
    /// Random graph nodes for the waypoint search.
    pub waypoint_budget: usize,
    /// Waypoints keep this distance from the compact samples.
    pub inflate: f64,
    /// Arc samples closer than this to the moving endpoint are not frozen.
    pub release: f64,
    pub seed: u64,
}

impl Default for CombOptions {
    fn default() -> Self {
        CombOptions { mover: MoverOptions::default(), waypoint_budget: 400, inflate: 0.02, release: 0.05, seed: 0xa7c }
    }
}

#[derive(Clone, Debug)]
pub struct CombReport {
    pub word: AutWord,
    pub steps: usize,
    /// Smallest region margin over the images of the arc samples.
    pub arc_margin: f64,
    pub sup_compact: f64,
    pub target_residual: f64,
}

/// Combs the free end of `arc` (its last sample) onto `a` inside the open
/// ball of `ball_radius`, close to the identity on `fixed_compact` and
/// fixing `fixed_points`.
pub fn arc_comb(
    fixed_compact: &[CPoint],
    arc: &[CPoint],
    a: &CPoint,
    tau: f64,
    ball_radius: f64,
    fixed_points: &[CPoint],
) -> Result<AutWord, InterpError> {
    let flat: Vec<C64> = fixed_compact.iter().flat_map(|p| p.0.iter().copied()).collect();
    let region = |z: &[C64]| ball_radius - point::norm(z);
    arc_comb_with(&flat, arc, a, tau, fixed_points, &region, &CombOptions::default()).map(|r| r.word)
}

fn min_dist_to(cloud: &[C64], n: usize, z: &[C64]) -> f64 {
    (0..cloud.len() / n).map(|i| point::dist(&cloud[i * n..(i + 1) * n], z)).fold(f64::INFINITY, f64::min)
}

/// Arc combing in an arbitrary admissible region: `region(z) > 0` inside.
pub fn arc_comb_with(
    compact: &[C64],
    arc: &[CPoint],
    a: &CPoint,
    tau: f64,
    fixed_points: &[CPoint],
    region: &(dyn Fn(&[C64]) -> f64 + Sync),
    opts: &CombOptions,
) -> Result<CombReport, InterpError> {
    let end = arc.last().ok_or(InterpError::EmptyArc)?;
    let n = end.dim();
    let waypoints = waypoint_path(compact, n, end, a, region, opts)?;
    let steps = waypoints.len().saturating_sub(1);
    let mut word = AutWord::identity(n);
    let step_tau = if steps > 0 { tau / steps as f64 } else { tau };
    for k in 0..steps {
        let current = word.eval(end);
        let frozen: Vec<C64> = compact
            .iter()
            .copied()
            .chain(
                arc.iter()
                    .filter(|p| p.dist(end) > opts.release)
                    .flat_map(|p| word.eval(p).0),
            )
            .collect();
        let rep = point_mover_flat(fixed_points, &current, &waypoints[k + 1], &frozen, step_tau, &opts.mover)?;
        word = word.compose(&rep.word);
    }
    let arc_margin = arc.iter().map(|p| region(&word.eval(p).0)).fold(f64::INFINITY, f64::min);
    let sup_compact = sup_displacement(&word, compact);
    let target_residual = word.eval(end).dist(a) / (1.0 + a.norm());
    if sup_compact > tau {
        return Err(InterpError::Infeasible { tau, achieved: sup_compact });
    }
    if target_residual > EXACT_TOL {
        return Err(InterpError::ExactnessLost { residual: target_residual });
    }
    if !(arc_margin > 0.0) {
        return Err(InterpError::ArcEscapes { margin: arc_margin });
    }
    Ok(CombReport { word, steps, arc_margin, sup_compact, target_residual })
}

/// Breadth-first path from `start` to `goal` over a seeded random graph in
/// the region, away from the compact. Consecutive waypoints are joined by
/// segments sampled inside the region.
fn waypoint_path(
    compact: &[C64],
    n: usize,
    start: &CPoint,
    goal: &CPoint,
    region: &(dyn Fn(&[C64]) -> f64 + Sync),
    opts: &CombOptions,
) -> Result<Vec<CPoint>, InterpError> {
    let seg_ok = |p: &CPoint, q: &CPoint| {
        (0..=16).all(|k| {
            let t = k as f64 / 16.0;
            let z: Vec<C64> = p.0.iter().zip(&q.0).map(|(x, y)| x + (y - x) * t).collect();
            region(&z) > 0.0 && (k == 0 || k == 16 || min_dist_to(compact, n, &z) > opts.inflate)
        })
    };
    if start.dist(goal) <= EXACT_TOL * (1.0 + goal.norm()) {
        return Ok(vec![start.clone()]);
    }
    if seg_ok(start, goal) {
        return Ok(vec![start.clone(), goal.clone()]);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let span = start.norm().max(goal.norm()).max(1.0) * 1.5;
    let mut nodes = vec![start.clone(), goal.clone()];
    let mut tries = 0;
    while nodes.len() < opts.waypoint_budget + 2 && tries < 50 * opts.waypoint_budget {
        tries += 1;
        let z: Vec<C64> = (0..n).map(|_| C64::new(span * (2.0 * rng.gen::<f64>() - 1.0), span * (2.0 * rng.gen::<f64>() - 1.0))).collect();
        if region(&z) > 0.0 && min_dist_to(compact, n, &z) > opts.inflate {
            nodes.push(CPoint(z));
        }
    }
    let count = nodes.len();
    let mut prev = vec![usize::MAX; count];
    let mut seen = vec![false; count];
    let mut queue = alloc::collections::VecDeque::new();
    seen[0] = true;
    queue.push_back(0usize);
    while let Some(i) = queue.pop_front() {
        if i == 1 {
            break;
        }
        let mut near: Vec<(f64, usize)> = (0..count).filter(|&j| !seen[j]).map(|j| (nodes[i].dist(&nodes[j]), j)).collect();
        near.sort_by(|x, y| x.0.total_cmp(&y.0));
        for &(_, j) in near.iter().take(10) {
            if seg_ok(&nodes[i], &nodes[j]) {
                seen[j] = true;
                prev[j] = i;
                queue.push_back(j);
            }
        }
    }
    if !seen[1] {
        return Err(InterpError::NoWaypointPath { budget: opts.waypoint_budget });
    }
    let mut path = vec![nodes[1].clone()];
    let mut k = 1;
    while prev[k] != usize::MAX {
        k = prev[k];
        path.push(nodes[k].clone());
    }
    path.reverse();
    Ok(path)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn p(a: (f64, f64), b: (f64, f64)) -> CPoint {
        CPoint::from_pairs(&[a, b])
    }

    #[test]
    fn single_shear_when_first_coordinate_agrees() {
        let w = point_mover(&[p((0.0, 0.0), (0.0, 0.0))], &p((1.0, 0.0), (0.0, 0.0)), &p((1.0, 0.0), (5.0, 0.0)), &[], 1.0).unwrap();
        assert_eq!(w.len(), 1);
        assert!(w.eval(&p((1.0, 0.0), (0.0, 0.0))).dist(&p((1.0, 0.0), (5.0, 0.0))) < 1e-14);
        assert!(w.eval(&p((0.0, 0.0), (0.0, 0.0))).norm() < 1e-15);
    }

    #[test]
    fn two_shears_from_origin() {
        let target = p((2.0, 0.0), (3.0, 0.0));
        let w = point_mover(&[], &p((0.0, 0.0), (0.0, 0.0)), &target, &[], 1.0).unwrap();
        assert_eq!(w.len(), 2);
        assert!(w.eval(&p((0.0, 0.0), (0.0, 0.0))).dist(&target) < 1e-10);
    }

    #[test]
    fn shared_first_coordinate_forces_rotation() {
        let fixed = [p((1.0, 0.0), (2.0, 0.0))];
        let q = p((1.0, 0.0), (-1.0, 0.0));
        let a = p((3.0, 1.0), (0.5, 0.0));
        let w = point_mover(&fixed, &q, &a, &[], 1.0).unwrap();
        assert!(w.eval(&fixed[0]).dist(&fixed[0]) <= 1e-10 * (1.0 + fixed[0].norm()));
        assert!(w.eval(&q).dist(&a) <= 1e-10 * (1.0 + a.norm()));
    }

    #[test]
    fn damping_meets_tolerance_on_cloud() {
        let cloud: Vec<CPoint> = (0..50).map(|k| p((0.02 * k as f64, 0.0), (0.0, 0.0))).collect();
        let q = p((10.0, 0.0), (0.0, 0.0));
        let a = p((10.0, 0.0), (1.0, 0.0));
        let w = point_mover(&[], &q, &a, &cloud, 1e-6).unwrap();
        let sup = cloud.iter().map(|x| w.eval(x).dist(x)).fold(0.0, f64::max);
        assert!(sup <= 1e-6);
    }

    #[test]
    fn zero_tolerance_is_infeasible() {
        let cloud = [p((0.4, 0.0), (0.0, 0.0)), p((0.6, 0.0), (0.0, 0.0))];
        let r = point_mover(&[], &p((1.0, 0.0), (0.0, 0.0)), &p((1.0, 0.0), (0.1, 0.0)), &cloud, 0.0);
        assert!(matches!(r, Err(InterpError::Infeasible { .. })), "{r:?}");
    }

    #[test]
    fn comb_at_target_is_identity() {
        let arc = [p((0.1, 0.0), (0.0, 0.0)), p((0.3, 0.0), (0.0, 0.0))];
        let w = arc_comb(&[p((0.0, 0.0), (0.0, 0.0))], &arc, &arc[1], 1e-3, 1.0, &[]).unwrap();
        assert!(w.eval(&arc[1]).dist(&arc[1]) <= 1e-10);
    }

    #[test]
    fn short_straight_arc() {
        let compact: Vec<CPoint> = (0..20).map(|k| p((0.01 * k as f64 - 0.1, 0.0), (0.0, 0.0))).collect();
        let arc: Vec<CPoint> = (0..=10).map(|k| p((0.1 + 0.04 * k as f64, 0.0), (0.0, 0.0))).collect();
        let a = p((0.5, 0.0), (0.1, 0.0));
        let w = arc_comb(&compact, &arc, &a, 0.05, 1.0, &[]).unwrap();
        assert!(w.eval(arc.last().unwrap()).dist(&a) <= 1e-10 * (1.0 + a.norm()));
        for x in &compact {
            assert!(w.eval(x).dist(x) <= 0.05);
        }
        for x in &arc {
            assert!(w.eval(x).norm() < 1.0);
        }
    }

    #[test]
    fn comb_with_zero_tolerance_fails() {
        let compact: Vec<CPoint> = (0..5).map(|k| p((0.02 * k as f64, 0.0), (0.0, 0.0))).collect();
        let arc = [p((0.1, 0.0), (0.0, 0.0)), p((0.2, 0.0), (0.0, 0.0))];
        let r = arc_comb(&compact, &arc, &p((0.2, 0.0), (0.1, 0.0)), 0.0, 1.0, &[]);
        assert!(matches!(r, Err(InterpError::Infeasible { .. })), "{r:?}");
    }
}
