//! Near-identity automorphisms that push a sampled curve off a labyrinth
//! prefix, keep hit targets fixed and keep the curve away from the next
//! target.
//!
//! A shear field `V(z) = h(l(z)) v` has the exact time-`t` flow
//! `z -> z + t h(l(z)) v`. Fields are fitted by least squares on sample
//! points and integrated by composing exact flows (Lie splitting).

use alloc::vec;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autword::{AutError, AutWord, Shear};
use crate::geometry::{ParameterCompact, SampledSubmanifold};
use crate::interpolation::{point_mover_flat, InterpError, MoverOptions, EXACT_TOL};
use crate::labyrinth::Labyrinth;
use crate::linalg::{lstsq, CMatrix};
use crate::par;
use crate::point::{self, bilinear, CPoint};
use crate::poly::Poly;
#[allow(unused_imports)]
use crate::prelude::*;
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PushoffError {
    #[error("condition ({which}) failed: margin {margin:e}, required {required:e}")]
    Condition { which: &'static str, margin: f64, required: f64 },
    #[error("field fit is rank deficient (rank {rank} of {cols})")]
    RankDeficient { rank: usize, cols: usize },
    #[error(transparent)]
    Interp(#[from] InterpError),
    #[error(transparent)]
    Aut(#[from] AutError),
}

/// `V(z) = h(l(z)) v`.
#[derive(Clone, Debug, PartialEq)]
pub struct ShearField {
    v: Vec<C64>,
    form: Vec<C64>,
    h: Poly,
}

impl ShearField {
    pub fn new(v: &[C64], form: &[C64], h: Poly) -> Result<Self, AutError> {
        let s = Shear::with_degree_cap(v, form, h.clone(), usize::MAX)?;
        Ok(ShearField { v: v.to_vec(), form: s.form().to_vec(), h })
    }

    pub fn direction(&self) -> &[C64] {
        &self.v
    }
    pub fn form(&self) -> &[C64] {
        &self.form
    }
    pub fn poly(&self) -> &Poly {
        &self.h
    }

    pub fn value(&self, z: &[C64]) -> Vec<C64> {
        let s = self.h.eval(bilinear(&self.form, z));
        self.v.iter().map(|v| s * v).collect()
    }

    /// Exact time-`t` flow.
    pub fn flow(&self, t: f64) -> Shear {
        Shear::with_degree_cap(&self.v, &self.form, self.h.scale(C64::new(t, 0.0)), usize::MAX)
            .expect("field invariants already checked")
    }

    fn same_pair(&self, other: &ShearField) -> bool {
        self.v == other.v && self.form == other.form
    }
}

/// Direction/form pairs: for each coordinate pair `(j, k)` eight directions
/// `v` with a form annihilating `v`.
fn direction_pairs(n: usize) -> Vec<(Vec<C64>, Vec<C64>)> {
    let one = C64::new(1.0, 0.0);
    let i = C64::new(0.0, 1.0);
    let patterns: [(C64, C64, C64, C64); 8] = [
        (one, 0.0.into(), 0.0.into(), one),
        (0.0.into(), one, one, 0.0.into()),
        (one, one, one, -one),
        (one, -one, one, one),
        (one, i, one, i),
        (one, -i, one, -i),
        (2.0 * one, one, one, -2.0 * one),
        (one, 2.0 * one, 2.0 * one, -one),
    ];
    let mut out = Vec::new();
    for j in 0..n {
        for k in j + 1..n {
            for &(vj, vk, lj, lk) in &patterns {
                let mut v = vec![C64::new(0.0, 0.0); n];
                let mut l = v.clone();
                v[j] = vj;
                v[k] = vk;
                l[j] = lj;
                l[k] = lk;
                let vn = point::norm(&v);
                out.push((v.iter().map(|x| x / vn).collect(), l));
            }
        }
    }
    out
}

/// Templates `w^k v` for `k = 0..=degree` over the fixed direction pairs.
/// Degree zero templates include the coordinate translations.
pub fn basis_templates(n: usize, degree: usize) -> Vec<ShearField> {
    let mut out = Vec::new();
    for (v, l) in direction_pairs(n) {
        for k in 0..=degree {
            out.push(ShearField::new(&v, &l, Poly::monomial(C64::new(1.0, 0.0), k)).expect("valid template"));
        }
    }
    out
}

#[derive(Clone, Debug)]
pub struct FitOptions {
    pub ridge: f64,
    /// Weight of the stay equations relative to the move equations.
    pub stay_weight: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        FitOptions { ridge: 1e-10, stay_weight: 1.0 }
    }
}

#[derive(Clone, Debug)]
pub struct FittedField {
    /// Fitted fields, one per direction pair, coefficients folded in.
    pub fields: Vec<ShearField>,
    pub coeffs: Vec<C64>,
    /// `sqrt(w^2 sum_stay |V|^2 + sum_move |V - d|^2)`.
    pub residual: f64,
    pub rank: usize,
}

/// Design matrix and right-hand side of the fit (weighted).
pub fn fit_system(n: usize, stay: &[C64], moving: &[C64], d: &[C64], basis: &[ShearField], stay_weight: f64) -> (CMatrix, Vec<C64>) {
    let ns = stay.len() / n;
    let nm = moving.len() / n;
    let rows = (ns + nm) * n;
    let mut a = CMatrix::zeros(rows, basis.len());
    let mut b = vec![C64::new(0.0, 0.0); rows];
    for (col, f) in basis.iter().enumerate() {
        for i in 0..ns + nm {
            let (x, w) = if i < ns { (&stay[i * n..(i + 1) * n], stay_weight) } else { (&moving[(i - ns) * n..(i - ns + 1) * n], 1.0) };
            let val = f.value(x);
            for k in 0..n {
                a.data[(i * n + k) * basis.len() + col] = val[k] * w;
            }
        }
    }
    for i in 0..nm {
        for k in 0..n {
            b[(ns + i) * n + k] = d[k];
        }
    }
    (a, b)
}

/// Least-squares fit of `sum_b c_b V_b` to zero on `stay` and to the
/// displacement `d` on `moving` (both flattened).
pub fn fit_field(stay: &[C64], moving: &[C64], d: &[C64], basis: &[ShearField], opts: &FitOptions) -> FittedField {
    let n = d.len();
    let (a, b) = fit_system(n, stay, moving, d, basis, opts.stay_weight);
    let sol = lstsq(&a, &b, opts.ridge);
    let mut fields: Vec<ShearField> = Vec::new();
    for (f, c) in basis.iter().zip(&sol.x) {
        let scaled = f.h.scale(*c);
        if let Some(g) = fields.iter_mut().find(|g| g.same_pair(f)) {
            g.h = g.h.add(&scaled);
        } else {
            fields.push(ShearField { v: f.v.clone(), form: f.form.clone(), h: scaled });
        }
    }
    fields.retain(|f| !f.h.is_zero());
    FittedField { fields, coeffs: sol.x, residual: sol.residual, rank: sol.rank }
}

/// Composition of exact time-`t/steps` flows of each field, repeated
/// `steps` times.
pub fn flow_word(n: usize, fields: &[ShearField], t: f64, steps: usize) -> AutWord {
    let steps = steps.max(1);
    let mut w = AutWord::identity(n);
    let dt = t / steps as f64;
    for _ in 0..steps {
        for f in fields {
            w.push(f.flow(dt));
        }
    }
    w
}

/// Largest difference on `probes` between `steps` and `2 steps` splittings.
pub fn splitting_error(n: usize, fields: &[ShearField], t: f64, steps: usize, probes: &[C64]) -> f64 {
    let a = flow_word(n, fields, t, steps);
    let b = flow_word(n, fields, t, 2 * steps);
    let count = probes.len() / n;
    (0..count)
        .map(|i| {
            let p = &probes[i * n..(i + 1) * n];
            let mut x = p.to_vec();
            let mut y = p.to_vec();
            a.eval_in_place(&mut x);
            b.eval_in_place(&mut y);
            point::dist(&x, &y)
        })
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug)]
pub struct ThetaOptions {
    pub delta_iii: f64,
    /// Clearance required from the labyrinth; `None` uses half its margin.
    pub delta_iv: Option<f64>,
    pub degree: usize,
    pub max_degree: usize,
    pub steps: usize,
    pub retries: usize,
    pub fit: FitOptions,
    pub mover: MoverOptions,
    /// Upper limit on stay points used in one fit.
    pub max_fit_points: usize,
    pub seed: u64,
}

impl Default for ThetaOptions {
    fn default() -> Self {
        ThetaOptions {
            delta_iii: 1e-3,
            delta_iv: None,
            degree: 3,
            max_degree: 6,
            steps: 4,
            retries: 4,
            fit: FitOptions::default(),
            mover: MoverOptions::default(),
            max_fit_points: 1500,
            seed: 0x7e7a,
        }
    }
}

/// One ball handled by [`build_theta_from`].
#[derive(Clone, Debug, PartialEq)]
pub struct BallStep {
    pub ball: usize,
    pub before: f64,
    pub after: f64,
    pub attempts: usize,
}

#[derive(Clone, Debug)]
pub struct ThetaReport {
    pub word: AutWord,
    /// (I): sup displacement over the stay samples and the bound.
    pub sup_i: f64,
    pub bound: f64,
    /// (II): largest relative motion of a hit target.
    pub fixed_residual: f64,
    /// (III): distance from the next target to the image cloud.
    pub dist_iii: f64,
    pub delta_iii: f64,
    /// (IV): clearance of the image cloud from the labyrinth prefix.
    pub clearance_iv: f64,
    pub delta_iv: f64,
    pub steps: Vec<BallStep>,
    pub perturbations: usize,
}

/// Inputs of [`build_theta_from`]; `cloud` and `tangents` are flattened
/// images and image tangents of every grid sample.
pub struct ThetaInput<'a> {
    pub n: usize,
    pub cloud: &'a [C64],
    pub tangents: &'a [C64],
    pub stay: &'a [usize],
    pub hit_targets: &'a [CPoint],
    pub a_next: Option<&'a CPoint>,
    pub lab: &'a Labyrinth,
    pub k0: usize,
    pub bound: f64,
}

fn apply_word(word: &AutWord, cloud: &[C64]) -> Vec<C64> {
    let n = word.dim();
    if word.is_empty() {
        return cloud.to_vec();
    }
    let count = cloud.len() / n;
    let chunks: Vec<Vec<C64>> = par::map_indices(count, |i| {
        let mut x = cloud[i * n..(i + 1) * n].to_vec();
        word.eval_in_place(&mut x);
        x
    });
    chunks.into_iter().flatten().collect()
}

fn ball_clearance(lab: &Labyrinth, ball: usize, n: usize, cloud: &[C64]) -> (f64, Vec<f64>) {
    let b = &lab.balls[ball];
    let count = cloud.len() / n;
    let d = par::map_indices(count, |i| b.distance(&point::to_real(&cloud[i * n..(i + 1) * n])));
    (d.iter().copied().fold(f64::INFINITY, f64::min), d)
}

fn sup_on(idx: &[usize], n: usize, a: &[C64], b: &[C64]) -> f64 {
    idx.iter()
        .map(|&i| point::dist(&a[i * n..(i + 1) * n], &b[i * n..(i + 1) * n]))
        .fold(0.0, f64::max)
}

fn subsample(idx: &[usize], cap: usize) -> Vec<usize> {
    if idx.len() <= cap {
        return idx.to_vec();
    }
    let stride = idx.len() as f64 / cap as f64;
    (0..cap).map(|k| idx[(k as f64 * stride) as usize]).collect()
}

fn gather(idx: &[usize], n: usize, cloud: &[C64]) -> Vec<C64> {
    idx.iter().flat_map(|&i| cloud[i * n..(i + 1) * n].iter().copied()).collect()
}

/// Unit real direction orthogonal to `u` and to the real tangent plane
/// spanned by `t` and `i t`, oriented along `hint`.
fn push_direction(u: &[f64], t: &[C64], hint: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    let it: Vec<C64> = t.iter().map(|z| z * C64::new(0.0, 1.0)).collect();
    let mut basis: Vec<Vec<f64>> = Vec::new();
    for w in [u.to_vec(), point::to_real(t), point::to_real(&it)] {
        let mut w = w;
        for b in &basis {
            let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in w.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        let nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
        if nw > 1e-12 {
            basis.push(w.iter().map(|x| x / nw).collect());
        }
    }
    let project = |mut w: Vec<f64>| {
        for b in &basis {
            let c: f64 = w.iter().zip(b).map(|(x, y)| x * y).sum();
            for (x, y) in w.iter_mut().zip(b) {
                *x -= c * y;
            }
        }
        w
    };
    let mut w = project(hint.to_vec());
    let mut nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    while nw < 1e-9 {
        w = project((0..u.len()).map(|_| rng.gen::<f64>() - 0.5).collect());
        nw = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    }
    w.iter().map(|x| x / nw).collect()
}

/// Builds the automorphism from precomputed images.
pub fn build_theta_from(input: &ThetaInput<'_>, opts: &ThetaOptions) -> Result<ThetaReport, PushoffError> {
    let n = input.n;
    let lab = input.lab;
    let k0 = input.k0.min(lab.len());
    let delta_iv = opts.delta_iv.unwrap_or(0.5 * lab.margin);
    let count = input.cloud.len() / n;
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    let mut word = AutWord::identity(n);
    let mut cloud = input.cloud.to_vec();
    let mut steps_log = Vec::new();
    let stay_pts = subsample(input.stay, opts.max_fit_points);

    for ball in 0..k0 {
        let (before, dists) = ball_clearance(lab, ball, n, &cloud);
        if before >= delta_iv {
            continue;
        }
        let b = &lab.balls[ball];
        let mut accepted = None;
        for attempt in 0..opts.retries {
            let reach = b.s * (1.0 + attempt as f64) + 4.0 * delta_iv;
            let moving: Vec<usize> = (0..count).filter(|&i| dists[i] < reach).collect();
            let mut stay_idx: Vec<usize> = stay_pts.clone();
            // keep the neighbourhoods of the other prefix balls still
            for (j, other) in lab.balls[..k0].iter().enumerate() {
                if j == ball {
                    continue;
                }
                let near: Vec<usize> = (0..count)
                    .filter(|&i| dists[i] >= reach && other.distance(&point::to_real(&cloud[i * n..(i + 1) * n])) < other.s + 4.0 * delta_iv)
                    .collect();
                stay_idx.extend(subsample(&near, 64));
            }
            let mut stay_flat = gather(&stay_idx, n, &cloud);
            for t in input.hit_targets {
                let cur = word.eval(t);
                stay_flat.extend(cur.0.iter().copied());
            }
            let move_idx = subsample(&moving, opts.max_fit_points / 2);
            let move_flat = gather(&move_idx, n, &cloud);
            // push along a direction transverse to both the hyperplane and the curve
            let closest = (0..count).min_by(|&x, &y| dists[x].total_cmp(&dists[y])).unwrap_or(0);
            let xr = point::to_real(&cloud[closest * n..(closest + 1) * n]);
            let hint: Vec<f64> = xr.iter().zip(&b.p).map(|(x, p)| x - p).collect();
            let tangent = &input.tangents[closest * n..(closest + 1) * n];
            let w = push_direction(&b.u, tangent, &hint, &mut rng);
            let mag = (b.s + 3.0 * delta_iv) * (1.0 + 0.5 * attempt as f64);
            let d = point::from_real(&w.iter().map(|x| x * mag).collect::<Vec<_>>());
            let degree = (opts.degree + attempt).min(opts.max_degree);
            let basis = basis_templates(n, degree);
            let fit = fit_field(&stay_flat, &move_flat, &d, &basis, &opts.fit);
            let step_word = flow_word(n, &fit.fields, 1.0, opts.steps << attempt);
            let next = apply_word(&step_word, &cloud);
            let after = ball_clearance(lab, ball, n, &next).0;
            let earlier_ok = (0..ball).all(|j| ball_clearance(lab, j, n, &next).0 >= delta_iv.min(ball_clearance(lab, j, n, &cloud).0));
            let sup = sup_on(input.stay, n, input.cloud, &next);
            if after >= delta_iv && earlier_ok && sup < input.bound {
                accepted = Some((step_word, next, after, attempt + 1));
                break;
            }
        }
        match accepted {
            Some((w, next, after, attempts)) => {
                word = word.compose(&w);
                cloud = next;
                steps_log.push(BallStep { ball, before, after, attempts });
            }
            None => return Err(PushoffError::Condition { which: "IV", margin: before, required: delta_iv }),
        }
    }

    // (II): exact correctors, one target at a time
    let sup_now = sup_on(input.stay, n, input.cloud, &cloud);
    let corr_tau = 0.25 * (input.bound - sup_now).max(0.0);
    for (j, t) in input.hit_targets.iter().enumerate() {
        let cur = word.eval(t);
        if cur.dist(t) <= 0.01 * EXACT_TOL * (1.0 + t.norm()) {
            continue;
        }
        let fixed: Vec<CPoint> = input.hit_targets[..j].to_vec();
        let near = gather(&stay_pts, n, &cloud);
        let tau = corr_tau / input.hit_targets.len() as f64;
        let rep = point_mover_flat(&fixed, &cur, t, &near, tau, &opts.mover)?;
        cloud = apply_word(&rep.word, &cloud);
        word = word.compose(&rep.word);
    }

    // (III): nudge the curve away from the next target
    let mut perturbations = 0;
    let mut dist_iii = f64::INFINITY;
    if let Some(a) = input.a_next {
        let nearest = |cloud: &[C64]| {
            par::map_indices(count, |i| point::dist(&cloud[i * n..(i + 1) * n], &a.0)).into_iter().fold(f64::INFINITY, f64::min)
        };
        dist_iii = nearest(&cloud);
        while dist_iii < opts.delta_iii && perturbations < opts.retries {
            perturbations += 1;
            let v: Vec<C64> = (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
            let form: Vec<C64> = (0..n).map(|_| C64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5)).collect();
            let probe = Shear::with_degree_cap(&v, &form, Poly::constant(C64::new(1.0, 0.0)), 64)?;
            let vn = point::norm(probe.direction());
            let lam = |z: &[C64]| bilinear(probe.form(), z);
            let roots: Vec<C64> = input.hit_targets.iter().map(|t| lam(&t.0)).collect();
            let mut h = Poly::from_roots(&roots);
            let at = h.eval(lam(&a.0));
            if at.norm() < 1e-12 {
                continue;
            }
            h = h.scale(C64::new(4.0 * opts.delta_iii / vn, 0.0) / at);
            let s = Shear::with_degree_cap(probe.direction(), probe.form(), h, 64)?;
            let w = AutWord::single(s);
            let next = apply_word(&w, &cloud);
            let d = nearest(&next);
            if d > dist_iii && sup_on(input.stay, n, input.cloud, &next) < input.bound {
                cloud = next;
                word = word.compose(&w);
                dist_iii = d;
            }
        }
    }

    let sup_i = sup_on(input.stay, n, input.cloud, &cloud);
    let fixed_residual = input
        .hit_targets
        .iter()
        .map(|t| word.eval(t).dist(t) / (1.0 + t.norm()))
        .fold(0.0, f64::max);
    let clearance_iv = if k0 == 0 { f64::INFINITY } else { lab.clearance_flat(k0, &cloud, delta_iv).min_dist };
    let report = ThetaReport {
        word,
        sup_i,
        bound: input.bound,
        fixed_residual,
        dist_iii,
        delta_iii: opts.delta_iii,
        clearance_iv,
        delta_iv,
        steps: steps_log,
        perturbations,
    };
    if !(report.sup_i < report.bound) {
        return Err(PushoffError::Condition { which: "I", margin: report.sup_i, required: report.bound });
    }
    if report.fixed_residual > EXACT_TOL {
        return Err(PushoffError::Condition { which: "II", margin: report.fixed_residual, required: EXACT_TOL });
    }
    if report.dist_iii < report.delta_iii {
        return Err(PushoffError::Condition { which: "III", margin: report.dist_iii, required: report.delta_iii });
    }
    if report.clearance_iv < delta_iv {
        return Err(PushoffError::Condition { which: "IV", margin: report.clearance_iv, required: delta_iv });
    }
    Ok(report)
}

/// Images and image tangents of every grid sample under `f`.
pub fn images_with_tangents(m: &SampledSubmanifold, f: &AutWord) -> (Vec<C64>, Vec<C64>) {
    let n = m.n;
    let pairs = par::map_indices(m.len(), |i| {
        let z = m.param(i);
        let x = m.f0(z);
        let t = m.tangent(z);
        f.eval_with_directional(&x.0, &t.0)
    });
    let mut cloud = Vec::with_capacity(m.len() * n);
    let mut tangents = Vec::with_capacity(m.len() * n);
    for (x, t) in pairs {
        cloud.extend(x);
        tangents.extend(t);
    }
    (cloud, tangents)
}

/// [`build_theta_from`] on the grid of `m` under `f_prev`, keeping the
/// samples of `k_prev` near the identity.
#[allow(clippy::too_many_arguments)]
pub fn build_theta(
    m: &SampledSubmanifold,
    f_prev: &AutWord,
    k_prev: &ParameterCompact,
    lab: &Labyrinth,
    k0: usize,
    hit_targets: &[CPoint],
    a_next: Option<&CPoint>,
    bound: f64,
    opts: &ThetaOptions,
) -> Result<ThetaReport, PushoffError> {
    let (cloud, tangents) = images_with_tangents(m, f_prev);
    let input = ThetaInput {
        n: m.n,
        cloud: &cloud,
        tangents: &tangents,
        stay: &k_prev.samples,
        hit_targets,
        a_next,
        lab,
        k0,
        bound,
    };
    build_theta_from(&input, opts)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::{sample_preset, sublevel_compact, Preset};
    use crate::labyrinth::HyperplaneBall;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn constant_field_fits_exactly() {
        let basis = basis_templates(2, 1);
        let d = [c(0.3, -0.1), c(0.2, 0.5)];
        let fit = fit_field(&[], &[c(1.0, 0.0), c(2.0, 0.0)], &d, &basis, &FitOptions::default());
        assert!(fit.residual < 1e-8, "{}", fit.residual);
        let zero = fit_field(&[c(0.0, 1.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(2.0, 0.0)], &[c(0.0, 0.0), c(0.0, 0.0)], &basis, &FitOptions::default());
        assert!(zero.coeffs.iter().all(|x| x.norm() < 1e-12));
        assert!(zero.residual < 1e-12);
    }

    #[test]
    fn one_field_splitting_is_exact() {
        let f = ShearField::new(&[c(0.0, 0.0), c(1.0, 0.0)], &[c(1.0, 0.0), c(0.0, 0.0)], Poly::new(vec![c(0.0, 0.0), c(0.0, 0.0), c(1.0, 0.0)])).unwrap();
        let probes = [c(1.0, 1.0), c(-2.0, 0.5)];
        assert_eq!(splitting_error(2, &[f.clone()], 0.7, 1, &probes), 0.0);
        let w = flow_word(2, &[f], 0.7, 5);
        let y = w.eval(&CPoint(probes.to_vec()));
        let expect = c(-2.0, 0.5) + 0.7 * c(1.0, 1.0) * c(1.0, 1.0);
        assert!((y[1] - expect).norm() < 1e-14);
    }

    #[test]
    fn empty_prefix_gives_identity() {
        let m = sample_preset(Preset::Line, 2, 2.0, 0.2).unwrap();
        let k = sublevel_compact(&m, &AutWord::identity(2), 1.0, Some(m.nearest(c(0.0, 0.0)))).unwrap();
        let lab = crate::labyrinth::generate(2, 1.2, 3.0, 0.0, 1).unwrap();
        let far = CPoint::from_pairs(&[(0.0, 0.0), (5.0, 0.0)]);
        let rep = build_theta(&m, &AutWord::identity(2), &k, &lab, 0, &[], Some(&far), 0.2, &ThetaOptions::default()).unwrap();
        assert!(rep.word.is_empty());
        assert_eq!(rep.sup_i, 0.0);
    }

    #[test]
    fn pushes_line_off_a_crossing_ball() {
        let m = sample_preset(Preset::Line, 2, 2.5, 0.05).unwrap();
        let k = sublevel_compact(&m, &AutWord::identity(2), 1.0, Some(m.nearest(c(0.0, 0.0)))).unwrap();
        let ball = HyperplaneBall::tangent(&[1.0, 0.0, 0.0, 0.0], 1.6, 0.1);
        let mut lab = crate::labyrinth::generate(2, 1.2, 3.0, 0.0, 1).unwrap();
        lab.balls.push(ball);
        lab.layer_of.push(0);
        lab.margin = 0.02;
        let rep = build_theta(&m, &AutWord::identity(2), &k, &lab, 1, &[], None, 0.2, &ThetaOptions::default()).unwrap();
        assert!(rep.clearance_iv >= 0.01, "{rep:?}");
        assert!(rep.sup_i < 0.2);
    }
}
