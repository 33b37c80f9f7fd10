//! The two induction drivers. The whole-space engine builds
//! `f_i = phi o theta o f_{i-1}` with a labyrinth in a shell `r' < |z| < R`
//! that makes every exit path from `K_{i-1}` long; the ball engine does the
//! same inside the unit ball with an arc-combing `phi`.
//!
//! Construction and checking are separate: a stage is built by search
//! (labyrinth rotation, target point, tolerances), then every margin is
//! re-derived from the stored words and numbers by [`evaluate_stage`],
//! which is also what an independent verifier runs.

use alloc::collections::{BTreeMap, VecDeque};
use alloc::string::{String, ToString};
use alloc::vec;
use alloc::vec::Vec;
use alloc::format;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::autword::AutWord;
use crate::geometry::{sample_preset, sublevel_from_norms, CompactRule, GeometryError, ParameterCompact, Preset, SampledSubmanifold};
use crate::interpolation::{arc_comb_with, point_mover_flat, CombOptions, InterpError, MoverOptions};
use crate::labyrinth::{generate_with, GenerateOptions, Labyrinth, LabyrinthError};
use crate::metric::{self, CertificateInput, PullbackGraph};
use crate::par;
use crate::point::{self, CPoint};
#[allow(unused_imports)]
use crate::prelude::*;
use crate::pushoff::{build_theta_from, PushoffError, ThetaInput, ThetaOptions};
use crate::C64;

/// Hit residuals and fixed-point drift must stay below this.
pub const HIT_TOL: f64 = 1e-10;


#[derive(Debug, Error, Clone, PartialEq)]
pub enum EngineError {
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error("stage {stage}: labyrinth: {source}")]
    Labyrinth { stage: usize, source: LabyrinthError },
    #[error("stage {stage}: pushoff: {source}")]
    Pushoff { stage: usize, source: PushoffError },
    #[error("stage {stage}: interpolation: {source}")]
    Interp { stage: usize, source: InterpError },
    #[error("stage {stage}: {what}")]
    Stage { stage: usize, what: String },
}

fn stage_err(stage: usize, what: impl Into<String>) -> EngineError {
    EngineError::Stage { stage, what: what.into() }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EngineKind {
    /// Embeddings into all of `C^n`.
    Main,
    /// Embeddings of a domain into the unit ball.
    Ball,
}

impl EngineKind {
    pub fn id(&self) -> &'static str {
        match self {
            EngineKind::Main => "main",
            EngineKind::Ball => "ball",
        }
    }
}

/// Radii rules.
#[derive(Clone, Debug, PartialEq)]
pub struct Radii {
    /// `K_0` is the component of `{|f0| <= k0_radius}` around parameter 0.
    pub k0_radius: f64,
    /// Whole space: `r = enclose * max |f(K_{i-1})|`.
    pub enclose: f64,
    /// Whole space: `r' = (1 + gap) r`.
    pub gap: f64,
    /// Whole space: `R >= outer * r'`, raised until the ledger fits.
    pub outer: f64,
    /// Whole space: `K_i = {|f_i| <= k_factor * (R + delta)}` plus a disc at `b_i`.
    pub k_factor: f64,
    /// Ball: the radii `R`, `rho`, the arc region, the component `V` and the
    /// sublevel for `K_i`, each written as `1 - frac * (1 - r)`.
    pub ball_outer: f64,
    pub ball_rho: f64,
    pub ball_v: f64,
    pub ball_region: f64,
    pub ball_k: f64,
}

impl Default for Radii {
    fn default() -> Self {
        Radii {
            k0_radius: 1.0,
            enclose: 1.05,
            gap: 0.2,
            outer: 2.0,
            k_factor: 2.0,
            ball_outer: 0.75,
            ball_rho: 0.6,
            ball_v: 0.4,
            ball_region: 0.35,
            ball_k: 0.3,
        }
    }
}

/// Search budgets and sub-builder options.
#[derive(Clone, Debug)]
pub struct Budgets {
    /// Facet clearance as a fraction of the angular half-gap.
    pub facet_gap: f64,
    /// Labyrinth rotations tried per stage.
    pub rotations: usize,
    pub max_balls: usize,
    /// `eps_i <= eps_ratio * eps_{i-1}`.
    pub eps_ratio: f64,
    /// Whole space: the target sample lies at least `base_ratio` times the
    /// radius of `K_i'` from its centre, in the parameter.
    pub base_ratio: f64,
    /// Degree cap of the interpolating shears in base coordinates.
    pub base_degree: usize,
    /// The cap is further held to `base_slope * radius(K_i') / h` so that
    /// the grid resolves the growth of `f_i` beyond `K_i'`.
    pub base_slope: f64,
    pub b_candidates: usize,
    pub tau_retries: usize,
    /// Parameter distance splitting far pairs (image gap) from near pairs
    /// (chord ratio) in the stability check.
    pub eta: f64,
    /// Subsample size for the chord ratio.
    pub chord_samples: usize,
    /// Graph distances are computed when `K_i` has at most this many samples.
    pub empirical_max_samples: usize,
    pub quadrature: usize,
    pub theta: ThetaOptions,
    pub mover: MoverOptions,
    pub comb: CombOptions,
}

impl Default for Budgets {
    fn default() -> Self {
        Budgets {
            facet_gap: 0.8,
            rotations: 16,
            max_balls: 4000,
            eps_ratio: 0.499,
            base_ratio: 1.05,
            base_degree: 48,
            base_slope: 0.1,
            b_candidates: 60,
            tau_retries: 4,
            eta: 1.0,
            chord_samples: 3000,
            empirical_max_samples: 200_000,
            quadrature: metric::DEFAULT_QUADRATURE,
            theta: ThetaOptions::default(),
            mover: MoverOptions::default(),
            comb: CombOptions::default(),
        }
    }
}

#[derive(Clone, Debug)]
pub struct EngineConfig {
    pub preset: Preset,
    pub n: usize,
    pub rho_param: f64,
    pub mesh: f64,
    pub eps0: f64,
    pub stages: usize,
    pub targets: Vec<CPoint>,
    pub engine: EngineKind,
    pub seed: u64,
    pub radii: Radii,
    pub budgets: Budgets,
    /// Keep building after an uncertified stage (the run still fails).
    pub keep_going: bool,
}

impl EngineConfig {
    pub fn new(preset: Preset, n: usize, rho_param: f64, mesh: f64, eps0: f64, targets: Vec<CPoint>, engine: EngineKind) -> Self {
        let stages = targets.len();
        let mut radii = Radii::default();
        if engine == EngineKind::Ball {
            radii.k0_radius = 0.3;
        }
        EngineConfig {
            preset,
            n,
            rho_param,
            mesh,
            eps0,
            stages,
            targets,
            engine,
            seed: 0,
            radii,
            budgets: Budgets::default(),
            keep_going: false,
        }
    }

    pub fn validate(&self) -> Result<(), EngineError> {
        let bad = |s: String| Err(EngineError::Config(s));
        if !(self.eps0 > 0.0 && self.eps0 < 1.0) {
            return bad(format!("epsilon0 must lie in (0, 1), got {}", self.eps0));
        }
        if self.n < 2 {
            return bad(format!("n must be at least 2, got {}", self.n));
        }
        if !(self.mesh > 0.0 && self.rho_param > self.mesh) {
            return bad(format!("need 0 < mesh < rho_param, got mesh {} rho {}", self.mesh, self.rho_param));
        }
        for (k, a) in self.targets.iter().enumerate() {
            if a.dim() != self.n {
                return bad(format!("target {k} has dimension {}, expected {}", a.dim(), self.n));
            }
            if !a.is_finite() {
                return bad(format!("target {k} is not finite"));
            }
            if self.engine == EngineKind::Ball && !(a.norm() < 1.0) {
                return bad(format!("target {k} is not in the open unit ball"));
            }
        }
        if self.stages > dedup_targets(&self.targets).len() {
            return bad(format!("{} stages requested but only {} distinct targets", self.stages, dedup_targets(&self.targets).len()));
        }
        if !(self.radii.k0_radius > 0.0) {
            return bad("k0_radius must be positive".to_string());
        }
        if self.engine == EngineKind::Ball {
            let r = &self.radii;
            let ok = 1.0 > r.ball_outer && r.ball_outer > r.ball_rho && r.ball_rho > r.ball_v && r.ball_v > r.ball_region && r.ball_region > r.ball_k && r.ball_k > 0.0;
            if !ok {
                return bad("ball fractions must satisfy 1 > outer > rho > v > region > k > 0".to_string());
            }
        }
        if !(self.budgets.eps_ratio > 0.0 && self.budgets.eps_ratio < 0.5) {
            return bad("eps_ratio must lie in (0, 1/2)".to_string());
        }
        Ok(())
    }
}

/// Removes repeated targets, keeping first occurrences.
pub fn dedup_targets(targets: &[CPoint]) -> Vec<CPoint> {
    let mut out: Vec<CPoint> = Vec::new();
    for a in targets {
        if out.iter().all(|b| b.dist(a) > 1e-12 * (1.0 + a.norm())) {
            out.push(a.clone());
        }
    }
    out
}

/// Everything needed to regenerate a stage labyrinth.
#[derive(Clone, Debug, PartialEq)]
pub struct LabyrinthParams {
    pub inner: f64,
    pub outer: f64,
    pub target: f64,
    pub seed: u64,
    pub gap_fraction: f64,
    pub max_balls: usize,
}

impl LabyrinthParams {
    pub fn generate(&self, n: usize) -> Result<Labyrinth, LabyrinthError> {
        let opts = GenerateOptions { layers: None, max_balls: self.max_balls, gap_fraction: self.gap_fraction };
        generate_with(n, self.inner, self.outer, self.target, self.seed, &opts)
    }
}

/// Every checked quantity of a stage. Each field is recomputed by
/// [`evaluate_stage`]; [`StageMargins::failures`] turns them into verdicts.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct StageMargins {
    pub eps_prev: f64,
    pub eps: f64,
    /// `sup |theta o f - f|` over `K_{i-1}` and its allowance.
    pub theta_sup: f64,
    pub theta_bound: f64,
    /// `max |theta(a_j) - a_j|` over earlier targets.
    pub theta_fixed: f64,
    /// `min (|g(x) - a_i| - slack)` over the grid.
    pub dist_iii: f64,
    /// `min (dist(g(x), prefix) - slack)` over the grid.
    pub clearance_iv: f64,
    /// Ball: `r - max (|g(x)| + slack)` over `K_{i-1}`.
    pub margin_v_ball: f64,
    /// `sup |f_i - f_{i-1}|` over `K_{i-1}`.
    pub sup_i: f64,
    /// `max |f_i(b_j) - a_j|` over `j <= i`.
    pub hit_max: f64,
    pub cert_inner: f64,
    pub cert_outer: f64,
    pub cert_labyrinth: f64,
    pub cert_lipschitz: f64,
    pub cert_bound: f64,
    pub labyrinth_balls: f64,
    pub labyrinth_ledger: f64,
    /// Smallest speed of `f_i` on `K_i'`.
    pub immersion: f64,
    /// Smallest image distance of pairs of `K_{i-1}` at parameter distance `>= eta`.
    pub injectivity: f64,
    /// Smallest chord ratio of closer pairs of `K_{i-1}`.
    pub chord: f64,
    /// Parameter separation of `K_i'` from the complement of `K_i`.
    pub separation: f64,
    pub cauchy: f64,
    /// `min(m_inj / 2 - 4 eps, chord / 2 - 2 eps C, m_imm / 2 - 2 eps C)`.
    pub margin_v: f64,
    /// Ball: `1 - max |f_i|` over the boundary of `K_i`, and over all of it.
    pub ball_boundary: f64,
    pub ball_full: f64,
    /// Counts of samples violating the nestings, and grid-edge contacts.
    pub nest_prev: f64,
    pub nest_prime: f64,
    pub b_placement: f64,
    pub truncation: f64,
    pub nonfinite: f64,
    pub k_prev_samples: f64,
    pub k_prime_samples: f64,
    pub k_samples: f64,
    /// Graph distance from `K_{i-1}` to the complement of `K_i'` (NaN when skipped).
    pub empirical_distance: f64,
}

macro_rules! entries_impl {
    ($($f:ident),*) => {
        impl StageMargins {
            /// Named fields, in a fixed order.
            pub fn entries(&self) -> Vec<(&'static str, f64)> {
                vec![$((stringify!($f), self.$f)),*]
            }

            /// Inverse of [`StageMargins::entries`]; unknown names are an error.
            pub fn from_entries(entries: &[(String, f64)]) -> Result<Self, String> {
                let mut out = StageMargins::default();
                let mut seen = 0usize;
                for (k, v) in entries {
                    match k.as_str() {
                        $(stringify!($f) => { out.$f = *v; seen += 1; })*
                        other => return Err(format!("unknown margin `{other}`")),
                    }
                }
                let expected = [$(stringify!($f)),*].len();
                if seen != expected {
                    return Err(format!("expected {expected} margins, found {seen}"));
                }
                Ok(out)
            }
        }
    };
}

entries_impl!(
    eps_prev, eps, theta_sup, theta_bound, theta_fixed, dist_iii, clearance_iv, margin_v_ball, sup_i, hit_max,
    cert_inner, cert_outer, cert_labyrinth, cert_lipschitz, cert_bound, labyrinth_balls, labyrinth_ledger,
    immersion, injectivity, chord, separation, cauchy, margin_v, ball_boundary, ball_full, nest_prev, nest_prime,
    b_placement, truncation, nonfinite, k_prev_samples, k_prime_samples, k_samples, empirical_distance
);

impl StageMargins {
    /// Names of the failed conditions; empty when the stage is certified.
    pub fn failures(&self, kind: EngineKind) -> Vec<&'static str> {
        let mut out = Vec::new();
        let mut need = |ok: bool, name: &'static str| {
            if !ok {
                out.push(name);
            }
        };
        need(self.theta_sup < self.theta_bound, "(I) theta near identity on K_{i-1}");
        need(self.theta_fixed <= HIT_TOL, "(II) theta fixes earlier targets");
        need(self.dist_iii > 0.0, "(III) target off the pushed curve");
        need(self.clearance_iv > 0.0, "(IV) pushed curve clear of the labyrinth prefix");
        if kind == EngineKind::Ball {
            need(self.margin_v_ball > 0.0, "(V) g(K_{i-1}) inside rB");
        }
        need(self.sup_i < self.eps_prev, "(i) uniform closeness on K_{i-1}");
        need(self.hit_max <= HIT_TOL, "(ii) targets hit");
        need(
            self.cert_inner > 0.0 && self.cert_outer > 0.0 && self.cert_labyrinth > 0.0 && self.cert_bound > 1.0 / self.eps_prev,
            "(iii) intrinsic distance above 1/eps_{i-1}",
        );
        need(self.eps > 0.0 && self.eps < 0.5 * self.eps_prev, "(iv) eps_i < eps_{i-1}/2");
        need(self.margin_v > 0.0, "(v) stability under 2 eps_i perturbations");
        if kind == EngineKind::Ball {
            need(self.ball_boundary > 0.0 && self.ball_full > 0.0, "(vi) f_i(K_i) inside the ball");
        }
        need(self.nest_prev == 0.0 && self.nest_prime == 0.0 && self.b_placement == 0.0, "nesting K_{i-1} < K_i' < K_i");
        need(self.truncation == 0.0, "K_i stays off the grid edge");
        need(self.nonfinite == 0.0, "finite images on K_i");
        out
    }

    /// Stores the chosen `eps_i` and recomputes the quantities that use it.
    fn with_eps(mut self, eps: f64) -> Self {
        self.eps = eps;
        self.margin_v = v_margin(eps, self.immersion, self.injectivity, self.chord, self.cauchy);
        self
    }
}

/// Far pairs move apart by at most `4 eps`; near pairs and speeds change by
/// at most `2 eps C` per unit parameter length, `C` the Cauchy factor.
fn v_margin(eps: f64, imm: f64, inj: f64, chord: f64, c: f64) -> f64 {
    (0.5 * inj - 4.0 * eps).min(0.5 * chord - 2.0 * eps * c).min(0.5 * imm - 2.0 * eps * c)
}

/// `eps_i = min(ratio eps_{i-1}, m_inj / 8, chord / (8C), m_imm / (8C))`,
/// the last three shrunk by 1% so the stability margin stays positive.
pub fn choose_eps(eps_prev: f64, ratio: f64, inj: f64, chord: f64, imm: f64, c: f64) -> f64 {
    let stability = (inj / 8.0).min(chord / (8.0 * c)).min(imm / (8.0 * c));
    (ratio * eps_prev).min(0.99 * stability)
}

/// How `K_i` is assembled from sample sets.
#[derive(Clone, Debug, PartialEq)]
pub struct KRule {
    /// Sublevel threshold of `|f_i|`.
    pub threshold: f64,
    /// Ball: restrict the sublevel to the component of this sample.
    pub component_seed: Option<usize>,
    /// Lattice hops of dilation around `K_i'`.
    pub dilation_hops: usize,
    /// Lattice hops of the disc kept around `b_i`.
    pub b_hops: usize,
}

/// One induction step.
#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub index: usize,
    pub eps_prev: f64,
    pub eps: f64,
    pub r: f64,
    pub r_prime: f64,
    pub r_outer: f64,
    /// Ball engine: the sublevel radius defining `K_i'`.
    pub rho: Option<f64>,
    pub labyrinth: LabyrinthParams,
    pub k0: usize,
    pub theta: AutWord,
    /// Whole space: the interpolating move in base coordinates. It acts on
    /// the `f0` images before `f_{i-1}`, so `f_i = phi o theta o f_{i-1} o phi_base`.
    pub phi_base: AutWord,
    pub phi: AutWord,
    /// Threshold of `|g_i|` defining `K_i'` (whole space `R + delta`, ball `rho`).
    pub prime_threshold: f64,
    /// Ball: the sample whose component is `K_i'` and `V`.
    pub component_seed: Option<usize>,
    pub v_threshold: Option<f64>,
    pub k_rule: KRule,
    pub b: usize,
    pub b_param: C64,
    pub a: CPoint,
    /// Ball: the arc `gamma` as samples, from `K_i'` to `b_i`.
    pub arc: Vec<usize>,
    pub margins: StageMargins,
    pub certified: bool,
    pub failures: Vec<String>,
}

/// State carried from one stage to the next.
#[derive(Clone, Debug)]
pub struct StageState {
    pub f: AutWord,
    /// Images and image tangents of every sample under `f o f0`.
    pub cloud: Vec<C64>,
    pub tangents: Vec<C64>,
    pub k: ParameterCompact,
    /// `K_i'` of the stage that produced this state (`K_0` initially).
    pub k_prime: ParameterCompact,
    pub eps: f64,
    /// `(b_j, a_j)` so far.
    pub hits: Vec<(usize, CPoint)>,
}

/// `K_0` on the grid.
pub fn initial_compact(m: &SampledSubmanifold, k0_radius: f64) -> Result<ParameterCompact, GeometryError> {
    let norms: Vec<f64> = (0..m.len()).map(|i| m.f0_sample(i).norm()).collect();
    let seed = m.nearest(C64::new(0.0, 0.0));
    sublevel_from_norms(m, &norms, k0_radius, Some(seed))
}

impl StageState {
    pub fn initial(m: &SampledSubmanifold, k0_radius: f64, eps0: f64) -> Result<Self, GeometryError> {
        let n = m.n;
        let mut cloud = Vec::with_capacity(m.len() * n);
        let mut tangents = Vec::with_capacity(m.len() * n);
        for i in 0..m.len() {
            let z = m.param(i);
            cloud.extend(m.f0(z).0);
            tangents.extend(m.tangent(z).0);
        }
        let k = initial_compact(m, k0_radius)?;
        Ok(StageState {
            f: AutWord::identity(n),
            cloud,
            tangents,
            k_prime: k.clone(),
            k,
            eps: eps0,
            hits: Vec::new(),
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Hit {
    pub stage: usize,
    pub a: CPoint,
    pub b: usize,
    pub b_param: C64,
    /// `|f_N(b) - a|` under the final map.
    pub residual: f64,
}

/// Ball engine: `Omega` truncated at the last stage.
#[derive(Clone, Debug, PartialEq)]
pub struct OmegaReport {
    pub samples: usize,
    pub connected: bool,
    /// `1 - max |f_N|` over the samples of the union of the `K_i`.
    pub margin: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageFailure {
    pub stage: usize,
    pub reason: String,
}

#[derive(Clone, Debug)]
pub struct RunCertificate {
    pub engine: EngineKind,
    pub seed: u64,
    pub grid_samples: usize,
    pub eps0: f64,
    pub targets: Vec<CPoint>,
    pub k0_samples: usize,
    pub stages: Vec<StageRecord>,
    pub hits: Vec<Hit>,
    /// `sum 1 / (2 eps_{i-1})` over the built stages.
    pub ledger: f64,
    pub omega: Option<OmegaReport>,
    pub failure: Option<StageFailure>,
    pub certified: bool,
}

impl RunCertificate {
    /// The final map `f_N`.
    pub fn map(&self) -> AutWord {
        let n = self.targets.first().map_or(2, |a| a.dim());
        let mut f = self.stages.first().map_or_else(|| AutWord::identity(n), |s| AutWord::identity(s.theta.dim()));
        for s in &self.stages {
            f = s.phi_base.compose(&f).compose(&s.theta).compose(&s.phi);
        }
        f
    }
}

fn splitmix(mut x: u64) -> u64 {
    x = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    x = (x ^ (x >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    x = (x ^ (x >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    x ^ (x >> 31)
}

/// Per-stage, per-purpose seed derived from the run seed.
pub fn sub_seed(seed: u64, stage: usize, tag: u64) -> u64 {
    splitmix(splitmix(seed ^ splitmix(stage as u64)) ^ tag)
}

fn chunk(cloud: &[C64], n: usize, i: usize) -> &[C64] {
    &cloud[i * n..(i + 1) * n]
}

fn chunk_norms(cloud: &[C64], n: usize) -> Vec<f64> {
    par::map_indices(cloud.len() / n, |i| {
        let r = point::norm(chunk(cloud, n, i));
        if r.is_finite() {
            r
        } else {
            f64::INFINITY
        }
    })
}

/// Applies `word` with its derivative to every sample image.
fn advance(word: &AutWord, cloud: &[C64], tangents: &[C64]) -> (Vec<C64>, Vec<C64>) {
    let n = word.dim();
    if word.is_empty() {
        return (cloud.to_vec(), tangents.to_vec());
    }
    let pairs = par::map_indices(cloud.len() / n, |i| word.eval_with_directional(chunk(cloud, n, i), chunk(tangents, n, i)));
    let mut c = Vec::with_capacity(cloud.len());
    let mut t = Vec::with_capacity(cloud.len());
    for (x, y) in pairs {
        c.extend(x);
        t.extend(y);
    }
    (c, t)
}

/// `1.1 h max speed` over each sample and its neighbours.
fn slack_all(m: &SampledSubmanifold, speeds: &[f64]) -> Vec<f64> {
    par::map_indices(m.len(), |i| {
        let top = core::iter::once(i).chain(m.neighbors(i)).map(|j| speeds[j]).fold(0.0, f64::max);
        1.1 * m.h * top
    })
}

fn hop_distance(m: &SampledSubmanifold, sources: &[bool]) -> Vec<u32> {
    let mut d = vec![u32::MAX; m.len()];
    let mut queue = VecDeque::new();
    for (i, &s) in sources.iter().enumerate() {
        if s {
            d[i] = 0;
            queue.push_back(i);
        }
    }
    while let Some(i) = queue.pop_front() {
        for j in m.neighbors(i) {
            if d[j] == u32::MAX {
                d[j] = d[i] + 1;
                queue.push_back(j);
            }
        }
    }
    d
}


/// Samples of `inner` violating `inner in interior(outer)`.
fn interior_violations(m: &SampledSubmanifold, inner: &ParameterCompact, outer: &ParameterCompact) -> usize {
    inner
        .samples
        .iter()
        .filter(|&&i| !outer.contains(i) || m.neighbors(i).count() < 6 || m.neighbors(i).any(|j| !outer.contains(j)))
        .count()
}

/// Smallest parameter distance from `inner` to a sample outside `outer`.
fn param_separation(m: &SampledSubmanifold, inner: &ParameterCompact, outer: &ParameterCompact) -> f64 {
    let ring: Vec<usize> = (0..m.len()).filter(|&i| !outer.contains(i) && m.neighbors(i).any(|j| outer.contains(j))).collect();
    let src: &[usize] = if inner.boundary.is_empty() { &inner.samples } else { &inner.boundary };
    let best = par::map_slice(&ring, |&o| {
        let z = m.param(o);
        src.iter().map(|&s| (m.param(s) - z).norm()).fold(f64::INFINITY, f64::min)
    });
    best.into_iter().fold(f64::INFINITY, f64::min)
}

fn sup_dist_on(idx: &[usize], n: usize, a: &[C64], b: &[C64]) -> f64 {
    idx.iter().map(|&i| point::dist(chunk(a, n, i), chunk(b, n, i))).fold(0.0, f64::max)
}

fn prefix_distance(lab: &Labyrinth, k0: usize, z: &[C64]) -> f64 {
    let x = point::to_real(z);
    lab.balls[..k0.min(lab.len())].iter().map(|b| b.distance(&x)).fold(f64::INFINITY, f64::min)
}

fn gather(idx: &[usize], n: usize, cloud: &[C64]) -> Vec<C64> {
    idx.iter().flat_map(|&i| chunk(cloud, n, i).iter().copied()).collect()
}

fn point_at(cloud: &[C64], n: usize, i: usize) -> CPoint {
    CPoint(chunk(cloud, n, i).to_vec())
}

/// `f_i` as a word: `phi_base`, then `f_{i-1}`, then `theta`, then `phi`.
fn stage_word(f_prev: &AutWord, rec: &StageRecord) -> AutWord {
    rec.phi_base.compose(f_prev).compose(&rec.theta).compose(&rec.phi)
}

/// Images and tangents of every sample under `f0`.
fn base_images(m: &SampledSubmanifold) -> (Vec<C64>, Vec<C64>) {
    let pairs = par::map_indices(m.len(), |i| {
        let z = m.param(i);
        (m.f0(z).0, m.tangent(z).0)
    });
    let mut c = Vec::with_capacity(m.len() * m.n);
    let mut t = Vec::with_capacity(m.len() * m.n);
    for (x, y) in pairs {
        c.extend(x);
        t.extend(y);
    }
    (c, t)
}

/// The samples of `mask` connected inside it to one of `seeds`.
fn reach(m: &SampledSubmanifold, mask: &[bool], seeds: &[usize]) -> Vec<bool> {
    let mut out = vec![false; m.len()];
    let mut queue: VecDeque<usize> = VecDeque::new();
    for &s in seeds {
        if mask[s] && !out[s] {
            out[s] = true;
            queue.push_back(s);
        }
    }
    while let Some(i) = queue.pop_front() {
        for j in m.neighbors(i) {
            if mask[j] && !out[j] {
                out[j] = true;
                queue.push_back(j);
            }
        }
    }
    out
}

/// Whole space: the components of `{|g| <= t}` meeting `seeds`. Far
/// components, where a steep map happens to return to small values, are
/// left out.
fn main_sublevel(m: &SampledSubmanifold, norms: &[f64], t: f64, seeds: &[usize]) -> Result<ParameterCompact, GeometryError> {
    if !(t > 0.0) {
        return Err(GeometryError::InvalidThreshold(t));
    }
    let mask: Vec<bool> = norms.iter().map(|&r| r <= t).collect();
    ParameterCompact::from_mask(m, reach(m, &mask, seeds), CompactRule::Sublevel { threshold: t, component_seed: None })
}

/// Realized sets and images of a stage.
struct Realized {
    lab: Labyrinth,
    g_cloud: Vec<C64>,
    g_tan: Vec<C64>,
    k_prime: ParameterCompact,
    f_cloud: Vec<C64>,
    f_tan: Vec<C64>,
    k: ParameterCompact,
}

fn realize(m: &SampledSubmanifold, kind: EngineKind, st: &StageState, rec: &StageRecord) -> Result<Realized, EngineError> {
    let n = m.n;
    let stage = rec.index;
    let lab = rec.labyrinth.generate(n).map_err(|source| EngineError::Labyrinth { stage, source })?;
    let (g_cloud, g_tan) = advance(&rec.theta, &st.cloud, &st.tangents);
    let g_norms = chunk_norms(&g_cloud, n);
    let seed = match kind {
        EngineKind::Main => None,
        EngineKind::Ball => Some(rec.component_seed.ok_or_else(|| stage_err(stage, "ball stage without component seed"))?),
    };
    let k_prime = match kind {
        EngineKind::Main => main_sublevel(m, &g_norms, rec.prime_threshold, &st.k.samples)?,
        EngineKind::Ball => sublevel_from_norms(m, &g_norms, rec.prime_threshold, seed)?,
    };
    let (f_cloud, f_tan) = if rec.phi_base.is_empty() {
        advance(&rec.phi, &g_cloud, &g_tan)
    } else {
        let (c, t) = base_images(m);
        advance(&stage_word(&st.f, rec), &c, &t)
    };
    let f_norms = chunk_norms(&f_cloud, n);
    let mut mask: Vec<bool> = f_norms.iter().map(|&r| r <= rec.k_rule.threshold).collect();
    if let Some(s) = rec.k_rule.component_seed {
        let comp = if mask[s] { m.component(&mask, s) } else { Vec::new() };
        mask = vec![false; m.len()];
        for c in comp {
            mask[c] = true;
        }
    }
    if rec.k_rule.dilation_hops > 0 {
        let d = hop_distance(m, k_prime.mask());
        for (i, &x) in d.iter().enumerate() {
            if x as usize <= rec.k_rule.dilation_hops {
                mask[i] = true;
            }
        }
    }
    let mut src = vec![false; m.len()];
    src[rec.b] = true;
    let d = hop_distance(m, &src);
    let mut core: Vec<usize> = k_prime.samples.iter().chain(&rec.arc).copied().collect();
    core.extend((0..m.len()).filter(|&i| d[i] as usize <= rec.k_rule.b_hops));
    for &i in &core {
        mask[i] = true;
    }
    if kind == EngineKind::Main {
        mask = reach(m, &mask, &core);
    }
    let k = ParameterCompact::from_mask(m, mask, CompactRule::Explicit)?;
    Ok(Realized { lab, g_cloud, g_tan, k_prime, f_cloud, f_tan, k })
}

/// Re-derives every margin of `rec` from its words and rules, starting from
/// the state after the previous stage. Returns the margins (with the stored
/// `eps_i`) and the next state.
pub fn evaluate_stage(
    m: &SampledSubmanifold,
    kind: EngineKind,
    budgets: &Budgets,
    st: &StageState,
    rec: &StageRecord,
) -> Result<(StageMargins, StageState), EngineError> {
    let n = m.n;
    let h = m.h;
    let z = realize(m, kind, st, rec)?;
    let k0 = rec.k0.min(z.lab.len());
    let mut mg = StageMargins { eps_prev: rec.eps_prev, theta_bound: rec.margins.theta_bound, ..Default::default() };

    // theta conditions
    mg.theta_sup = sup_dist_on(&st.k.samples, n, &z.g_cloud, &st.cloud);
    mg.theta_fixed = st.hits.iter().map(|(_, a)| rec.theta.eval(a).dist(a)).fold(0.0, f64::max);
    let g_speed = chunk_norms(&z.g_tan, n);
    let g_slack = slack_all(m, &g_speed);
    let per_sample = par::map_indices(m.len(), |i| {
        let x = chunk(&z.g_cloud, n, i);
        if !point::norm(x).is_finite() {
            return (f64::INFINITY, f64::INFINITY);
        }
        let d3 = point::dist(x, &rec.a.0) - g_slack[i];
        let d4 = if k0 == 0 { f64::INFINITY } else { prefix_distance(&z.lab, k0, x) - g_slack[i] };
        (d3, d4)
    });
    let g_word = st.f.compose(&rec.theta);
    let all: Vec<usize> = (0..m.len()).collect();
    let mut d3: Vec<f64> = per_sample.iter().map(|p| p.0).collect();
    let mut d4: Vec<f64> = per_sample.iter().map(|p| p.1).collect();
    metric::refine_margins(m, &g_word, &all, &mut d3, &|x| point::dist(x, &rec.a.0));
    if k0 > 0 {
        metric::refine_margins(m, &g_word, &all, &mut d4, &|x| prefix_distance(&z.lab, k0, x));
    }
    mg.dist_iii = d3.iter().copied().fold(f64::INFINITY, f64::min);
    mg.clearance_iv = d4.iter().copied().fold(f64::INFINITY, f64::min);
    mg.margin_v_ball = match kind {
        EngineKind::Ball => st
            .k
            .samples
            .iter()
            .map(|&i| rec.r - point::norm(chunk(&z.g_cloud, n, i)) - g_slack[i])
            .fold(f64::INFINITY, f64::min),
        EngineKind::Main => f64::INFINITY,
    };

    // stage conditions
    mg.sup_i = sup_dist_on(&st.k.samples, n, &z.f_cloud, &st.cloud);
    mg.hit_max = st
        .hits
        .iter()
        .map(|(b, a)| (*b, a))
        .chain(core::iter::once((rec.b, &rec.a)))
        .map(|(b, a)| point::dist(chunk(&z.f_cloud, n, b), &a.0))
        .fold(0.0, f64::max);
    let f_word = stage_word(&st.f, rec);
    let cert = metric::stage_distance_certificate(&CertificateInput {
        m,
        f: &f_word,
        k_prev: &st.k,
        k_prime: &z.k_prime,
        r_prime: rec.r_prime,
        r_outer: rec.r_outer,
        lab: &z.lab,
        k0,
    });
    mg.cert_inner = cert.inner_margin;
    mg.cert_outer = cert.outer_margin;
    mg.cert_labyrinth = cert.labyrinth_margin;
    mg.cert_lipschitz = cert.lipschitz;
    mg.cert_bound = cert.bound;
    mg.labyrinth_balls = z.lab.len() as f64;
    mg.labyrinth_ledger = z.lab.ledger_sum();

    // stability
    let f_speed = chunk_norms(&z.f_tan, n);
    mg.immersion = z.k_prime.samples.iter().map(|&i| f_speed[i]).fold(f64::INFINITY, f64::min);
    mg.injectivity = metric::injectivity_margin(m, &f_word, &st.k, budgets.eta).margin;
    mg.chord = metric::chord_ratio(m, &f_word, &st.k, budgets.eta, budgets.chord_samples);
    mg.separation = param_separation(m, &z.k_prime, &z.k);
    mg.cauchy = 1.0 / (mg.separation - 2.0 * h).max(h);

    // ball containment
    let f_norms = chunk_norms(&z.f_cloud, n);
    let (bd, full) = (
        z.k.boundary.iter().map(|&i| f_norms[i]).fold(0.0, f64::max),
        z.k.samples.iter().map(|&i| f_norms[i]).fold(0.0, f64::max),
    );
    match kind {
        EngineKind::Ball => {
            mg.ball_boundary = 1.0 - bd;
            mg.ball_full = 1.0 - full;
        }
        EngineKind::Main => {
            mg.ball_boundary = f64::NAN;
            mg.ball_full = f64::NAN;
        }
    }

    // nesting and truncation
    mg.nest_prev = interior_violations(m, &st.k, &z.k_prime) as f64;
    mg.nest_prime = interior_violations(m, &z.k_prime, &z.k) as f64;
    mg.b_placement = if z.k.contains(rec.b) && !z.k_prime.contains(rec.b) { 0.0 } else { 1.0 };
    mg.truncation = z.k.samples.iter().filter(|&&i| m.on_grid_edge(i)).count() as f64;
    mg.nonfinite = z.k.samples.iter().filter(|&&i| !f_norms[i].is_finite()).count() as f64;
    mg.k_prev_samples = st.k.len() as f64;
    mg.k_prime_samples = z.k_prime.len() as f64;
    mg.k_samples = z.k.len() as f64;
    mg.empirical_distance = if z.k.len() <= budgets.empirical_max_samples && mg.nonfinite == 0.0 {
        empirical_exit_distance(m, &f_word, &st.k, &z.k_prime, &z.k, budgets.quadrature)
    } else {
        f64::NAN
    };

    let mg = mg.with_eps(rec.eps);
    let mut hits = st.hits.clone();
    hits.push((rec.b, rec.a.clone()));
    let next = StageState { f: f_word, cloud: z.f_cloud, tangents: z.f_tan, k: z.k, k_prime: z.k_prime, eps: rec.eps, hits };
    Ok((mg, next))
}

/// Pullback graph distance from `K_prev` to the samples of `K` outside `K'`.
fn empirical_exit_distance(
    m: &SampledSubmanifold,
    f: &AutWord,
    k_prev: &ParameterCompact,
    k_prime: &ParameterCompact,
    k: &ParameterCompact,
    quadrature: usize,
) -> f64 {
    let Ok(g) = PullbackGraph::build(m, f, Some(k.mask()), quadrature) else {
        return f64::NAN;
    };
    let d = g.distances_from(&k_prev.samples);
    k.samples.iter().filter(|&&i| !k_prime.contains(i)).map(|&i| d[i]).fold(f64::INFINITY, f64::min)
}

/// Margins of `g` that `phi` must not use up.
struct Room {
    inner: f64,
    outer: f64,
    lab: f64,
    cond_i: f64,
}

impl Room {
    fn min(&self) -> f64 {
        self.inner.min(self.outer).min(self.lab).min(self.cond_i)
    }
}

/// `word` maps the `f0` images to `cloud`; it re-bounds failing samples.
#[allow(clippy::too_many_arguments)]
fn room(
    m: &SampledSubmanifold,
    word: &AutWord,
    cloud: &[C64],
    tan: &[C64],
    prev_cloud: &[C64],
    k_prev: &ParameterCompact,
    k_prime: &ParameterCompact,
    inner_radius: f64,
    r_outer: f64,
    lab: &Labyrinth,
    k0: usize,
    eps_prev: f64,
) -> Room {
    let n = m.n;
    let slack = slack_all(m, &chunk_norms(tan, n));
    let min = |v: Vec<f64>| v.into_iter().fold(f64::INFINITY, f64::min);
    let mut inner: Vec<f64> = k_prev.samples.iter().map(|&i| inner_radius - point::norm(chunk(cloud, n, i)) - slack[i]).collect();
    metric::refine_margins(m, word, &k_prev.samples, &mut inner, &|x| inner_radius - point::norm(x));
    let mut outer: Vec<f64> = k_prime.boundary.iter().map(|&i| point::norm(chunk(cloud, n, i)) - r_outer - slack[i]).collect();
    metric::refine_margins(m, word, &k_prime.boundary, &mut outer, &|x| point::norm(x) - r_outer);
    let lab_d = if k0 == 0 {
        f64::INFINITY
    } else {
        let mut v = par::map_slice(&k_prime.samples, |&i| prefix_distance(lab, k0, chunk(cloud, n, i)) - slack[i]);
        metric::refine_margins(m, word, &k_prime.samples, &mut v, &|x| prefix_distance(lab, k0, x));
        min(v)
    };
    let cond_i = eps_prev - sup_dist_on(&k_prev.samples, n, cloud, prev_cloud);
    Room { inner: min(inner), outer: min(outer), lab: lab_d, cond_i }
}

/// Picks the best of several labyrinth rotations: the one whose prefix is
/// farthest from the current image cloud. Grows `outer` until the ledger
/// reaches `target` unless `fixed_outer`.
#[allow(clippy::too_many_arguments)]
fn choose_labyrinth(
    cfg: &EngineConfig,
    stage: usize,
    cloud: &[C64],
    inner: f64,
    outer: f64,
    target: f64,
    fixed_outer: bool,
) -> Result<(LabyrinthParams, Labyrinth, usize), EngineError> {
    let n = cfg.n;
    let b = &cfg.budgets;
    let norms = chunk_norms(cloud, n);
    let mut outer = outer;
    let mut target = target;
    for _grow in 0..16 {
        let shell: Vec<usize> = (0..norms.len()).filter(|&i| norms[i] >= inner * 0.99 && norms[i] <= outer * 1.01).collect();
        let mut best: Option<(f64, LabyrinthParams, Labyrinth, usize)> = None;
        let mut achievable = 0.0;
        for rot in 0..b.rotations.max(1) {
            let params = LabyrinthParams {
                inner,
                outer,
                target,
                seed: sub_seed(cfg.seed, stage, 0x1ab + rot as u64),
                gap_fraction: b.facet_gap,
                max_balls: b.max_balls,
            };
            match params.generate(n) {
                Ok(lab) => {
                    let k0 = lab.prefix_for_length(target).map_err(|source| EngineError::Labyrinth { stage, source })?;
                    let score = par::map_slice(&shell, |&i| prefix_distance(&lab, k0, chunk(cloud, n, i)))
                        .into_iter()
                        .fold(f64::INFINITY, f64::min);
                    if best.as_ref().map_or(true, |(s, ..)| score > *s) {
                        best = Some((score, params, lab, k0));
                    }
                }
                Err(LabyrinthError::Infeasible { achievable: a, .. }) => {
                    achievable = a;
                    break;
                }
                Err(source) => return Err(EngineError::Labyrinth { stage, source }),
            }
        }
        if let Some((_, p, lab, k0)) = best {
            return Ok((p, lab, k0));
        }
        if fixed_outer {
            if !(achievable > 0.0) {
                return Err(stage_err(stage, "no labyrinth fits the shell"));
            }
            // the shell is too thin for the ledger: build the best achievable
            target = achievable * (1.0 - 1e-9);
        } else {
            outer += 1.2 * (target - achievable).max(0.0) + 0.05 * outer;
        }
    }
    Err(EngineError::Labyrinth { stage, source: LabyrinthError::Infeasible { target, achievable: 0.0 } })
}

/// Appends an exact corrector so that `word(q)` equals `a` to rounding.
fn polish(word: AutWord, q: &CPoint, a: &CPoint, fixed: &[CPoint], opts: &MoverOptions) -> AutWord {
    let cur = word.eval(q);
    if cur.dist(a) <= 1e-15 * (1.0 + a.norm()) {
        return word;
    }
    match point_mover_flat(fixed, &cur, a, &[], 1e-6, opts) {
        Ok(rep) => word.compose(&rep.word),
        Err(_) => word,
    }
}

#[allow(clippy::too_many_arguments)]
fn theta_for(
    cfg: &EngineConfig,
    stage: usize,
    st: &StageState,
    a: &CPoint,
    future: &[CPoint],
    lab: &Labyrinth,
    k0: usize,
    bound: f64,
) -> Result<AutWord, EngineError> {
    let fixed: Vec<CPoint> = st.hits.iter().map(|(_, a)| a.clone()).chain(future.iter().cloned()).collect();
    let mut opts = cfg.budgets.theta.clone();
    opts.seed = sub_seed(cfg.seed, stage, 0x7e7a);
    opts.mover.seed = sub_seed(cfg.seed, stage, 0x7e7b);
    let input = ThetaInput {
        n: cfg.n,
        cloud: &st.cloud,
        tangents: &st.tangents,
        stay: &st.k.samples,
        hit_targets: &fixed,
        a_next: Some(a),
        lab,
        k0,
        bound,
    };
    build_theta_from(&input, &opts).map(|r| r.word).map_err(|source| EngineError::Pushoff { stage, source })
}

fn finalize(m: &SampledSubmanifold, cfg: &EngineConfig, st: &StageState, mut rec: StageRecord) -> Result<(StageRecord, StageState), EngineError> {
    let (mg, next) = evaluate_stage(m, cfg.engine, &cfg.budgets, st, &rec)?;
    let eps = choose_eps(rec.eps_prev, cfg.budgets.eps_ratio, mg.injectivity, mg.chord, mg.immersion, mg.cauchy);
    let mg = mg.with_eps(eps);
    rec.eps = eps;
    let next = StageState { eps, ..next };
    rec.failures = mg.failures(cfg.engine).into_iter().map(String::from).collect();
    rec.certified = rec.failures.is_empty();
    rec.margins = mg;
    Ok((rec, next))
}

/// Candidate target samples outside `k_prime`, nearest first and shuffled
/// within each hop shell.
fn b_candidates(m: &SampledSubmanifold, k_prime: &ParameterCompact, allowed: impl Fn(usize) -> bool, seed: u64, cap: usize) -> Vec<usize> {
    let hops = hop_distance(m, k_prime.mask());
    let mut rank: Vec<usize> = (0..m.len()).collect();
    rank.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut pos = vec![0usize; m.len()];
    for (p, &i) in rank.iter().enumerate() {
        pos[i] = p;
    }
    let mut cands: Vec<usize> = (0..m.len()).filter(|&i| hops[i] != u32::MAX && hops[i] >= 3 && allowed(i)).collect();
    cands.sort_by_key(|&i| (hops[i], pos[i]));
    cands.truncate(cap);
    cands
}

/// Largest Frobenius norm of the derivative of `word` over a flattened cloud.
fn base_lipschitz(word: &AutWord, cloud: &[C64], n: usize) -> f64 {
    let norms = par::map_indices(cloud.len() / n, |i| {
        let x = chunk(cloud, n, i);
        (0..n)
            .map(|k| {
                let e = CPoint::basis(n, k);
                let (_, d) = word.eval_with_directional(x, &e.0);
                point::norm(&d).powi(2)
            })
            .sum::<f64>()
            .sqrt()
    });
    norms.into_iter().fold(1.0, |a, b| if b.is_finite() { a.max(b) } else { f64::INFINITY })
}

/// Centroid of the boundary of `k` in the parameter and the largest
/// distance from it.
fn param_disc(m: &SampledSubmanifold, k: &ParameterCompact) -> (C64, f64) {
    let ring = if k.boundary.is_empty() { &k.samples } else { &k.boundary };
    let centre = ring.iter().map(|&i| m.param(i)).fold(C64::new(0.0, 0.0), |a, b| a + b) / ring.len().max(1) as f64;
    let radius = ring.iter().map(|&i| (m.param(i) - centre).norm()).fold(0.0, f64::max);
    (centre, radius)
}

/// Target samples for the base mover: outside `K_i'` by three hops and at
/// least `base_ratio` times its radius from its centre.
fn base_candidates(m: &SampledSubmanifold, k_prime: &ParameterCompact, bud: &Budgets, seed: u64) -> Vec<usize> {
    let (centre, radius) = param_disc(m, k_prime);
    let min_r = bud.base_ratio * radius;
    let edge = 4.0 * m.h;
    let all = b_candidates(
        m,
        k_prime,
        |i| (m.param(i) - centre).norm() >= min_r && m.param(i).norm() <= m.rho - edge,
        seed,
        usize::MAX,
    );
    // a few samples per geometric ring: the nearest feasible ring wins
    let ring_of = |i: usize| (((m.param(i) - centre).norm() / min_r).ln() / 1.05f64.ln()).floor() as i64;
    let mut per_ring: BTreeMap<i64, usize> = BTreeMap::new();
    let mut out = Vec::new();
    for i in all {
        let c = per_ring.entry(ring_of(i)).or_insert(0);
        if *c < 3 {
            *c += 1;
            out.push((ring_of(i), out.len(), i));
        }
    }
    out.sort();
    out.into_iter().map(|(_, _, i)| i).take(bud.b_candidates).collect()
}

/// One whole-space stage.
///
/// `future` lists the targets of later stages; every map built here fixes
/// them, so their preimages stay where they are.
pub fn run_stage_main(
    m: &SampledSubmanifold,
    cfg: &EngineConfig,
    st: &StageState,
    stage: usize,
    a: &CPoint,
    future: &[CPoint],
) -> Result<(StageRecord, StageState), EngineError> {
    let n = m.n;
    let bud = &cfg.budgets;
    let eps_prev = st.eps;
    let prev_norms = chunk_norms(&st.cloud, n);
    // enclose the grid slack as well, or a steep K_{i-1} leaves no inner room
    let prev_slack = slack_all(m, &chunk_norms(&st.tangents, n));
    let mut upper: Vec<f64> = st.k.samples.iter().map(|&i| prev_norms[i] + prev_slack[i]).collect();
    let steep: Vec<usize> = (0..upper.len())
        .filter(|&p| prev_slack[st.k.samples[p]] > 0.05 * (1.0 + prev_norms[st.k.samples[p]]))
        .take(metric::REFINE_MAX)
        .collect();
    let tighter = par::map_slice(&steep, |&p| -metric::refine_cell(m, &st.f, st.k.samples[p], &|x| -point::norm(x)));
    for (&p, u) in steep.iter().zip(tighter) {
        upper[p] = upper[p].min(u);
    }
    let enclosing = upper.into_iter().fold(0.0, f64::max);
    let r = cfg.radii.enclose * enclosing;
    let r_prime = (1.0 + cfg.radii.gap) * r;
    let target = (1.0 / eps_prev) * (1.0 + 1e-6);
    let outer0 = (cfg.radii.outer * r_prime).max(r_prime + 1.05 * target);
    let (lab_params, lab, k0) = choose_labyrinth(cfg, stage, &st.cloud, r_prime, outer0, target, false)?;
    let r_outer = lab_params.outer;
    let theta_bound = (0.5 * eps_prev).min(r_prime - r);
    let theta = theta_for(cfg, stage, st, a, future, &lab, k0, theta_bound)?;
    let (g_cloud, g_tan) = advance(&theta, &st.cloud, &st.tangents);
    let g_norms = chunk_norms(&g_cloud, n);
    let g_slack = slack_all(m, &chunk_norms(&g_tan, n));

    // K_i' = {|g| <= R + delta}, delta large enough to dominate the grid slack
    // a sampled boundary above R + delta must certifiably stay above R +
    // delta / 3 over its cells; steep maps need a wider band
    let h_word = st.f.compose(&theta);
    let mut delta: f64 = 1.0;
    let mut k_prime = main_sublevel(m, &g_norms, r_outer + delta, &st.k.samples)?;
    for _ in 0..12 {
        let band = r_outer + delta / 3.0;
        let mut v: Vec<f64> = k_prime.boundary.iter().map(|&i| g_norms[i] - band - g_slack[i]).collect();
        metric::refine_margins(m, &h_word, &k_prime.boundary, &mut v, &|x| point::norm(x) - band);
        if v.iter().all(|&x| x > 0.0) {
            break;
        }
        delta *= 2.0;
        k_prime = main_sublevel(m, &g_norms, r_outer + delta, &st.k.samples)?;
    }
    if k_prime.touches_grid_edge(m) {
        return Err(stage_err(stage, format!("K_i' reaches the grid edge (rho_param {} binds)", m.rho)));
    }
    let prime_threshold = r_outer + delta;
    let fixed: Vec<CPoint> = st.hits.iter().map(|(_, a)| a.clone()).chain(future.iter().cloned()).collect();
    let rm = room(m, &h_word, &g_cloud, &g_tan, &st.cloud, &st.k, &k_prime, r_prime, r_outer, &lab, k0, eps_prev);
    if !(rm.min() > 0.0) {
        return Err(stage_err(stage, format!(
                "theta leaves no room for phi (inner {:e}, outer {:e}, labyrinth {:e}, near identity {:e})",
                rm.inner, rm.outer, rm.lab, rm.cond_i
            )));
    }
    // In base coordinates the curve is the flat `f0(X)`: a shear in the
    // parameter lifts `f0(b)` off it and a second one, damped around the
    // curve, carries it to the preimage of `a`. In the image no single shear
    // can do this once every complex line through `a` meets `g(K_i')`.
    let a_hat = h_word.inverse().eval(a);
    if !a_hat.norm().is_finite() {
        return Err(stage_err(stage, "the preimage of the target is not finite"));
    }
    let base: Vec<C64> = k_prime.boundary.iter().flat_map(|&i| m.f0_sample(i).0).collect();
    let lift = base_lipschitz(&h_word, &base, n);
    let fixed_hat: Vec<CPoint> = st.hits.iter().map(|&(b, _)| m.f0_sample(b)).chain(future.iter().cloned()).collect();
    let cands = base_candidates(m, &k_prime, bud, sub_seed(cfg.seed, stage, 0xb1));
    if cands.is_empty() {
        return Err(stage_err(stage, format!("no target sample clears K_i' (rho_param {} binds)", m.rho)));
    }
    let (f0_cloud, f0_tan) = base_images(m);
    let mut mover = bud.mover.clone();
    mover.seed = sub_seed(cfg.seed, stage, 0x5eed);
    let (_, radius) = param_disc(m, &k_prime);
    mover.max_degree = ((bud.base_slope * radius / m.h) as usize).clamp(4, bud.base_degree.max(4));
    let mut last_err = None;
    let mut chosen = None;
    'search: for &b in &cands {
        let q_hat = m.f0_sample(b);
        let mut tau = 0.5 * rm.min() / lift;
        for _ in 0..bud.tau_retries.max(1) {
            match point_mover_flat(&fixed_hat, &q_hat, &a_hat, &base, tau, &mover) {
                Ok(rep) => {
                    let w = rep.word.compose(&h_word);
                    let phi = polish(AutWord::identity(n), &w.eval(&q_hat), a, &fixed, &mover);
                    let full = w.compose(&phi);
                    let (fc, ft) = advance(&full, &f0_cloud, &f0_tan);
                    let after = room(m, &full, &fc, &ft, &st.cloud, &st.k, &k_prime, r_prime, r_outer, &lab, k0, eps_prev);
                    let moved = sup_dist_on(&k_prime.boundary, n, &fc, &g_cloud);
                    if after.min() > 0.0 && moved < rm.min() {
                        chosen = Some((b, rep.word, phi));
                        break 'search;
                    }
                    tau *= 0.25;
                }
                Err(e) => {
                    last_err = Some(e);
                    continue 'search;
                }
            }
        }
    }
    let Some((b, phi_base, phi)) = chosen else {
        return Err(match last_err {
            Some(source) => EngineError::Interp { stage, source },
            None => stage_err(stage, "phi could not keep the containment margins"),
        });
    };
    let rec = StageRecord {
        index: stage,
        eps_prev,
        eps: f64::NAN,
        r,
        r_prime,
        r_outer,
        rho: None,
        labyrinth: lab_params,
        k0,
        theta,
        phi_base,
        phi,
        prime_threshold,
        component_seed: None,
        v_threshold: None,
        k_rule: KRule { threshold: cfg.radii.k_factor * prime_threshold, component_seed: None, dilation_hops: 0, b_hops: 0 },
        b,
        b_param: m.param(b),
        a: a.clone(),
        arc: Vec::new(),
        margins: StageMargins { theta_bound, ..Default::default() },
        certified: false,
        failures: Vec::new(),
    };
    finalize(m, cfg, st, rec)
}

/// Shortest lattice path from `b` through `region` (outside `k_prime`) to a
/// sample of `k_prime`, returned from that sample to `b`.
fn arc_to(m: &SampledSubmanifold, region: &[bool], k_prime: &ParameterCompact, b: usize) -> Option<Vec<usize>> {
    let mut prev = vec![usize::MAX; m.len()];
    let mut queue = VecDeque::new();
    prev[b] = b;
    queue.push_back(b);
    while let Some(i) = queue.pop_front() {
        for j in m.neighbors(i) {
            if prev[j] != usize::MAX {
                continue;
            }
            if k_prime.contains(j) {
                let mut path = vec![j, i];
                let mut c = i;
                while c != b {
                    c = prev[c];
                    path.push(c);
                }
                return Some(path);
            }
            if region[j] {
                prev[j] = i;
                queue.push_back(j);
            }
        }
    }
    None
}

/// One ball-constrained stage.
pub fn run_stage_ball(m: &SampledSubmanifold, cfg: &EngineConfig, st: &StageState, stage: usize, a: &CPoint) -> Result<(StageRecord, StageState), EngineError> {
    let n = m.n;
    let rd = &cfg.radii;
    if !(a.norm() < 1.0) {
        return Err(stage_err(stage, "target is not in the open unit ball"));
    }
    let eps_prev = st.eps;
    let prev_norms = chunk_norms(&st.cloud, n);
    let prev_slack = slack_all(m, &chunk_norms(&st.tangents, n));
    let enclosing = st.k.samples.iter().map(|&i| prev_norms[i]).fold(0.0, f64::max);
    let inner_slack = st.k.samples.iter().map(|&i| prev_slack[i]).fold(0.0, f64::max);
    let r = enclosing + 2.0 * inner_slack + 0.05 * (1.0 - enclosing);
    if !(r < 1.0) {
        return Err(stage_err(stage, format!("K_{{i-1}} fills the ball (r = {r})")));
    }
    let gap = 1.0 - r;
    let at = |frac: f64| 1.0 - frac * gap;
    let (r_outer, rho, v_thr, region_r, k_thr) = (at(rd.ball_outer), at(rd.ball_rho), at(rd.ball_v), at(rd.ball_region), at(rd.ball_k));
    let target = (1.0 / eps_prev) * (1.0 + 1e-6);
    let (lab_params, lab, k0) = choose_labyrinth(cfg, stage, &st.cloud, r, r_outer, target, true)?;
    let theta_bound = (0.5 * eps_prev).min(0.9 * (r - enclosing - inner_slack));
    let radii = BallRadii { r, r_outer, rho, v_thr, region_r, k_thr, theta_bound };
    match ball_attempt(m, cfg, st, stage, a, &radii, &lab_params, &lab, k0) {
        Err(first) if k0 > 0 => {
            // the shell is too thin for a blocking prefix to leave the arc
            // any room; an empty prefix gives a stage whose (iii) fails
            ball_attempt(m, cfg, st, stage, a, &radii, &lab_params, &lab, 0)
                .map_err(|second| stage_err(stage, format!("with the labyrinth prefix: {first}; without it: {second}")))
        }
        other => other,
    }
}

struct BallRadii {
    r: f64,
    r_outer: f64,
    rho: f64,
    v_thr: f64,
    region_r: f64,
    k_thr: f64,
    theta_bound: f64,
}

#[allow(clippy::too_many_arguments)]
fn ball_attempt(
    m: &SampledSubmanifold,
    cfg: &EngineConfig,
    st: &StageState,
    stage: usize,
    a: &CPoint,
    radii: &BallRadii,
    lab_params: &LabyrinthParams,
    lab: &Labyrinth,
    k0: usize,
) -> Result<(StageRecord, StageState), EngineError> {
    let n = m.n;
    let bud = &cfg.budgets;
    let eps_prev = st.eps;
    let BallRadii { r, r_outer, rho, v_thr, region_r, k_thr, theta_bound } = *radii;
    let theta = theta_for(cfg, stage, st, a, &[], lab, k0, theta_bound)?;
    let (g_cloud, g_tan) = advance(&theta, &st.cloud, &st.tangents);
    let g_norms = chunk_norms(&g_cloud, n);
    let seed = st.k.samples.iter().copied().min_by(|&x, &y| g_norms[x].total_cmp(&g_norms[y]).then(x.cmp(&y))).expect("K nonempty");
    let k_prime = sublevel_from_norms(m, &g_norms, rho, Some(seed))?;
    let v_mask = {
        let mask: Vec<bool> = g_norms.iter().map(|&x| x <= v_thr).collect();
        let comp = m.component(&mask, seed);
        let mut v = vec![false; m.len()];
        for c in comp {
            v[c] = true;
        }
        v
    };
    if k_prime.touches_grid_edge(m) {
        return Err(stage_err(stage, "K_i' reaches the grid edge"));
    }
    let fixed: Vec<CPoint> = st.hits.iter().map(|(_, a)| a.clone()).collect();
    let g_word = st.f.compose(&theta);
    let rm = room(m, &g_word, &g_cloud, &g_tan, &st.cloud, &st.k, &k_prime, r, r_outer, lab, k0, eps_prev);
    let cands = b_candidates(m, &k_prime, |i| v_mask[i] && !m.on_grid_edge(i), sub_seed(cfg.seed, stage, 0xb1), bud.b_candidates);
    if cands.is_empty() {
        return Err(stage_err(stage, "V \\ K_i' has no sample at distance >= 2h from K_i'"));
    }
    // waypoint planning uses a thinned copy of g(K_i'); near-identity is
    // enforced on all of it
    let stride = (k_prime.len() / 3000).max(1);
    let mut compact_idx: Vec<usize> = k_prime.samples.iter().copied().step_by(stride).collect();
    compact_idx.extend(k_prime.boundary.iter().copied());
    compact_idx.sort_unstable();
    compact_idx.dedup();
    let compact = gather(&compact_idx, n, &g_cloud);
    let region = move |z: &[C64]| region_r - point::norm(z);
    let mut comb = bud.comb.clone();
    comb.seed = sub_seed(cfg.seed, stage, 0xc0b);
    comb.mover.seed = sub_seed(cfg.seed, stage, 0x5eed);
    let mut last_err = None;
    let mut chosen = None;
    'search: for &b in &cands {
        let Some(arc) = arc_to(m, &v_mask, &k_prime, b) else { continue };
        let arc_pts: Vec<CPoint> = arc.iter().map(|&i| point_at(&g_cloud, n, i)).collect();
        let q = point_at(&g_cloud, n, b);
        let mut tau = 0.5 * rm.min();
        if !(tau > 0.0) {
            return Err(stage_err(stage, format!(
                "theta leaves no room for phi (inner {:e}, outer {:e}, labyrinth {:e}, near identity {:e})",
                rm.inner, rm.outer, rm.lab, rm.cond_i
            )));
        }
        for _ in 0..bud.tau_retries.max(1) {
            match arc_comb_with(&compact, &arc_pts, a, tau, &fixed, &region, &comb) {
                Ok(rep) => {
                    let phi = polish(rep.word, &q, a, &fixed, &comb.mover);
                    let (fc, ft) = advance(&phi, &g_cloud, &g_tan);
                    let after = room(m, &g_word.compose(&phi), &fc, &ft, &st.cloud, &st.k, &k_prime, r, r_outer, lab, k0, eps_prev);
                    let fc_norms = chunk_norms(&fc, n);
                    let arc_in = arc.iter().all(|&i| fc_norms[i] < k_thr);
                    if after.min() > 0.0 && arc_in {
                        chosen = Some((b, arc, phi));
                        break 'search;
                    }
                    tau *= 0.25;
                }
                Err(e) => {
                    last_err = Some(e);
                    continue 'search;
                }
            }
        }
    }
    let Some((b, arc, phi)) = chosen else {
        return Err(match last_err {
            Some(source) => EngineError::Interp { stage, source },
            None => stage_err(stage, "arc search failed"),
        });
    };
    let rec = StageRecord {
        index: stage,
        eps_prev,
        eps: f64::NAN,
        r,
        r_prime: r,
        r_outer,
        rho: Some(rho),
        labyrinth: lab_params.clone(),
        k0,
        theta,
        phi_base: AutWord::identity(n),
        phi,
        prime_threshold: rho,
        component_seed: Some(seed),
        v_threshold: Some(v_thr),
        k_rule: KRule { threshold: k_thr, component_seed: Some(seed), dilation_hops: 0, b_hops: 0 },
        b,
        b_param: m.param(b),
        a: a.clone(),
        arc,
        margins: StageMargins { theta_bound, ..Default::default() },
        certified: false,
        failures: Vec::new(),
    };
    finalize(m, cfg, st, rec)
}

/// Runs the configured engine for `cfg.stages` stages.
pub fn run(cfg: &EngineConfig) -> Result<RunCertificate, EngineError> {
    run_observed(cfg, &mut |_| {})
}

/// A built stage as seen by [`run_observed`].
pub struct StageView<'a> {
    pub grid: &'a SampledSubmanifold,
    pub record: &'a StageRecord,
    pub before: &'a StageState,
    pub after: &'a StageState,
}

/// [`run`], handing every built stage to `observe` before moving on.
pub fn run_observed(cfg: &EngineConfig, observe: &mut dyn FnMut(StageView)) -> Result<RunCertificate, EngineError> {
    cfg.validate()?;
    let m = sample_preset(cfg.preset.clone(), cfg.n, cfg.rho_param, cfg.mesh)?;
    let targets = dedup_targets(&cfg.targets);
    let mut st = StageState::initial(&m, cfg.radii.k0_radius, cfg.eps0)?;
    let k0_samples = st.k.len();
    let mut stages = Vec::new();
    let mut failure = None;
    for (i, a) in targets.iter().take(cfg.stages).enumerate() {
        let stage = i + 1;
        let built = match cfg.engine {
            EngineKind::Main => run_stage_main(&m, cfg, &st, stage, a, &targets[stage..cfg.stages.min(targets.len())]),
            EngineKind::Ball => run_stage_ball(&m, cfg, &st, stage, a),
        };
        match built {
            Ok((rec, next)) => {
                observe(StageView { grid: &m, record: &rec, before: &st, after: &next });
                let ok = rec.certified;
                if !ok && failure.is_none() {
                    failure = Some(StageFailure { stage, reason: rec.failures.join("; ") });
                }
                stages.push(rec);
                st = next;
                if !ok && !cfg.keep_going {
                    break;
                }
            }
            Err(e) => {
                failure = Some(StageFailure { stage, reason: e.to_string() });
                break;
            }
        }
    }
    Ok(assemble(&m, cfg, targets, k0_samples, stages, &st, failure))
}

fn assemble(
    m: &SampledSubmanifold,
    cfg: &EngineConfig,
    targets: Vec<CPoint>,
    k0_samples: usize,
    stages: Vec<StageRecord>,
    st: &StageState,
    failure: Option<StageFailure>,
) -> RunCertificate {
    let n = m.n;
    let hits = stages
        .iter()
        .map(|s| Hit {
            stage: s.index,
            a: s.a.clone(),
            b: s.b,
            b_param: s.b_param,
            residual: point::dist(chunk(&st.cloud, n, s.b), &s.a.0),
        })
        .collect();
    let eps_prev: Vec<f64> = stages.iter().map(|s| s.eps_prev).collect();
    let omega = (cfg.engine == EngineKind::Ball).then(|| {
        let comp = if st.k.is_empty() { Vec::new() } else { m.component(st.k.mask(), st.k.samples[0]) };
        let margin = st.k.samples.iter().map(|&i| 1.0 - point::norm(chunk(&st.cloud, n, i))).fold(f64::INFINITY, f64::min);
        OmegaReport { samples: st.k.len(), connected: comp.len() == st.k.len(), margin }
    });
    let certified = failure.is_none() && stages.iter().all(|s| s.certified);
    RunCertificate {
        engine: cfg.engine,
        seed: cfg.seed,
        grid_samples: m.len(),
        eps0: cfg.eps0,
        targets,
        k0_samples,
        stages,
        hits,
        ledger: metric::completeness_ledger(&eps_prev),
        omega,
        failure,
        certified,
    }
}
