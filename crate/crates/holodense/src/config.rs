//! Run configuration. The same [`Settings`] struct is read from TOML and
//! stored, fully resolved, in `stages.json`, so a verifier rebuilds the
//! exact engine configuration of a run.

use std::path::{Path, PathBuf};

use holodense_core::engine::{Budgets, EngineConfig, EngineKind, Radii};
use holodense_core::geometry::Preset;
use holodense_core::{CPoint, C64};
use serde::{Deserialize, Serialize};

use crate::hexfloat::Hf;

#[derive(Debug, thiserror::Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Read { path: PathBuf, source: std::io::Error },
    #[error("malformed config: {0}")]
    Toml(toml::de::Error),
    #[error("targets file {path}, line {line}: {what}")]
    Targets { path: PathBuf, line: usize, what: String },
    #[error("{0}")]
    Invalid(String),
}

/// A complex number as `[re, im]`.
pub type Pair = [Hf; 2];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Settings {
    #[serde(default = "default_preset")]
    pub preset: String,
    #[serde(default = "default_n")]
    pub n: usize,
    #[serde(default)]
    pub engine: String,
    pub rho_param: Option<Hf>,
    pub mesh: Option<Hf>,
    #[serde(default = "default_eps0")]
    pub epsilon0: Hf,
    #[serde(default)]
    pub seed: u64,
    pub stages: Option<usize>,
    #[serde(default)]
    pub keep_going: bool,
    /// One entry per target, `n` pairs each.
    #[serde(default)]
    pub targets: Vec<Vec<Pair>>,
    /// CSV with `2n` numbers per row, appended to `targets`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub targets_file: Option<PathBuf>,
    #[serde(default)]
    pub radii: RadiiSettings,
    #[serde(default)]
    pub budgets: BudgetSettings,
    #[serde(default)]
    pub tolerances: ToleranceSettings,
}

impl From<toml::de::Error> for ConfigError {
    fn from(e: toml::de::Error) -> Self {
        ConfigError::Toml(e)
    }
}

fn default_preset() -> String {
    "line".into()
}
fn default_n() -> usize {
    2
}
fn default_eps0() -> Hf {
    Hf(0.5)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RadiiSettings {
    pub k0_radius: Option<Hf>,
    pub enclose: Hf,
    pub gap: Hf,
    pub outer: Hf,
    pub k_factor: Hf,
    pub ball_outer: Hf,
    pub ball_rho: Hf,
    pub ball_v: Hf,
    pub ball_region: Hf,
    pub ball_k: Hf,
}

impl Default for RadiiSettings {
    fn default() -> Self {
        let r = Radii::default();
        RadiiSettings {
            k0_radius: None,
            enclose: r.enclose.into(),
            gap: r.gap.into(),
            outer: r.outer.into(),
            k_factor: r.k_factor.into(),
            ball_outer: r.ball_outer.into(),
            ball_rho: r.ball_rho.into(),
            ball_v: r.ball_v.into(),
            ball_region: r.ball_region.into(),
            ball_k: r.ball_k.into(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BudgetSettings {
    pub facet_gap: Hf,
    pub rotations: usize,
    pub max_balls: usize,
    pub eps_ratio: Hf,
    pub base_ratio: Hf,
    pub base_degree: usize,
    pub base_slope: Hf,
    pub b_candidates: usize,
    pub tau_retries: usize,
    pub eta: Hf,
    pub chord_samples: usize,
    pub empirical_max_samples: usize,
    pub quadrature: usize,
    pub theta_degree: usize,
    pub theta_max_degree: usize,
    pub theta_steps: usize,
    pub theta_retries: usize,
    pub theta_max_fit_points: usize,
    pub mover_max_degree: usize,
    pub theta_mover_max_degree: usize,
    pub comb_max_degree: usize,
    pub mover_rotations: usize,
    pub waypoints: usize,
}

impl Default for BudgetSettings {
    fn default() -> Self {
        let b = Budgets::default();
        BudgetSettings {
            facet_gap: b.facet_gap.into(),
            rotations: b.rotations,
            max_balls: b.max_balls,
            eps_ratio: b.eps_ratio.into(),
            base_ratio: b.base_ratio.into(),
            base_degree: b.base_degree,
            base_slope: b.base_slope.into(),
            b_candidates: b.b_candidates,
            tau_retries: b.tau_retries,
            eta: b.eta.into(),
            chord_samples: b.chord_samples,
            empirical_max_samples: b.empirical_max_samples,
            quadrature: b.quadrature,
            theta_degree: b.theta.degree,
            theta_max_degree: b.theta.max_degree,
            theta_steps: b.theta.steps,
            theta_retries: b.theta.retries,
            theta_max_fit_points: b.theta.max_fit_points,
            mover_max_degree: b.mover.max_degree,
            theta_mover_max_degree: b.theta.mover.max_degree,
            comb_max_degree: b.comb.mover.max_degree,
            mover_rotations: b.mover.rotation_retries,
            waypoints: b.comb.waypoint_budget,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ToleranceSettings {
    pub delta_iii: Hf,
    /// Clearance from the labyrinth prefix; unset uses half its margin.
    pub delta_iv: Option<Hf>,
    pub ridge: Hf,
    pub stay_weight: Hf,
    pub comb_inflate: Hf,
    pub comb_release: Hf,
}

impl Default for ToleranceSettings {
    fn default() -> Self {
        let b = Budgets::default();
        ToleranceSettings {
            delta_iii: b.theta.delta_iii.into(),
            delta_iv: b.theta.delta_iv.map(Hf),
            ridge: b.theta.fit.ridge.into(),
            stay_weight: b.theta.fit.stay_weight.into(),
            comb_inflate: b.comb.inflate.into(),
            comb_release: b.comb.release.into(),
        }
    }
}

pub fn engine_kind(id: &str) -> Result<EngineKind, ConfigError> {
    match id {
        "" | "main" => Ok(EngineKind::Main),
        "ball" => Ok(EngineKind::Ball),
        other => Err(ConfigError::Invalid(format!("unknown engine `{other}` (expected main or ball)"))),
    }
}

impl Settings {
    /// Reads a TOML file; a relative `targets_file` is taken from the
    /// config's directory.
    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
        let mut s: Settings = toml::from_str(&text)?;
        if let Some(f) = s.targets_file.take() {
            let f = if f.is_relative() { path.parent().unwrap_or(Path::new(".")).join(f) } else { f };
            let extra = read_targets(&f, s.n)?;
            s.targets.extend(extra);
        }
        Ok(s)
    }

    /// Fills every engine-dependent default, so the stored copy needs no
    /// further resolution.
    pub fn resolve(mut self) -> Result<Self, ConfigError> {
        let kind = engine_kind(&self.engine)?;
        self.engine = kind.id().into();
        let (rho, mesh, k0) = match kind {
            EngineKind::Main => (32.0, 0.05, Radii::default().k0_radius),
            EngineKind::Ball => (1.2, 0.01, 0.3),
        };
        self.rho_param.get_or_insert(Hf(rho));
        self.mesh.get_or_insert(Hf(mesh));
        self.radii.k0_radius.get_or_insert(Hf(k0));
        Ok(self)
    }

    pub fn targets(&self) -> Result<Vec<CPoint>, ConfigError> {
        self.targets
            .iter()
            .enumerate()
            .map(|(k, t)| {
                if t.len() != self.n {
                    return Err(ConfigError::Invalid(format!("target {k} has {} coordinates, expected {}", t.len(), self.n)));
                }
                Ok(CPoint(t.iter().map(|[re, im]| C64::new(re.0, im.0)).collect()))
            })
            .collect()
    }

    /// The engine configuration; call on resolved settings.
    pub fn engine_config(&self) -> Result<EngineConfig, ConfigError> {
        let kind = engine_kind(&self.engine)?;
        let preset = Preset::parse(&self.preset).map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if kind == EngineKind::Ball && preset != Preset::UnitDisk {
            return Err(ConfigError::Invalid("the ball engine needs preset = \"unit-disk\"".into()));
        }
        let missing = |k: &str| ConfigError::Invalid(format!("`{k}` unresolved"));
        let rho = self.rho_param.ok_or_else(|| missing("rho_param"))?.0;
        let mesh = self.mesh.ok_or_else(|| missing("mesh"))?.0;
        let targets = self.targets()?;
        let mut cfg = EngineConfig::new(preset, self.n, rho, mesh, self.epsilon0.0, targets, kind);
        if let Some(s) = self.stages {
            cfg.stages = s;
        } else {
            cfg.stages = holodense_core::engine::dedup_targets(&cfg.targets).len();
        }
        cfg.seed = self.seed;
        cfg.keep_going = self.keep_going;

        let r = &self.radii;
        cfg.radii = Radii {
            k0_radius: r.k0_radius.ok_or_else(|| missing("radii.k0_radius"))?.0,
            enclose: r.enclose.0,
            gap: r.gap.0,
            outer: r.outer.0,
            k_factor: r.k_factor.0,
            ball_outer: r.ball_outer.0,
            ball_rho: r.ball_rho.0,
            ball_v: r.ball_v.0,
            ball_region: r.ball_region.0,
            ball_k: r.ball_k.0,
        };

        let b = &self.budgets;
        let t = &self.tolerances;
        let bud = &mut cfg.budgets;
        bud.facet_gap = b.facet_gap.0;
        bud.rotations = b.rotations;
        bud.max_balls = b.max_balls;
        bud.eps_ratio = b.eps_ratio.0;
        bud.base_ratio = b.base_ratio.0;
        bud.base_degree = b.base_degree;
        bud.base_slope = b.base_slope.0;
        bud.b_candidates = b.b_candidates;
        bud.tau_retries = b.tau_retries;
        bud.eta = b.eta.0;
        bud.chord_samples = b.chord_samples;
        bud.empirical_max_samples = b.empirical_max_samples;
        bud.quadrature = b.quadrature;
        bud.theta.degree = b.theta_degree;
        bud.theta.max_degree = b.theta_max_degree;
        bud.theta.steps = b.theta_steps;
        bud.theta.retries = b.theta_retries;
        bud.theta.max_fit_points = b.theta_max_fit_points;
        bud.mover.max_degree = b.mover_max_degree;
        bud.theta.mover.max_degree = b.theta_mover_max_degree;
        bud.comb.mover.max_degree = b.comb_max_degree;
        for m in [&mut bud.mover, &mut bud.theta.mover, &mut bud.comb.mover] {
            m.rotation_retries = b.mover_rotations;
        }
        bud.comb.waypoint_budget = b.waypoints;
        bud.theta.delta_iii = t.delta_iii.0;
        bud.theta.delta_iv = t.delta_iv.map(|x| x.0);
        bud.theta.fit.ridge = t.ridge.0;
        bud.theta.fit.stay_weight = t.stay_weight.0;
        bud.comb.inflate = t.comb_inflate.0;
        bud.comb.release = t.comb_release.0;

        cfg.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        Ok(cfg)
    }
}

/// Rows of `2n` comma-separated numbers, `re, im` per coordinate. Blank
/// lines and `#` comments are skipped.
pub fn read_targets(path: &Path, n: usize) -> Result<Vec<Vec<Pair>>, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Read { path: path.into(), source })?;
    let mut out = Vec::new();
    for (k, line) in text.lines().enumerate() {
        let line = line.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let err = |what: String| ConfigError::Targets { path: path.into(), line: k + 1, what };
        let nums = line
            .split(',')
            .map(|t| t.trim().parse::<f64>().map_err(|e| err(format!("{e}: `{}`", t.trim()))))
            .collect::<Result<Vec<f64>, _>>()?;
        if nums.len() != 2 * n {
            return Err(err(format!("expected {} numbers, found {}", 2 * n, nums.len())));
        }
        out.push(nums.chunks(2).map(|c| [Hf(c[0]), Hf(c[1])]).collect());
    }
    Ok(out)
}
