//! Independent re-check of a stored run: reload the words, rebuild the grid
//! and `K_0` from the stored configuration, and re-derive every stage with
//! [`evaluate_stage`]. Stored numbers are only compared against, never
//! reused, except for the stage inputs the construction chose (words,
//! radii, rules, `eps_i`).

use std::fs;
use std::path::Path;

use holodense_core::engine::{choose_eps, evaluate_stage, EngineKind, StageState, HIT_TOL};
use holodense_core::geometry::sample_preset;
use holodense_core::{metric, point};

use crate::artifacts::CERTIFICATE;
use crate::wire::{word_from_json, CertificateWire, WireError};

/// Stored and re-derived numbers must agree to this, relative to `max(1, |x|)`.
pub const MATCH_TOL: f64 = 1e-9;

#[derive(Debug, thiserror::Error)]
pub enum ArtifactError {
    #[error("cannot read {path}: {source}")]
    Read { path: String, source: std::io::Error },
    #[error("{path}: {source}")]
    Parse { path: String, source: WireError },
    #[error("stored configuration: {0}")]
    Config(String),
    #[error("re-evaluation failed: {0}")]
    Engine(String),
}

#[derive(Clone, Debug, PartialEq)]
pub struct Mismatch {
    pub what: String,
    pub stored: f64,
    pub derived: f64,
}

#[derive(Clone, Debug, Default)]
pub struct StageCheck {
    pub index: usize,
    pub mismatches: Vec<Mismatch>,
    /// Conditions failing on the re-derived margins.
    pub failures: Vec<String>,
}

#[derive(Clone, Debug, Default)]
pub struct VerifyReport {
    pub stages: Vec<StageCheck>,
    pub run: Vec<Mismatch>,
    /// Run-level problems (recorded failure, flags, counts).
    pub problems: Vec<String>,
}

impl VerifyReport {
    pub fn passed(&self) -> bool {
        self.problems.is_empty()
            && self.run.is_empty()
            && self.stages.iter().all(|s| s.mismatches.is_empty() && s.failures.is_empty())
    }
}

pub fn agrees(stored: f64, derived: f64) -> bool {
    if stored.is_nan() || derived.is_nan() {
        return stored.is_nan() && derived.is_nan();
    }
    if stored.is_infinite() || derived.is_infinite() {
        return stored == derived;
    }
    (stored - derived).abs() <= MATCH_TOL * 1f64.max(stored.abs()).max(derived.abs())
}

fn compare(out: &mut Vec<Mismatch>, what: impl Into<String>, stored: f64, derived: f64) {
    if !agrees(stored, derived) {
        out.push(Mismatch { what: what.into(), stored, derived });
    }
}

fn read(dir: &Path, name: &str) -> Result<String, ArtifactError> {
    let p = dir.join(name);
    fs::read_to_string(&p).map_err(|source| ArtifactError::Read { path: p.display().to_string(), source })
}

pub fn load(dir: &Path) -> Result<CertificateWire, ArtifactError> {
    let text = read(dir, CERTIFICATE)?;
    CertificateWire::from_json(&text).map_err(|source| ArtifactError::Parse { path: CERTIFICATE.into(), source })
}

pub fn verify_dir(dir: &Path) -> Result<VerifyReport, ArtifactError> {
    let wire = load(dir)?;
    let records = wire.records(|s| {
        let get = |name: &str| -> Result<_, WireError> {
            let text = fs::read_to_string(dir.join(name)).map_err(|e| WireError::Invalid(format!("{name}: {e}")))?;
            word_from_json(&text).map_err(|e| WireError::Invalid(format!("{name}: {e}")))
        };
        Ok((get(&s.words.theta)?, get(&s.words.phi_base)?, get(&s.words.phi)?))
    });
    let records = records.map_err(|source| ArtifactError::Parse { path: "words".into(), source })?;
    let kind = wire.kind().map_err(|e| ArtifactError::Config(e.to_string()))?;
    let cfg = wire.config.engine_config().map_err(|e| ArtifactError::Config(e.to_string()))?;
    let m = sample_preset(cfg.preset.clone(), cfg.n, cfg.rho_param, cfg.mesh).map_err(|e| ArtifactError::Config(e.to_string()))?;
    let mut st = StageState::initial(&m, cfg.radii.k0_radius, cfg.eps0).map_err(|e| ArtifactError::Config(e.to_string()))?;

    let mut report = VerifyReport::default();
    if cfg.engine != kind || cfg.seed != wire.seed {
        report.problems.push("engine or seed differs from the stored configuration".into());
    }
    if m.len() != wire.grid_samples || st.k.len() != wire.k0_samples {
        report.problems.push(format!(
            "grid/K_0 sizes {}/{} differ from stored {}/{}",
            m.len(),
            st.k.len(),
            wire.grid_samples,
            wire.k0_samples
        ));
    }
    compare(&mut report.run, "eps0", wire.eps0.0, cfg.eps0);

    for (k, rec) in records.iter().enumerate() {
        let mut check = StageCheck { index: rec.index, ..Default::default() };
        if rec.index != k + 1 {
            report.problems.push(format!("stage {} stored at position {}", rec.index, k + 1));
        }
        compare(&mut check.mismatches, "eps_prev (carried)", rec.eps_prev, st.eps);
        let (mg, next) = evaluate_stage(&m, kind, &cfg.budgets, &st, rec).map_err(|e| ArtifactError::Engine(e.to_string()))?;
        for ((name, stored), (_, derived)) in rec.margins.entries().into_iter().zip(mg.entries()) {
            compare(&mut check.mismatches, name, stored, derived);
        }
        let eps = choose_eps(rec.eps_prev, cfg.budgets.eps_ratio, mg.injectivity, mg.chord, mg.immersion, mg.cauchy);
        compare(&mut check.mismatches, "eps rule", rec.eps, eps);
        check.failures = mg.failures(kind).into_iter().map(String::from).collect();
        if rec.certified != check.failures.is_empty() {
            report.problems.push(format!("stage {}: stored certified flag disagrees with the re-derived verdict", rec.index));
        }
        report.stages.push(check);
        st = next;
    }

    // hits: under the composed final word, and under the stage-by-stage images
    let cert = wire.certificate(records).map_err(|source| ArtifactError::Parse { path: CERTIFICATE.into(), source })?;
    let f = cert.map();
    let n = cfg.n;
    if cert.hits.len() != cert.stages.len() {
        report.problems.push("hit list does not match the stages".into());
    }
    for h in &cert.hits {
        let by_cloud = point::dist(&st.cloud[h.b * n..(h.b + 1) * n], &h.a.0);
        let by_word = f.eval(&m.f0(m.param(h.b))).dist(&h.a);
        compare(&mut report.run, format!("hit {} residual", h.stage), h.residual, by_cloud);
        if !(by_word <= HIT_TOL) || !(by_cloud <= HIT_TOL) {
            report.problems.push(format!("hit {} misses: residual {by_cloud:e} (word {by_word:e})", h.stage));
        }
    }
    let eps_prev: Vec<f64> = cert.stages.iter().map(|s| s.eps_prev).collect();
    compare(&mut report.run, "ledger", cert.ledger, metric::completeness_ledger(&eps_prev));
    if kind == EngineKind::Ball {
        match &cert.omega {
            Some(o) => {
                let comp = if st.k.is_empty() { 0 } else { m.component(st.k.mask(), st.k.samples[0]).len() };
                let margin = st.k.samples.iter().map(|&i| 1.0 - point::norm(&st.cloud[i * n..(i + 1) * n])).fold(f64::INFINITY, f64::min);
                compare(&mut report.run, "omega margin", o.margin, margin);
                if o.samples != st.k.len() || o.connected != (comp == st.k.len()) {
                    report.problems.push("omega sample count or connectivity differs".into());
                }
                if !(margin > 0.0) || comp != st.k.len() {
                    report.problems.push(format!("omega: margin {margin:e}, connected {}", comp == st.k.len()));
                }
            }
            None => report.problems.push("ball run without an omega report".into()),
        }
    }
    if let Some(fl) = &cert.failure {
        report.problems.push(format!("the run stopped at stage {}: {}", fl.stage, fl.reason));
    }
    let all_ok = cert.failure.is_none() && cert.stages.iter().all(|s| s.certified);
    if cert.certified != all_ok {
        report.problems.push("stored run verdict disagrees with its stages".into());
    }
    if cert.stages.len() < cfg.stages && cert.failure.is_none() {
        report.problems.push(format!("{} of {} stages stored", cert.stages.len(), cfg.stages));
    }
    Ok(report)
}
