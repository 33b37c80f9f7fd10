//! Driver for `holodense-core`: TOML configuration, the certificate and word
//! file formats, cloud and labyrinth CSV dumps, SVG plots, and an
//! independent verifier for stored runs.
//!
//! Exit codes of the commands: 0 success, 2 configuration or artifact
//! errors (nothing is written for a bad config), 3 a failed stage or a
//! failed verification.

pub mod artifacts;
pub mod config;
pub mod hexfloat;
pub mod plot;
pub mod verify;
pub mod wire;

use std::path::{Path, PathBuf};

use anyhow::Result;
use holodense_core::engine::{run_observed, StageState};
use holodense_core::geometry::sample_preset;
use holodense_core::labyrinth::{generate_with, GenerateOptions, LabyrinthError};
use serde::Serialize;

use crate::artifacts::{cloud_of, stage_cloud, write_labyrinth, write_run, Cloud};
use crate::config::Settings;
use crate::hexfloat::Hf;

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_FAILED: i32 = 3;

/// Command-line overrides of config keys.
#[derive(Clone, Debug, Default)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub stages: Option<usize>,
}

/// Loads, overrides and resolves a config; every configuration error
/// surfaces here, before anything is written.
pub fn prepare(config: &Path, ov: &Overrides) -> Result<(Settings, holodense_core::engine::EngineConfig)> {
    let mut s = Settings::load(config)?;
    if let Some(seed) = ov.seed {
        s.seed = seed;
    }
    if let Some(n) = ov.stages {
        s.stages = Some(n);
    }
    let s = s.resolve()?;
    let cfg = s.engine_config()?;
    let s = Settings { stages: Some(cfg.stages), ..s };
    Ok((s, cfg))
}

pub fn cmd_run(config: &Path, out: &Path, ov: &Overrides) -> i32 {
    let (settings, cfg) = match prepare(config, ov) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("error: {e:#}");
            return EXIT_CONFIG;
        }
    };
    let mut clouds: Vec<Cloud> = Vec::new();
    let cert = run_observed(&cfg, &mut |v| {
        if clouds.is_empty() {
            clouds.push(cloud_of(v.grid, 0, None, v.before, None));
        }
        clouds.push(stage_cloud(&v));
    });
    let cert = match cert {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    if clouds.is_empty() {
        // nothing was built; still dump K_0
        let start = sample_preset(cfg.preset.clone(), cfg.n, cfg.rho_param, cfg.mesh)
            .and_then(|m| StageState::initial(&m, cfg.radii.k0_radius, cfg.eps0).map(|st| (m, st)));
        match start {
            Ok((m, st)) => clouds.push(cloud_of(&m, 0, None, &st, None)),
            Err(e) => {
                eprintln!("error: {e}");
                return EXIT_CONFIG;
            }
        }
    }
    if let Err(e) = write_run(out, &settings, &cert, &clouds).and_then(|_| plot::plot_dir(out).map(|_| ())) {
        eprintln!("error: writing {}: {e:#}", out.display());
        return EXIT_CONFIG;
    }
    for s in &cert.stages {
        let verdict = if s.certified { "certified".to_string() } else { format!("FAILED: {}", s.failures.join("; ")) };
        println!(
            "stage {}: eps {:.4e} -> {:.4e}, certified distance {:.4} (needs > {:.4}), sup (i) {:.3e}: {verdict}",
            s.index,
            s.eps_prev,
            s.eps,
            s.margins.cert_bound,
            1.0 / s.eps_prev,
            s.margins.sup_i
        );
    }
    for h in &cert.hits {
        println!("hit {}: residual {:.3e}", h.stage, h.residual);
    }
    println!("ledger {:.4}", cert.ledger);
    if let Some(f) = &cert.failure {
        println!("run failed at stage {}: {}", f.stage, f.reason);
    }
    if cert.certified {
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

pub fn cmd_verify(out: &Path) -> i32 {
    let report = match verify::verify_dir(out) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    for s in &report.stages {
        let state = if s.mismatches.is_empty() && s.failures.is_empty() { "ok" } else { "FAILED" };
        println!("stage {}: {state}", s.index);
        for m in &s.mismatches {
            println!("  {} stored {:e} re-derived {:e}", m.what, m.stored, m.derived);
        }
        for f in &s.failures {
            println!("  fails {f}");
        }
    }
    for m in &report.run {
        println!("run: {} stored {:e} re-derived {:e}", m.what, m.stored, m.derived);
    }
    for p in &report.problems {
        println!("run: {p}");
    }
    if report.passed() {
        println!("verified");
        EXIT_OK
    } else {
        EXIT_FAILED
    }
}

pub fn cmd_plot(out: &Path) -> i32 {
    match plot::plot_dir(out) {
        Ok(files) => {
            println!("{} plots in {}", files.len(), out.join("plots").display());
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: {e:#}");
            EXIT_CONFIG
        }
    }
}

/// Shell and path-search parameters of the `labyrinth` command.
#[derive(Clone, Debug)]
pub struct LabyrinthArgs {
    pub n: usize,
    pub inner: f64,
    pub outer: f64,
    pub target: f64,
    pub seed: u64,
    pub budget: usize,
    pub gap_fraction: f64,
}

#[derive(Serialize)]
struct LabyrinthSummary {
    n: usize,
    inner: Hf,
    outer: Hf,
    target: Hf,
    seed: u64,
    balls: usize,
    layers: usize,
    ledger: Hf,
    empirical_shortest_path: Option<Hf>,
}

/// Generates a labyrinth, dumps it, and reports the certified ledger next
/// to the best path a roadmap finds.
pub fn cmd_labyrinth(out: &Path, a: &LabyrinthArgs) -> i32 {
    let opts = GenerateOptions { gap_fraction: a.gap_fraction, ..GenerateOptions::default() };
    let lab = match generate_with(a.n, a.inner, a.outer, a.target, a.seed, &opts) {
        Ok(l) => l,
        Err(LabyrinthError::Infeasible { achievable, .. }) => {
            println!("target {} is out of reach in this shell; best ledger {achievable:.4}", a.target);
            return EXIT_FAILED;
        }
        Err(e) => {
            eprintln!("error: {e}");
            return EXIT_CONFIG;
        }
    };
    let path = lab.empirical_shortest_path(lab.len(), a.budget, a.seed).ok();
    let summary = LabyrinthSummary {
        n: a.n,
        inner: Hf(a.inner),
        outer: Hf(a.outer),
        target: Hf(a.target),
        seed: a.seed,
        balls: lab.len(),
        layers: lab.layers.len(),
        ledger: Hf(lab.ledger_sum()),
        empirical_shortest_path: path.map(Hf),
    };
    let write = || -> Result<PathBuf> {
        std::fs::create_dir_all(out)?;
        write_labyrinth(&out.join("labyrinth.csv"), &lab)?;
        let p = out.join("labyrinth.json");
        std::fs::write(&p, serde_json::to_string_pretty(&summary)? + "\n")?;
        Ok(p)
    };
    if let Err(e) = write() {
        eprintln!("error: {e:#}");
        return EXIT_CONFIG;
    }
    println!("{} balls in {} layers, ledger {:.4}", lab.len(), lab.layers.len(), lab.ledger_sum());
    match path {
        Some(p) => {
            println!("shortest roadmap path {p:.4}");
            if p >= lab.ledger_sum() {
                EXIT_OK
            } else {
                println!("the roadmap beat the ledger");
                EXIT_FAILED
            }
        }
        None => {
            println!("the roadmap found no crossing");
            EXIT_OK
        }
    }
}
