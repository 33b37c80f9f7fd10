mod common;

use std::fs;

use common::*;
use holodense::wire::{word_from_json, word_to_json};

const ONE_STAGE: &str = "preset = \"line\"\nstages = 1\ntargets = [[[0.5, 0.7], [1.2, -0.4]]]\n";

#[test]
fn minimal_run_stores_only_the_inclusion() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let o = run(&configs().join("minimal.toml"), &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stages.json")).unwrap()).unwrap();
    assert_eq!(v["stages"].as_array().unwrap().len(), 0);
    assert_eq!(v["certified"], true);
    assert!(out.join("clouds/stage_00.csv").exists());
    assert_eq!(code(&verify(&out)), 0);
}

#[test]
fn malformed_configs_exit_2_and_write_nothing() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("syntax.toml", "preset = [\n"),
        ("eps.toml", "epsilon0 = 1.5\ntargets = [[[0.5, 0.7], [1.2, -0.4]]]\n"),
        ("unknown.toml", "presett = \"line\"\n"),
        ("engine.toml", "engine = \"torus\"\n"),
        ("dim.toml", "targets = [[[0.5, 0.7]]]\n"),
        ("too_many.toml", "stages = 2\ntargets = [[[0.5, 0.7], [1.2, -0.4]]]\n"),
        ("ball_preset.toml", "engine = \"ball\"\ntargets = [[[0.1, 0.0], [0.0, 0.1]]]\n"),
        ("file.toml", "targets_file = \"missing.csv\"\n"),
    ];
    for (name, text) in cases {
        let cfg = write_config(dir.path(), name, text);
        let out = dir.path().join(format!("out_{name}"));
        let o = run(&cfg, &out, &[]);
        assert_eq!(code(&o), 2, "{name}: {}", String::from_utf8_lossy(&o.stdout));
        assert!(!out.exists(), "{name} left output behind");
    }
    let o = run(&dir.path().join("absent.toml"), &dir.path().join("x"), &[]);
    assert_eq!(code(&o), 2);
}

#[test]
fn targets_file_rows_are_read() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("t.csv"), "# re, im per coordinate\n0.5, 0.7, 1.2, -0.4\n").unwrap();
    let cfg = write_config(dir.path(), "c.toml", "targets_file = \"t.csv\"\nstages = 0\n");
    let out = dir.path().join("run");
    assert_eq!(code(&run(&cfg, &out, &[])), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stages.json")).unwrap()).unwrap();
    assert_eq!(v["config"]["targets"].as_array().unwrap().len(), 1);
}

#[test]
fn one_stage_run_verify_corrupt_and_plot() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "one.toml", ONE_STAGE);
    let out = dir.path().join("run");
    let o = run(&cfg, &out, &[]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));

    // file-count contract: 6 projections per stage cloud (0 and 1) plus the ledger
    let plots: Vec<_> = fs::read_dir(out.join("plots")).unwrap().collect();
    assert_eq!(plots.len(), 2 * 6 + 1);
    let before = fs::read(out.join("plots/stage_01_z1re-z2re.svg")).unwrap();
    assert_eq!(code(&holodense(&["plot", "--out", out.to_str().unwrap()])), 0);
    assert_eq!(fs::read(out.join("plots/stage_01_z1re-z2re.svg")).unwrap(), before);
    let stage0 = fs::read_to_string(out.join("plots/stage_00_z1re-z1im.svg")).unwrap();
    assert!(!stage0.contains("<path"), "stage 0 has no labyrinth");

    assert_eq!(code(&verify(&out)), 0);

    // re-serialized words verify
    for e in fs::read_dir(out.join("words")).unwrap() {
        let p = e.unwrap().path();
        let w = word_from_json(&fs::read_to_string(&p).unwrap()).unwrap();
        let compact: serde_json::Value = serde_json::from_str(&word_to_json(&w)).unwrap();
        fs::write(&p, serde_json::to_string(&compact).unwrap()).unwrap();
    }
    assert_eq!(code(&verify(&out)), 0);

    // planted corruption
    let pristine = fs::read(out.join("stages.json")).unwrap();
    corrupt_margin(&out, 1, "cert_bound");
    let o = verify(&out);
    assert_eq!(code(&o), 3);
    assert!(String::from_utf8_lossy(&o.stdout).contains("cert_bound"));
    fs::write(out.join("stages.json"), &pristine).unwrap();

    // a word changed by one primitive fails re-derivation
    let theta = out.join("words/stage_01_phi_base.json");
    let text = fs::read_to_string(&theta).unwrap();
    let mut w = word_from_json(&text).unwrap();
    w.push(holodense_core::AffineMap::translation(vec![holodense_core::C64::new(1e-3, 0.0); 2]));
    fs::write(&theta, word_to_json(&w)).unwrap();
    let o = verify(&out);
    assert_eq!(code(&o), 3, "{}", String::from_utf8_lossy(&o.stdout));
    fs::write(&theta, text).unwrap();

    // missing or unreadable artifacts
    fs::write(out.join("stages.json"), "{").unwrap();
    assert_eq!(code(&verify(&out)), 2);
    fs::write(out.join("stages.json"), &pristine).unwrap();
    fs::remove_file(out.join("clouds/stage_01.csv")).unwrap();
    assert_eq!(code(&holodense(&["plot", "--out", out.to_str().unwrap()])), 2);
    assert_eq!(code(&verify(&dir.path().join("nowhere"))), 2);
}

#[test]
fn seed_and_stage_flags_override_the_config() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "one.toml", ONE_STAGE);
    let out = dir.path().join("run");
    assert_eq!(code(&run(&cfg, &out, &["--stages", "0", "--seed", "7"])), 0);
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("stages.json")).unwrap()).unwrap();
    assert_eq!(v["seed"], 7);
    assert_eq!(v["config"]["stages"], 0);
}

#[test]
fn labyrinth_command_dumps_balls() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("lab");
    let o = holodense(&["labyrinth", "--out", out.to_str().unwrap(), "--outer", "20", "--target", "2", "--budget", "500"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let v: serde_json::Value = serde_json::from_str(&fs::read_to_string(out.join("labyrinth.json")).unwrap()).unwrap();
    let rows = fs::read_to_string(out.join("labyrinth.csv")).unwrap().lines().count();
    assert_eq!(rows, 1 + v["balls"].as_u64().unwrap() as usize);
    // the narrow shell cannot reach a ledger of 5
    let o = holodense(&["labyrinth", "--out", dir.path().join("no").to_str().unwrap(), "--target", "5"]);
    assert_eq!(code(&o), 3);
}
