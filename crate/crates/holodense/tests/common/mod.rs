#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

pub fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_holodense"))
}

pub fn holodense(args: &[&str]) -> Output {
    bin().args(args).output().expect("holodense runs")
}

pub fn code(o: &Output) -> i32 {
    o.status.code().unwrap_or(-1)
}

pub fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

pub fn run(config: &Path, out: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];
    args.extend_from_slice(extra);
    holodense(&args)
}

pub fn verify(out: &Path) -> Output {
    holodense(&["verify", "--out", out.to_str().unwrap()])
}

/// Flips one byte of a stored margin of `stage` (1-based): the leading
/// mantissa digit, so the change is far above the match tolerance.
pub fn corrupt_margin(out: &Path, stage: usize, name: &str) {
    let path = out.join("stages.json");
    let mut v: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    let slot = &mut v["stages"][stage - 1]["margins"][name];
    let s = slot.as_str().unwrap().to_string();
    let corrupted = match s.find('.') {
        Some(dot) => {
            let digit = s.as_bytes()[dot + 1];
            let flipped = if digit == b'8' { '4' } else { '8' };
            format!("{}{flipped}{}", &s[..dot + 1], &s[dot + 2..])
        }
        None => s.replacen("p", ".8p", 1),
    };
    *slot = serde_json::Value::String(corrupted);
    std::fs::write(&path, serde_json::to_string_pretty(&v).unwrap()).unwrap();
}

pub fn write_config(dir: &Path, name: &str, text: &str) -> PathBuf {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p
}
