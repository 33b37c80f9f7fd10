//! The run directory:
//!
//! ```text
//! stages.json                 certificate, doubles as hexadecimal floats
//! words/stage_XX_<name>.json  theta, phi_base and phi of each stage
//! clouds/stage_XX.csv         K_i samples and their images under f_i
//! labyrinths/stage_XX.csv     one hyperplane ball per row
//! plots/*.svg                 written by `plot`
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use holodense_core::engine::{RunCertificate, StageState, StageView};
use holodense_core::geometry::SampledSubmanifold;
use holodense_core::labyrinth::Labyrinth;
use holodense_core::C64;

use crate::config::Settings;
use crate::wire::{word_to_json, CertificateWire, StageWords};

pub const CERTIFICATE: &str = "stages.json";

/// Sample flags in cloud files.
pub mod flags {
    pub const K_PREV: u8 = 1;
    pub const K_PRIME: u8 = 2;
    pub const K_BOUNDARY: u8 = 4;
    pub const TARGET: u8 = 8;
}

/// One sample of a cloud file.
#[derive(Clone, Debug, PartialEq)]
pub struct CloudRow {
    pub param: C64,
    pub flags: u8,
    pub image: Vec<C64>,
}

#[derive(Clone, Debug, Default)]
pub struct Cloud {
    pub stage: usize,
    pub rows: Vec<CloudRow>,
}

pub fn cloud_path(out: &Path, stage: usize) -> PathBuf {
    out.join(format!("clouds/stage_{stage:02}.csv"))
}

pub fn labyrinth_path(out: &Path, stage: usize) -> PathBuf {
    out.join(format!("labyrinths/stage_{stage:02}.csv"))
}

/// `K_i` with its image; flags against the state before the stage.
pub fn cloud_of(m: &SampledSubmanifold, stage: usize, before: Option<&StageState>, after: &StageState, b: Option<usize>) -> Cloud {
    let n = m.n;
    let rows = after
        .k
        .samples
        .iter()
        .map(|&i| {
            let mut f = 0;
            if before.is_some_and(|s| s.k.contains(i)) {
                f |= flags::K_PREV;
            }
            if before.is_some() && after.k_prime.contains(i) {
                f |= flags::K_PRIME;
            }
            if after.k.boundary.binary_search(&i).is_ok() {
                f |= flags::K_BOUNDARY;
            }
            if b == Some(i) {
                f |= flags::TARGET;
            }
            CloudRow { param: m.param(i), flags: f, image: after.cloud[i * n..(i + 1) * n].to_vec() }
        })
        .collect();
    Cloud { stage, rows }
}

pub fn stage_cloud(v: &StageView) -> Cloud {
    cloud_of(v.grid, v.record.index, Some(v.before), v.after, Some(v.record.b))
}

fn cloud_header(n: usize) -> Vec<String> {
    let mut h = vec!["param_re".to_string(), "param_im".into(), "flags".into()];
    for k in 1..=n {
        h.push(format!("z{k}_re"));
        h.push(format!("z{k}_im"));
    }
    h
}

pub fn write_cloud(path: &Path, n: usize, cloud: &Cloud) -> Result<()> {
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    w.write_record(cloud_header(n))?;
    for r in &cloud.rows {
        let mut rec = vec![r.param.re.to_string(), r.param.im.to_string(), r.flags.to_string()];
        for z in &r.image {
            rec.push(z.re.to_string());
            rec.push(z.im.to_string());
        }
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_cloud(path: &Path, stage: usize) -> Result<Cloud> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let num = |k: usize| -> Result<f64> {
            rec.get(k).context("short row")?.parse::<f64>().with_context(|| format!("{}: bad number", path.display()))
        };
        let flags = rec.get(2).context("short row")?.parse::<u8>()?;
        let coords = (rec.len() - 3) / 2;
        let image = (0..coords).map(|k| Ok(C64::new(num(3 + 2 * k)?, num(4 + 2 * k)?))).collect::<Result<Vec<_>>>()?;
        rows.push(CloudRow { param: C64::new(num(0)?, num(1)?), flags, image });
    }
    Ok(Cloud { stage, rows })
}

pub fn write_labyrinth(path: &Path, lab: &Labyrinth) -> Result<()> {
    let d = 2 * lab.n;
    let mut w = csv::Writer::from_path(path).with_context(|| format!("writing {}", path.display()))?;
    let mut head: Vec<String> = (1..=d).map(|k| format!("u{k}")).collect();
    head.push("c".into());
    head.extend((1..=d).map(|k| format!("p{k}")));
    head.push("s".into());
    head.push("layer".into());
    w.write_record(&head)?;
    for (ball, layer) in lab.balls.iter().zip(&lab.layer_of) {
        let mut rec: Vec<String> = ball.u.iter().map(f64::to_string).collect();
        rec.push(ball.c.to_string());
        rec.extend(ball.p.iter().map(f64::to_string));
        rec.push(ball.s.to_string());
        rec.push(layer.to_string());
        w.write_record(&rec)?;
    }
    w.flush()?;
    Ok(())
}

/// A labyrinth file as `(u, c, p, s, layer)` rows.
pub type BallRow = (Vec<f64>, f64, Vec<f64>, f64, usize);

pub fn read_labyrinth(path: &Path) -> Result<Vec<BallRow>> {
    let mut r = csv::Reader::from_path(path).with_context(|| format!("reading {}", path.display()))?;
    let mut out = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let v: Vec<f64> = rec.iter().map(|x| x.parse::<f64>()).collect::<Result<_, _>>()?;
        let d = (v.len() - 3) / 2;
        out.push((v[..d].to_vec(), v[d], v[d + 1..2 * d + 1].to_vec(), v[2 * d + 1], v[2 * d + 2] as usize));
    }
    Ok(out)
}

/// Writes everything but the plots.
pub fn write_run(out: &Path, settings: &Settings, cert: &RunCertificate, clouds: &[Cloud]) -> Result<()> {
    for sub in ["words", "clouds", "labyrinths"] {
        fs::create_dir_all(out.join(sub)).with_context(|| format!("creating {}", out.join(sub).display()))?;
    }
    let n = cert.targets.first().map_or(settings.n, |a| a.dim());
    for s in &cert.stages {
        let names = StageWords::for_stage(s.index);
        for (name, word) in [(&names.theta, &s.theta), (&names.phi_base, &s.phi_base), (&names.phi, &s.phi)] {
            fs::write(out.join(name), word_to_json(word))?;
        }
        let lab = s.labyrinth.generate(n).context("regenerating a stage labyrinth")?;
        write_labyrinth(&labyrinth_path(out, s.index), &lab)?;
    }
    for c in clouds {
        write_cloud(&cloud_path(out, c.stage), n, c)?;
    }
    let wire = CertificateWire::new(settings, cert);
    fs::write(out.join(CERTIFICATE), wire.to_json())?;
    Ok(())
}
