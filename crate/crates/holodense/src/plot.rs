//! SVG plots of a run directory: every pair of real coordinates of the
//! stage clouds, with the stage labyrinth's balls projected to the same
//! plane, and a bar chart of the per-stage length ledger. Output depends
//! only on the files read, so identical runs give identical SVGs.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};

use crate::artifacts::{cloud_path, labyrinth_path, read_cloud, read_labyrinth, BallRow};
use crate::verify::load;

const SIZE: f64 = 480.0;
const PAD: f64 = 40.0;
/// Points drawn per projection; larger clouds are strided.
const MAX_POINTS: usize = 4000;

fn axis_name(k: usize) -> String {
    let part = if k % 2 == 0 { "Re" } else { "Im" };
    format!("{part} z{}", k / 2 + 1)
}

fn axis_tag(k: usize) -> String {
    let part = if k % 2 == 0 { "re" } else { "im" };
    format!("z{}{part}", k / 2 + 1)
}

/// Outline of a flat ball projected to coordinates `(i, j)`: the ellipse
/// `p + s M^{1/2} S^1` with `M` the projection of `I - u u^T`.
pub fn ball_outline(u: &[f64], p: &[f64], s: f64, i: usize, j: usize, steps: usize) -> Vec<(f64, f64)> {
    let (a, b, c) = (1.0 - u[i] * u[i], -u[i] * u[j], 1.0 - u[j] * u[j]);
    let mean = 0.5 * (a + c);
    let dev = (0.25 * (a - c) * (a - c) + b * b).sqrt();
    let (l1, l2) = ((mean + dev).max(0.0), (mean - dev).max(0.0));
    let phi = 0.5 * (2.0 * b).atan2(a - c);
    let (cs, sn) = (phi.cos(), phi.sin());
    (0..=steps)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / steps as f64;
            let (x, y) = (l1.sqrt() * t.cos(), l2.sqrt() * t.sin());
            (p[i] + s * (cs * x - sn * y), p[j] + s * (sn * x + cs * y))
        })
        .collect()
}

struct Frame {
    x0: f64,
    y0: f64,
    scale: f64,
}

impl Frame {
    fn fit(pts: impl Iterator<Item = (f64, f64)>) -> Frame {
        let (mut x0, mut x1, mut y0, mut y1) = (f64::INFINITY, f64::NEG_INFINITY, f64::INFINITY, f64::NEG_INFINITY);
        for (x, y) in pts.filter(|(x, y)| x.is_finite() && y.is_finite()) {
            x0 = x0.min(x);
            x1 = x1.max(x);
            y0 = y0.min(y);
            y1 = y1.max(y);
        }
        if !(x1 >= x0) {
            (x0, x1, y0, y1) = (-1.0, 1.0, -1.0, 1.0);
        }
        let span = (x1 - x0).max(y1 - y0).max(1e-9);
        Frame { x0: 0.5 * (x0 + x1) - 0.5 * span, y0: 0.5 * (y0 + y1) - 0.5 * span, scale: (SIZE - 2.0 * PAD) / span }
    }

    fn at(&self, x: f64, y: f64) -> (f64, f64) {
        (PAD + (x - self.x0) * self.scale, SIZE - PAD - (y - self.y0) * self.scale)
    }
}

fn header(svg: &mut String, title: &str) {
    let _ = writeln!(svg, r#"<svg xmlns="http://www.w3.org/2000/svg" width="{SIZE}" height="{SIZE}" viewBox="0 0 {SIZE} {SIZE}">"#);
    let _ = writeln!(svg, r#"<rect width="{SIZE}" height="{SIZE}" fill="white"/>"#);
    let _ = writeln!(svg, r#"<text x="{PAD}" y="24" font-family="sans-serif" font-size="13">{title}</text>"#);
}

/// One projection of a stage cloud; `balls` are drawn first, the prefix
/// of `k0` darker.
pub fn projection_svg(title: &str, pts: &[(f64, f64, bool)], balls: &[Vec<(f64, f64)>], k0: usize, xlab: &str, ylab: &str) -> String {
    let frame = Frame::fit(pts.iter().map(|p| (p.0, p.1)).chain(balls.iter().flatten().copied()));
    let mut svg = String::new();
    header(&mut svg, title);
    for (k, outline) in balls.iter().enumerate() {
        let stroke = if k < k0 { "#b03030" } else { "#e0b0b0" };
        let mut d = String::new();
        for (m, &(x, y)) in outline.iter().enumerate() {
            let (px, py) = frame.at(x, y);
            let _ = write!(d, "{}{px:.2},{py:.2}", if m == 0 { "M" } else { " L" });
        }
        let _ = writeln!(svg, r#"<path d="{d}" fill="none" stroke="{stroke}" stroke-width="0.6"/>"#);
    }
    let stride = pts.len().div_ceil(MAX_POINTS).max(1);
    for &(x, y, hi) in pts.iter().step_by(stride) {
        if !(x.is_finite() && y.is_finite()) {
            continue;
        }
        let (px, py) = frame.at(x, y);
        let fill = if hi { "#1f4e9c" } else { "#7a9cc6" };
        let _ = writeln!(svg, r#"<circle cx="{px:.2}" cy="{py:.2}" r="1.1" fill="{fill}"/>"#);
    }
    let _ = writeln!(
        svg,
        r#"<text x="{:.0}" y="{:.0}" font-family="sans-serif" font-size="11">{xlab}</text>"#,
        SIZE / 2.0,
        SIZE - 10.0
    );
    let _ = writeln!(svg, r#"<text x="8" y="{:.0}" font-family="sans-serif" font-size="11">{ylab}</text>"#, SIZE / 2.0);
    svg.push_str("</svg>\n");
    svg
}

/// Bars of `1 / (2 eps_{i-1})` per stage with the certified bound marked.
pub fn ledger_svg(rows: &[(usize, f64, f64)]) -> String {
    let mut svg = String::new();
    header(&mut svg, "length ledger: 1/(2 eps_{i-1}) per stage, certified bound as a tick");
    let top = rows.iter().flat_map(|r| [r.1, r.2]).filter(|x| x.is_finite()).fold(1.0, f64::max);
    let w = (SIZE - 2.0 * PAD) / rows.len().max(1) as f64;
    let h = SIZE - 2.0 * PAD;
    for (k, &(stage, need, bound)) in rows.iter().enumerate() {
        let x = PAD + k as f64 * w;
        let bh = h * (need / top).clamp(0.0, 1.0);
        let _ = writeln!(
            svg,
            r##"<rect x="{:.2}" y="{:.2}" width="{:.2}" height="{bh:.2}" fill="#7a9cc6"/>"##,
            x + 0.15 * w,
            SIZE - PAD - bh,
            0.7 * w
        );
        if bound.is_finite() {
            let y = SIZE - PAD - h * (bound / top).clamp(0.0, 1.0);
            let _ = writeln!(
                svg,
                r##"<line x1="{:.2}" y1="{y:.2}" x2="{:.2}" y2="{y:.2}" stroke="#b03030" stroke-width="2"/>"##,
                x + 0.1 * w,
                x + 0.9 * w
            );
        }
        let _ = writeln!(
            svg,
            r#"<text x="{:.2}" y="{:.0}" font-family="sans-serif" font-size="11">{stage}</text>"#,
            x + 0.45 * w,
            SIZE - PAD + 14.0
        );
    }
    svg.push_str("</svg>\n");
    svg
}

/// Writes `plots/stage_XX_<a>-<b>.svg` for every stored cloud and every
/// coordinate pair, and `plots/ledger.svg`. Returns the files written.
pub fn plot_dir(dir: &Path) -> Result<Vec<PathBuf>> {
    let wire = load(dir)?;
    let n = wire.config.n;
    let d = 2 * n;
    let out = dir.join("plots");
    fs::create_dir_all(&out)?;
    let mut written = Vec::new();
    let stages: Vec<usize> = (0..=wire.stages.len()).collect();
    for &s in &stages {
        let cp = cloud_path(dir, s);
        if !cp.exists() {
            bail!("missing cloud {}", cp.display());
        }
        let cloud = read_cloud(&cp, s)?;
        let (balls, k0): (Vec<BallRow>, usize) = match wire.stages.get(s.wrapping_sub(1)) {
            Some(st) if s > 0 => {
                let lp = labyrinth_path(dir, s);
                (read_labyrinth(&lp).with_context(|| format!("labyrinth of stage {s}"))?, st.k0)
            }
            _ => (Vec::new(), 0),
        };
        for i in 0..d {
            for j in i + 1..d {
                let pts: Vec<(f64, f64, bool)> = cloud
                    .rows
                    .iter()
                    .map(|r| {
                        let re_im = |k: usize| if k % 2 == 0 { r.image[k / 2].re } else { r.image[k / 2].im };
                        (re_im(i), re_im(j), r.flags & crate::artifacts::flags::K_PREV != 0)
                    })
                    .collect();
                let outlines: Vec<Vec<(f64, f64)>> = balls.iter().map(|(u, _, p, s, _)| ball_outline(u, p, *s, i, j, 48)).collect();
                let title = format!("stage {s}: f_{s}(K_{s}), {} vs {}", axis_name(i), axis_name(j));
                let svg = projection_svg(&title, &pts, &outlines, k0, &axis_name(i), &axis_name(j));
                let path = out.join(format!("stage_{s:02}_{}-{}.svg", axis_tag(i), axis_tag(j)));
                fs::write(&path, svg)?;
                written.push(path);
            }
        }
    }
    let rows: Vec<(usize, f64, f64)> = wire
        .stages
        .iter()
        .map(|s| {
            let bound = s.margins.0.iter().find(|(k, _)| k == "cert_bound").map_or(f64::NAN, |(_, v)| v.0);
            (s.index, 0.5 / s.eps_prev.0, bound)
        })
        .collect();
    let path = out.join("ledger.svg");
    fs::write(&path, ledger_svg(&rows))?;
    written.push(path);
    Ok(written)
}
