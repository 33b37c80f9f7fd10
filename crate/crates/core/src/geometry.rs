//! Preset curves `X` in `C^n`, their triangulated parameter grids, and
//! compact subsets materialized as sample sets.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use thiserror::Error;

use crate::autword::AutWord;
use crate::par;
use crate::point::{norm, CPoint};
use crate::poly::Poly;
#[allow(unused_imports)]
use crate::prelude::*;
use crate::C64;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum GeometryError {
    #[error("unknown preset `{0}`")]
    UnknownPreset(alloc::string::String),
    #[error("invalid grid: need rho > 0 and 0 < h < rho (rho = {rho}, h = {h})")]
    InvalidGrid { rho: f64, h: f64 },
    #[error("dimension must be at least 2, got {0}")]
    InvalidDimension(usize),
    #[error("sublevel threshold must be positive, got {0}")]
    InvalidThreshold(f64),
    #[error("compact is empty")]
    EmptyCompact,
    #[error("seed sample {0} is not in the sublevel set")]
    SeedOutside(usize),
}

/// Which closed curve `X` is sampled.
#[derive(Clone, Debug, PartialEq)]
pub enum Preset {
    /// `z -> (z, 0, ..., 0)`.
    Line,
    /// `z -> (z, p(z), 0, ..., 0)`.
    Graph(Poly),
    /// The line again, used as the domain `X ∩ B` of the ball engine.
    UnitDisk,
}

impl Preset {
    /// Parses `line`, `unit-disk`, or `graph:c0,c1,...` with real
    /// coefficients (complex ones as `re+imi` are not accepted here).
    pub fn parse(id: &str) -> Result<Self, GeometryError> {
        match id {
            "line" => Ok(Preset::Line),
            "unit-disk" => Ok(Preset::UnitDisk),
            _ => {
                let rest = id
                    .strip_prefix("graph:")
                    .ok_or_else(|| GeometryError::UnknownPreset(id.into()))?;
                let coeffs = rest
                    .split(',')
                    .map(|t| t.trim().parse::<f64>().map(|x| C64::new(x, 0.0)))
                    .collect::<Result<Vec<_>, _>>()
                    .map_err(|_| GeometryError::UnknownPreset(id.into()))?;
                Ok(Preset::Graph(Poly::new(coeffs)))
            }
        }
    }

    pub fn id(&self) -> alloc::string::String {
        use alloc::string::ToString;
        match self {
            Preset::Line => "line".to_string(),
            Preset::UnitDisk => "unit-disk".to_string(),
            Preset::Graph(p) => {
                let parts: Vec<alloc::string::String> =
                    p.coeffs.iter().map(|c| alloc::format!("{}", c.re)).collect();
                alloc::format!("graph:{}", parts.join(","))
            }
        }
    }

    /// The inclusion `f0` written into `out` (length `n`).
    pub fn embed_into(&self, z: C64, out: &mut [C64]) {
        for c in out.iter_mut() {
            *c = C64::new(0.0, 0.0);
        }
        out[0] = z;
        if let Preset::Graph(p) = self {
            out[1] = p.eval(z);
        }
    }

    /// `d f0 / dz`.
    pub fn tangent_into(&self, z: C64, out: &mut [C64]) {
        for c in out.iter_mut() {
            *c = C64::new(0.0, 0.0);
        }
        out[0] = C64::new(1.0, 0.0);
        if let Preset::Graph(p) = self {
            out[1] = p.eval_with_deriv(z).1;
        }
    }
}

/// A preset curve with a triangular-lattice sample grid on the parameter
/// disk `|z| <= rho`. Lattice edges have length `h`.
#[derive(Clone, Debug)]
pub struct SampledSubmanifold {
    pub preset: Preset,
    pub n: usize,
    pub rho: f64,
    pub h: f64,
    params: Vec<C64>,
    lattice: Vec<(i32, i32)>,
    rows: Vec<Row>,
    j_min: i32,
}

#[derive(Clone, Debug)]
struct Row {
    start: usize,
    i0: i32,
    len: usize,
}

const SQRT3_2: f64 = 0.866_025_403_784_438_6;

fn lattice_point(h: f64, i: i32, j: i32) -> C64 {
    C64::new(h * (i as f64 + 0.5 * j as f64), h * SQRT3_2 * j as f64)
}

/// Samples `preset` on the disk of radius `rho` with mesh `h`.
pub fn sample_preset(preset: Preset, n: usize, rho: f64, h: f64) -> Result<SampledSubmanifold, GeometryError> {
    if n < 2 {
        return Err(GeometryError::InvalidDimension(n));
    }
    if !(rho > 0.0 && h > 0.0 && h < rho && rho.is_finite()) {
        return Err(GeometryError::InvalidGrid { rho, h });
    }
    let jmax = (rho / (h * SQRT3_2)).floor() as i32;
    let mut params = Vec::new();
    let mut lattice = Vec::new();
    let mut rows = Vec::new();
    let r2 = rho * rho * (1.0 + 1e-12);
    for j in -jmax..=jmax {
        let y = h * SQRT3_2 * j as f64;
        let half = (rho * rho - y * y).max(0.0).sqrt();
        // x = h (i + j/2) in [-half, half]
        let lo = (-half / h - 0.5 * j as f64).ceil() as i32;
        let hi = (half / h - 0.5 * j as f64).floor() as i32;
        let start = params.len();
        let mut i0 = lo;
        let mut first = true;
        for i in lo..=hi {
            let p = lattice_point(h, i, j);
            if p.norm_sqr() <= r2 {
                if first {
                    i0 = i;
                    first = false;
                }
                params.push(p);
                lattice.push((i, j));
            }
        }
        rows.push(Row { start, i0, len: params.len() - start });
    }
    Ok(SampledSubmanifold { preset, n, rho, h, params, lattice, rows, j_min: -jmax })
}

impl SampledSubmanifold {
    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn params(&self) -> &[C64] {
        &self.params
    }

    pub fn param(&self, idx: usize) -> C64 {
        self.params[idx]
    }

    fn index_of(&self, i: i32, j: i32) -> Option<usize> {
        let r = self.rows.get(usize::try_from(j - self.j_min).ok()?)?;
        let off = i - r.i0;
        if off >= 0 && (off as usize) < r.len {
            Some(r.start + off as usize)
        } else {
            None
        }
    }

    /// Lattice neighbors (at most six) of sample `idx`.
    pub fn neighbors(&self, idx: usize) -> impl Iterator<Item = usize> + '_ {
        const OFFS: [(i32, i32); 6] = [(1, 0), (-1, 0), (0, 1), (0, -1), (1, -1), (-1, 1)];
        let (i, j) = self.lattice[idx];
        OFFS.iter().filter_map(move |&(di, dj)| self.index_of(i + di, j + dj))
    }

    /// Each undirected edge once, as `(a, b)` with `a < b`.
    pub fn edges(&self) -> Vec<(usize, usize)> {
        let mut out = Vec::with_capacity(3 * self.len());
        for a in 0..self.len() {
            for b in self.neighbors(a) {
                if a < b {
                    out.push((a, b));
                }
            }
        }
        out
    }

    /// True when a sample has fewer than six lattice neighbors.
    pub fn on_grid_edge(&self, idx: usize) -> bool {
        self.neighbors(idx).count() < 6
    }

    pub fn f0(&self, z: C64) -> CPoint {
        let mut out = CPoint::zeros(self.n);
        self.preset.embed_into(z, &mut out.0);
        out
    }

    pub fn f0_sample(&self, idx: usize) -> CPoint {
        self.f0(self.params[idx])
    }

    pub fn tangent(&self, z: C64) -> CPoint {
        let mut out = CPoint::zeros(self.n);
        self.preset.tangent_into(z, &mut out.0);
        out
    }

    /// Images `g(f0(x))` of every sample, flattened row-major (`n` per sample).
    pub fn images(&self, g: &AutWord) -> Vec<C64> {
        let n = self.n;
        let rows = par::map_indices(self.len(), |k| {
            let mut z = alloc::vec![C64::new(0.0, 0.0); n];
            self.preset.embed_into(self.params[k], &mut z);
            g.eval_in_place(&mut z);
            z
        });
        rows.into_iter().flatten().collect()
    }

    /// Images of a subset of samples, `n` coordinates each.
    pub fn images_of(&self, g: &AutWord, idx: &[usize]) -> Vec<C64> {
        let n = self.n;
        let rows = par::map_slice(idx, |&k| {
            let mut z = alloc::vec![C64::new(0.0, 0.0); n];
            self.preset.embed_into(self.params[k], &mut z);
            g.eval_in_place(&mut z);
            z
        });
        rows.into_iter().flatten().collect()
    }

    /// Sample index nearest to parameter `z`.
    pub fn nearest(&self, z: C64) -> usize {
        let mut best = 0;
        let mut bd = f64::INFINITY;
        for (k, p) in self.params.iter().enumerate() {
            let d = (p - z).norm_sqr();
            if d < bd {
                bd = d;
                best = k;
            }
        }
        best
    }

    /// Breadth-first check that the lattice graph is connected.
    pub fn is_connected(&self) -> bool {
        if self.is_empty() {
            return true;
        }
        let all = alloc::vec![true; self.len()];
        self.component(&all, 0).len() == self.len()
    }

    /// Connected component of `seed` inside the masked samples.
    pub fn component(&self, mask: &[bool], seed: usize) -> Vec<usize> {
        let mut seen = alloc::vec![false; self.len()];
        let mut out = Vec::new();
        let mut queue = VecDeque::new();
        if !mask[seed] {
            return out;
        }
        seen[seed] = true;
        queue.push_back(seed);
        while let Some(a) = queue.pop_front() {
            out.push(a);
            for b in self.neighbors(a) {
                if mask[b] && !seen[b] {
                    seen[b] = true;
                    queue.push_back(b);
                }
            }
        }
        out.sort_unstable();
        out
    }
}

/// How a compact's sample set was produced.
#[derive(Clone, Debug, PartialEq)]
pub enum CompactRule {
    /// `{x : |g(f0(x))| <= threshold}`, optionally restricted to the
    /// component containing `component_seed`.
    Sublevel { threshold: f64, component_seed: Option<usize> },
    Explicit,
}

/// A compact subset of `X`, materialized on the sample grid.
#[derive(Clone, Debug, PartialEq)]
pub struct ParameterCompact {
    pub rule: CompactRule,
    /// Sorted sample indices.
    pub samples: Vec<usize>,
    /// Members with at least one lattice neighbor outside the set.
    pub boundary: Vec<usize>,
    mask: Vec<bool>,
}

impl ParameterCompact {
    /// Builds a compact from an explicit sample list.
    pub fn from_samples(m: &SampledSubmanifold, samples: &[usize], rule: CompactRule) -> Result<Self, GeometryError> {
        let mut mask = alloc::vec![false; m.len()];
        for &s in samples {
            mask[s] = true;
        }
        Self::from_mask(m, mask, rule)
    }

    pub fn from_mask(m: &SampledSubmanifold, mask: Vec<bool>, rule: CompactRule) -> Result<Self, GeometryError> {
        let samples: Vec<usize> = (0..m.len()).filter(|&k| mask[k]).collect();
        if samples.is_empty() {
            return Err(GeometryError::EmptyCompact);
        }
        let boundary = samples
            .iter()
            .copied()
            .filter(|&k| m.neighbors(k).any(|b| !mask[b]))
            .collect();
        Ok(ParameterCompact { rule, samples, boundary, mask })
    }

    pub fn contains(&self, idx: usize) -> bool {
        self.mask.get(idx).copied().unwrap_or(false)
    }

    pub fn mask(&self) -> &[bool] {
        &self.mask
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Samples of `self` whose lattice neighbors are all in `self`; the
    /// sampled interior.
    pub fn interior(&self, m: &SampledSubmanifold) -> Vec<usize> {
        self.samples
            .iter()
            .copied()
            .filter(|&k| m.neighbors(k).count() == 6 && m.neighbors(k).all(|b| self.mask[b]))
            .collect()
    }

    pub fn is_subset_of(&self, other: &ParameterCompact) -> bool {
        self.samples.iter().all(|&k| other.contains(k))
    }

    /// True when some member sits on the edge of the finite grid, i.e. the
    /// truncation radius binds.
    pub fn touches_grid_edge(&self, m: &SampledSubmanifold) -> bool {
        self.samples.iter().any(|&k| m.on_grid_edge(k))
    }
}

/// `{x : |g(f0(x))| <= t}` on the grid.
pub fn sublevel_compact(
    m: &SampledSubmanifold,
    g: &AutWord,
    t: f64,
    component_seed: Option<usize>,
) -> Result<ParameterCompact, GeometryError> {
    if !(t > 0.0) {
        return Err(GeometryError::InvalidThreshold(t));
    }
    let n = m.n;
    let norms: Vec<f64> = m.images(g).chunks(n).map(norm).collect();
    sublevel_from_norms(m, &norms, t, component_seed)
}

/// Sublevel set from precomputed image norms (one per sample).
pub fn sublevel_from_norms(
    m: &SampledSubmanifold,
    norms: &[f64],
    t: f64,
    component_seed: Option<usize>,
) -> Result<ParameterCompact, GeometryError> {
    if !(t > 0.0) {
        return Err(GeometryError::InvalidThreshold(t));
    }
    let mask: Vec<bool> = norms.iter().map(|&r| r <= t).collect();
    let rule = CompactRule::Sublevel { threshold: t, component_seed };
    match component_seed {
        None => ParameterCompact::from_mask(m, mask, rule),
        Some(seed) => {
            if !mask[seed] {
                return Err(GeometryError::SeedOutside(seed));
            }
            let comp = m.component(&mask, seed);
            ParameterCompact::from_samples(m, &comp, rule)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_grid_size_and_inclusion() {
        let m = sample_preset(Preset::Line, 2, 2.0, 0.1).unwrap();
        // area of the disk over the area per lattice point
        let expected = core::f64::consts::PI * 4.0 / (0.01 * SQRT3_2);
        let ratio = m.len() as f64 / expected;
        assert!((0.9..1.1).contains(&ratio), "{} vs {}", m.len(), expected);
        assert_eq!(m.f0(C64::new(1.0, 0.0)), CPoint::from_pairs(&[(1.0, 0.0), (0.0, 0.0)]));
        assert!(m.is_connected());
        assert!(m.params().iter().all(|p| p.norm() <= 2.0 + 1e-12));
    }

    #[test]
    fn graph_preset_evaluates_polynomial() {
        let p = Preset::parse("graph:0,0,1").unwrap();
        let m = sample_preset(p, 2, 1.0, 0.05).unwrap();
        assert_eq!(m.f0(C64::new(2.0, 0.0)), CPoint::from_pairs(&[(2.0, 0.0), (4.0, 0.0)]));
    }

    #[test]
    fn errors() {
        assert!(matches!(Preset::parse("torus"), Err(GeometryError::UnknownPreset(_))));
        assert!(sample_preset(Preset::Line, 2, 1.0, 1.5).is_err());
        assert!(sample_preset(Preset::Line, 1, 1.0, 0.1).is_err());
        let m = sample_preset(Preset::Line, 2, 1.0, 0.1).unwrap();
        let id = AutWord::identity(2);
        assert_eq!(sublevel_compact(&m, &id, 0.0, None), Err(GeometryError::InvalidThreshold(0.0)));
        assert_eq!(sublevel_compact(&m, &id, 1e-6, None).map(|_| ()), Ok(()));
    }

    #[test]
    fn identity_sublevels() {
        let m = sample_preset(Preset::Line, 2, 2.0, 0.1).unwrap();
        let id = AutWord::identity(2);
        let k = sublevel_compact(&m, &id, 1.0, None).unwrap();
        for s in 0..m.len() {
            assert_eq!(k.contains(s), m.param(s).norm() <= 1.0);
        }
        let all = sublevel_compact(&m, &id, 5.0, None).unwrap();
        assert_eq!(all.len(), m.len());
        assert!(all.boundary.is_empty());
        assert!(all.touches_grid_edge(&m));
        for &b in &k.boundary {
            assert!(k.contains(b));
            assert!(m.neighbors(b).any(|x| !k.contains(x)));
        }
    }
}
