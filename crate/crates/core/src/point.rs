//! Points of `C^n`, identified with `R^{2n}` as `(Re z1, Im z1, Re z2, ...)`.

use alloc::vec::Vec;
use core::ops::{Add, Index, IndexMut, Sub};

#[allow(unused_imports)]
use crate::prelude::*;
use crate::C64;

/// A point of `C^n`.
#[derive(Clone, Debug, PartialEq)]
pub struct CPoint(pub Vec<C64>);

impl CPoint {
    pub fn new(coords: Vec<C64>) -> Self {
        CPoint(coords)
    }

    pub fn zeros(n: usize) -> Self {
        CPoint(alloc::vec![C64::new(0.0, 0.0); n])
    }

    /// Standard basis vector `e_k`.
    pub fn basis(n: usize, k: usize) -> Self {
        let mut p = Self::zeros(n);
        p.0[k] = C64::new(1.0, 0.0);
        p
    }

    /// Builds a point from `(re, im)` pairs.
    pub fn from_pairs(pairs: &[(f64, f64)]) -> Self {
        CPoint(pairs.iter().map(|&(re, im)| C64::new(re, im)).collect())
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn coords(&self) -> &[C64] {
        &self.0
    }

    pub fn norm_sqr(&self) -> f64 {
        norm_sqr(&self.0)
    }

    pub fn norm(&self) -> f64 {
        self.norm_sqr().sqrt()
    }

    pub fn dist(&self, other: &CPoint) -> f64 {
        dist(&self.0, &other.0)
    }

    pub fn scale(&self, s: C64) -> CPoint {
        CPoint(self.0.iter().map(|z| z * s).collect())
    }

    pub fn is_finite(&self) -> bool {
        self.0.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }

    /// Real coordinates in `R^{2n}`.
    pub fn to_real(&self) -> Vec<f64> {
        to_real(&self.0)
    }

    pub fn from_real(x: &[f64]) -> CPoint {
        CPoint(from_real(x))
    }
}

impl Index<usize> for CPoint {
    type Output = C64;
    fn index(&self, i: usize) -> &C64 {
        &self.0[i]
    }
}

impl IndexMut<usize> for CPoint {
    fn index_mut(&mut self, i: usize) -> &mut C64 {
        &mut self.0[i]
    }
}

impl Add for &CPoint {
    type Output = CPoint;
    fn add(self, rhs: &CPoint) -> CPoint {
        CPoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a + b).collect())
    }
}

impl Sub for &CPoint {
    type Output = CPoint;
    fn sub(self, rhs: &CPoint) -> CPoint {
        CPoint(self.0.iter().zip(&rhs.0).map(|(a, b)| a - b).collect())
    }
}

pub fn norm_sqr(z: &[C64]) -> f64 {
    z.iter().map(|c| c.norm_sqr()).sum()
}

pub fn norm(z: &[C64]) -> f64 {
    norm_sqr(z).sqrt()
}

pub fn dist(a: &[C64], b: &[C64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).norm_sqr())
        .sum::<f64>()
        .sqrt()
}

/// Bilinear pairing `sum a_j b_j` (no conjugation): how a complex linear
/// functional with coefficients `a` acts on `b`.
pub fn bilinear(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Hermitian inner product `sum conj(a_j) b_j`.
pub fn hermitian(a: &[C64], b: &[C64]) -> C64 {
    a.iter().zip(b).map(|(x, y)| x.conj() * y).sum()
}

pub fn to_real(z: &[C64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(2 * z.len());
    for c in z {
        out.push(c.re);
        out.push(c.im);
    }
    out
}

pub fn from_real(x: &[f64]) -> Vec<C64> {
    x.chunks(2).map(|p| C64::new(p[0], p[1])).collect()
}

/// Euclidean dot product in `R^{2n}`: `Re <a, b>_hermitian`.
pub fn real_dot(a: &[C64], b: &[C64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x.re * y.re + x.im * y.im).sum()
}
