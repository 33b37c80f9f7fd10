//! Univariate complex polynomials, evaluated by Horner's scheme.

use alloc::vec::Vec;

use crate::C64;

/// A polynomial `sum c_k w^k` with coefficients in ascending order.
#[derive(Clone, Debug, PartialEq, Default)]
pub struct Poly {
    pub coeffs: Vec<C64>,
}

impl Poly {
    pub fn new(coeffs: Vec<C64>) -> Self {
        Poly { coeffs }
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn constant(c: C64) -> Self {
        Poly { coeffs: alloc::vec![c] }
    }

    /// `c * w^k`.
    pub fn monomial(c: C64, k: usize) -> Self {
        let mut coeffs = alloc::vec![C64::new(0.0, 0.0); k + 1];
        coeffs[k] = c;
        Poly { coeffs }
    }

    /// Monic polynomial with the given roots.
    pub fn from_roots(roots: &[C64]) -> Self {
        let mut p = Poly::constant(C64::new(1.0, 0.0));
        for &r in roots {
            p = p.mul(&Poly::new(alloc::vec![-r, C64::new(1.0, 0.0)]));
        }
        p
    }

    /// Degree of the stored coefficient list (trailing zeros included).
    pub fn degree(&self) -> usize {
        self.coeffs.len().saturating_sub(1)
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|c| c.re == 0.0 && c.im == 0.0)
    }

    pub fn eval(&self, w: C64) -> C64 {
        let mut acc = C64::new(0.0, 0.0);
        for c in self.coeffs.iter().rev() {
            acc = acc * w + c;
        }
        acc
    }

    /// Value and first derivative in one Horner pass.
    pub fn eval_with_deriv(&self, w: C64) -> (C64, C64) {
        let zero = C64::new(0.0, 0.0);
        let mut p = zero;
        let mut dp = zero;
        for c in self.coeffs.iter().rev() {
            dp = dp * w + p;
            p = p * w + c;
        }
        (p, dp)
    }

    pub fn scale(&self, s: C64) -> Poly {
        Poly::new(self.coeffs.iter().map(|c| c * s).collect())
    }

    pub fn neg(&self) -> Poly {
        self.scale(C64::new(-1.0, 0.0))
    }

    pub fn add(&self, other: &Poly) -> Poly {
        let n = self.coeffs.len().max(other.coeffs.len());
        let zero = C64::new(0.0, 0.0);
        Poly::new(
            (0..n)
                .map(|k| {
                    self.coeffs.get(k).copied().unwrap_or(zero)
                        + other.coeffs.get(k).copied().unwrap_or(zero)
                })
                .collect(),
        )
    }

    pub fn mul(&self, other: &Poly) -> Poly {
        if self.coeffs.is_empty() || other.coeffs.is_empty() {
            return Poly::zero();
        }
        let mut out = alloc::vec![C64::new(0.0, 0.0); self.coeffs.len() + other.coeffs.len() - 1];
        for (i, a) in self.coeffs.iter().enumerate() {
            for (j, b) in other.coeffs.iter().enumerate() {
                out[i + j] += a * b;
            }
        }
        Poly::new(out)
    }

    /// `p(a w + b)` expanded in the monomial basis.
    pub fn compose_affine(&self, a: C64, b: C64) -> Poly {
        let lin = Poly::new(alloc::vec![b, a]);
        let mut out = Poly::zero();
        for c in self.coeffs.iter().rev() {
            out = out.mul(&lin).add(&Poly::constant(*c));
        }
        out
    }

    /// Drops exactly-zero trailing coefficients.
    pub fn trimmed(mut self) -> Poly {
        while matches!(self.coeffs.last(), Some(c) if c.re == 0.0 && c.im == 0.0) {
            self.coeffs.pop();
        }
        self
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn horner_matches_expansion() {
        let p = Poly::new(alloc::vec![c(1.0, 0.0), c(0.0, 2.0), c(-3.0, 1.0)]);
        let w = c(0.5, -1.5);
        let direct = c(1.0, 0.0) + c(0.0, 2.0) * w + c(-3.0, 1.0) * w * w;
        assert!((p.eval(w) - direct).norm() < 1e-14);
        let (_, d) = p.eval_with_deriv(w);
        let dd = c(0.0, 2.0) + c(-6.0, 2.0) * w;
        assert!((d - dd).norm() < 1e-14);
    }

    #[test]
    fn roots_vanish() {
        let roots = [c(1.0, 0.0), c(-0.5, 2.0), c(0.0, -1.0)];
        let p = Poly::from_roots(&roots);
        for r in roots {
            assert!(p.eval(r).norm() < 1e-13);
        }
    }

    #[test]
    fn affine_composition() {
        let p = Poly::new(alloc::vec![c(2.0, 1.0), c(0.0, 0.0), c(1.0, -1.0), c(0.5, 0.0)]);
        let (a, b) = (c(0.3, 0.7), c(-1.0, 0.25));
        let q = p.compose_affine(a, b);
        let w = c(0.9, -0.2);
        assert!((q.eval(w) - p.eval(a * w + b)).norm() < 1e-13);
    }
}
