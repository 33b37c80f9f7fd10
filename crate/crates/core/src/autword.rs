//! Words in the automorphism group of `C^n`: finite compositions of shears,
//! overshears and invertible affine maps, each invertible in closed form.

use alloc::vec::Vec;

use thiserror::Error;

use crate::linalg::CMatrix;
use crate::point::{bilinear, norm, CPoint};
use crate::poly::Poly;
#[allow(unused_imports)]
use crate::prelude::*;
use crate::C64;

/// Polynomials of higher degree must be requested explicitly.
pub const DEFAULT_MAX_DEGREE: usize = 12;

const FORM_TOL: f64 = 1e-14;
const MIN_DET: f64 = 1e-12;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AutError {
    #[error("direction vector is zero")]
    ZeroDirection,
    #[error("linear form vanishes after projection onto the annihilator of the direction")]
    DegenerateForm,
    #[error("polynomial degree {degree} exceeds the cap {cap}")]
    DegreeTooHigh { degree: usize, cap: usize },
    #[error("affine map is numerically singular (|det| = {0:e})")]
    SingularAffine(f64),
    #[error("dimension mismatch: expected {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("non-finite coefficient")]
    NonFinite,
}

fn check_finite(z: &[C64]) -> Result<(), AutError> {
    if z.iter().all(|c| c.re.is_finite() && c.im.is_finite()) {
        Ok(())
    } else {
        Err(AutError::NonFinite)
    }
}

fn check_degree(h: &Poly, cap: usize) -> Result<(), AutError> {
    check_finite(&h.coeffs)?;
    if h.degree() > cap {
        return Err(AutError::DegreeTooHigh { degree: h.degree(), cap });
    }
    Ok(())
}

/// Projects `form` onto `{l : l(v) = 0}` along `conj(v)`.
fn annihilate(v: &[C64], form: &[C64]) -> Result<Vec<C64>, AutError> {
    let vv: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    if vv == 0.0 {
        return Err(AutError::ZeroDirection);
    }
    let mut l = form.to_vec();
    for _ in 0..3 {
        let lv = bilinear(&l, v);
        let f = lv / vv;
        for (lj, vj) in l.iter_mut().zip(v) {
            *lj -= f * vj.conj();
        }
        let ln = norm(&l);
        if ln == 0.0 {
            return Err(AutError::DegenerateForm);
        }
        if bilinear(&l, v).norm() <= FORM_TOL * ln * vv.sqrt() {
            return Ok(l);
        }
    }
    Err(AutError::DegenerateForm)
}

fn check_parts(v: &[C64], form: &[C64]) -> Result<(), AutError> {
    if v.len() != form.len() {
        return Err(AutError::DimensionMismatch { expected: v.len(), got: form.len() });
    }
    check_finite(v)?;
    check_finite(form)?;
    let vn = norm(v);
    if vn == 0.0 {
        return Err(AutError::ZeroDirection);
    }
    if bilinear(form, v).norm() > 1e3 * FORM_TOL * norm(form) * vn {
        return Err(AutError::DegenerateForm);
    }
    Ok(())
}

/// Corrects `mu` so that `mu(v) = 1`.
fn normalize_on(v: &[C64], mu: &[C64]) -> Result<Vec<C64>, AutError> {
    let vv: f64 = v.iter().map(|c| c.norm_sqr()).sum();
    if vv == 0.0 {
        return Err(AutError::ZeroDirection);
    }
    let mut m = mu.to_vec();
    for _ in 0..3 {
        let f = (C64::new(1.0, 0.0) - bilinear(&m, v)) / vv;
        for (mj, vj) in m.iter_mut().zip(v) {
            *mj += f * vj.conj();
        }
        if (bilinear(&m, v) - 1.0).norm() <= FORM_TOL {
            break;
        }
    }
    Ok(m)
}

/// `z -> z + h(l(z)) v` with `l(v) = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct Shear {
    v: Vec<C64>,
    form: Vec<C64>,
    h: Poly,
}

impl Shear {
    /// The form is projected so that `l(v) = 0` holds structurally.
    pub fn new(v: &[C64], form: &[C64], h: Poly) -> Result<Self, AutError> {
        Self::with_degree_cap(v, form, h, DEFAULT_MAX_DEGREE)
    }

    pub fn with_degree_cap(v: &[C64], form: &[C64], h: Poly, cap: usize) -> Result<Self, AutError> {
        if v.len() != form.len() {
            return Err(AutError::DimensionMismatch { expected: v.len(), got: form.len() });
        }
        check_finite(v)?;
        check_finite(form)?;
        check_degree(&h, cap)?;
        let form = annihilate(v, form)?;
        Ok(Shear { v: v.to_vec(), form, h })
    }

    /// Rebuilds a stored shear keeping every coefficient bit; the form must
    /// already annihilate the direction. No degree cap applies.
    pub fn from_parts(v: &[C64], form: &[C64], h: Poly) -> Result<Self, AutError> {
        check_parts(v, form)?;
        check_finite(&h.coeffs)?;
        Ok(Shear { v: v.to_vec(), form: form.to_vec(), h })
    }

    pub fn direction(&self) -> &[C64] {
        &self.v
    }
    pub fn form(&self) -> &[C64] {
        &self.form
    }
    pub fn poly(&self) -> &Poly {
        &self.h
    }

    pub fn apply(&self, z: &mut [C64]) {
        let s = self.h.eval(bilinear(&self.form, z));
        for (zj, vj) in z.iter_mut().zip(&self.v) {
            *zj += s * vj;
        }
    }

    pub fn jacobian(&self, z: &[C64]) -> CMatrix {
        let n = self.v.len();
        let (_, dh) = self.h.eval_with_deriv(bilinear(&self.form, z));
        let mut j = CMatrix::identity(n);
        for r in 0..n {
            for c in 0..n {
                j[(r, c)] += dh * self.v[r] * self.form[c];
            }
        }
        j
    }

    pub fn inverse(&self) -> Shear {
        Shear { v: self.v.clone(), form: self.form.clone(), h: self.h.neg() }
    }
}

/// `z -> z + (exp(h(l(z))) - 1) m(z) v` with `l(v) = 0`, `m(v) = 1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Overshear {
    v: Vec<C64>,
    form: Vec<C64>,
    mu: Vec<C64>,
    h: Poly,
}

impl Overshear {
    pub fn new(v: &[C64], form: &[C64], mu: &[C64], h: Poly) -> Result<Self, AutError> {
        Self::with_degree_cap(v, form, mu, h, DEFAULT_MAX_DEGREE)
    }

    pub fn with_degree_cap(
        v: &[C64],
        form: &[C64],
        mu: &[C64],
        h: Poly,
        cap: usize,
    ) -> Result<Self, AutError> {
        for other in [form, mu] {
            if other.len() != v.len() {
                return Err(AutError::DimensionMismatch { expected: v.len(), got: other.len() });
            }
            check_finite(other)?;
        }
        check_finite(v)?;
        check_degree(&h, cap)?;
        let form = annihilate(v, form)?;
        let mu = normalize_on(v, mu)?;
        Ok(Overshear { v: v.to_vec(), form, mu, h })
    }

    /// Bit-preserving counterpart of [`Overshear::new`], as [`Shear::from_parts`].
    pub fn from_parts(v: &[C64], form: &[C64], mu: &[C64], h: Poly) -> Result<Self, AutError> {
        check_parts(v, form)?;
        if mu.len() != v.len() {
            return Err(AutError::DimensionMismatch { expected: v.len(), got: mu.len() });
        }
        check_finite(mu)?;
        check_finite(&h.coeffs)?;
        if (bilinear(mu, v) - 1.0).norm() > 1e3 * FORM_TOL {
            return Err(AutError::DegenerateForm);
        }
        Ok(Overshear { v: v.to_vec(), form: form.to_vec(), mu: mu.to_vec(), h })
    }

    pub fn direction(&self) -> &[C64] {
        &self.v
    }
    pub fn form(&self) -> &[C64] {
        &self.form
    }
    pub fn mu(&self) -> &[C64] {
        &self.mu
    }
    pub fn poly(&self) -> &Poly {
        &self.h
    }

    pub fn apply(&self, z: &mut [C64]) {
        let e = self.h.eval(bilinear(&self.form, z)).exp();
        let s = (e - 1.0) * bilinear(&self.mu, z);
        for (zj, vj) in z.iter_mut().zip(&self.v) {
            *zj += s * vj;
        }
    }

    pub fn jacobian(&self, z: &[C64]) -> CMatrix {
        let n = self.v.len();
        let (hv, dh) = self.h.eval_with_deriv(bilinear(&self.form, z));
        let e = hv.exp();
        let mz = bilinear(&self.mu, z);
        let mut j = CMatrix::identity(n);
        for r in 0..n {
            for c in 0..n {
                j[(r, c)] += self.v[r] * ((e - 1.0) * self.mu[c] + e * dh * mz * self.form[c]);
            }
        }
        j
    }

    pub fn inverse(&self) -> Overshear {
        Overshear { v: self.v.clone(), form: self.form.clone(), mu: self.mu.clone(), h: self.h.neg() }
    }
}

/// `z -> L z + t`, stored with `L^{-1}`.
#[derive(Clone, Debug, PartialEq)]
pub struct AffineMap {
    l: CMatrix,
    l_inv: CMatrix,
    t: Vec<C64>,
}

impl AffineMap {
    pub fn new(l: CMatrix, t: Vec<C64>) -> Result<Self, AutError> {
        if l.rows != l.cols || t.len() != l.rows {
            return Err(AutError::DimensionMismatch { expected: l.rows, got: t.len() });
        }
        if !l.is_finite() {
            return Err(AutError::NonFinite);
        }
        check_finite(&t)?;
        let d = l.det().norm();
        if d <= MIN_DET {
            return Err(AutError::SingularAffine(d));
        }
        let l_inv = l.inverse().ok_or(AutError::SingularAffine(d))?;
        Ok(AffineMap { l, l_inv, t })
    }

    /// Rebuilds a map from a stored matrix/inverse pair without recomputing
    /// the inverse, so serialized words round-trip bit-exactly.
    pub fn from_parts(l: CMatrix, l_inv: CMatrix, t: Vec<C64>) -> Result<Self, AutError> {
        let n = l.rows;
        if l.cols != n || l_inv.rows != n || l_inv.cols != n || t.len() != n {
            return Err(AutError::DimensionMismatch { expected: n, got: t.len() });
        }
        if !l.is_finite() || !l_inv.is_finite() {
            return Err(AutError::NonFinite);
        }
        check_finite(&t)?;
        let d = l.det().norm();
        if d <= MIN_DET {
            return Err(AutError::SingularAffine(d));
        }
        Ok(AffineMap { l, l_inv, t })
    }

    pub fn translation(t: Vec<C64>) -> Self {
        let n = t.len();
        AffineMap { l: CMatrix::identity(n), l_inv: CMatrix::identity(n), t }
    }

    pub fn scaling(n: usize, s: f64) -> Result<Self, AutError> {
        Self::new(CMatrix::scaled_identity(n, C64::new(s, 0.0)), alloc::vec![C64::new(0.0, 0.0); n])
    }

    /// A linear map whose inverse is its adjoint.
    pub fn unitary(u: CMatrix) -> Result<Self, AutError> {
        let n = u.rows;
        if u.cols != n {
            return Err(AutError::DimensionMismatch { expected: n, got: u.cols });
        }
        let l_inv = u.adjoint();
        Self::from_parts(u, l_inv, alloc::vec![C64::new(0.0, 0.0); n])
    }

    pub fn matrix(&self) -> &CMatrix {
        &self.l
    }
    pub fn inverse_matrix(&self) -> &CMatrix {
        &self.l_inv
    }
    pub fn offset(&self) -> &[C64] {
        &self.t
    }

    pub fn apply(&self, z: &mut [C64]) {
        let w = self.l.matvec(z);
        for ((zj, wj), tj) in z.iter_mut().zip(w).zip(&self.t) {
            *zj = wj + tj;
        }
    }

    pub fn inverse(&self) -> AffineMap {
        let t = self.l_inv.matvec(&self.t).into_iter().map(|c| -c).collect();
        AffineMap { l: self.l_inv.clone(), l_inv: self.l.clone(), t }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum Primitive {
    Shear(Shear),
    Overshear(Overshear),
    Affine(AffineMap),
}

impl Primitive {
    pub fn dim(&self) -> usize {
        match self {
            Primitive::Shear(s) => s.v.len(),
            Primitive::Overshear(o) => o.v.len(),
            Primitive::Affine(a) => a.t.len(),
        }
    }

    pub fn apply(&self, z: &mut [C64]) {
        match self {
            Primitive::Shear(s) => s.apply(z),
            Primitive::Overshear(o) => o.apply(z),
            Primitive::Affine(a) => a.apply(z),
        }
    }

    pub fn jacobian(&self, z: &[C64]) -> CMatrix {
        match self {
            Primitive::Shear(s) => s.jacobian(z),
            Primitive::Overshear(o) => o.jacobian(z),
            Primitive::Affine(a) => a.l.clone(),
        }
    }

    pub fn inverse(&self) -> Primitive {
        match self {
            Primitive::Shear(s) => Primitive::Shear(s.inverse()),
            Primitive::Overshear(o) => Primitive::Overshear(o.inverse()),
            Primitive::Affine(a) => Primitive::Affine(a.inverse()),
        }
    }
}

impl From<Shear> for Primitive {
    fn from(s: Shear) -> Self {
        Primitive::Shear(s)
    }
}
impl From<Overshear> for Primitive {
    fn from(o: Overshear) -> Self {
        Primitive::Overshear(o)
    }
}
impl From<AffineMap> for Primitive {
    fn from(a: AffineMap) -> Self {
        Primitive::Affine(a)
    }
}

/// A composition of primitives, applied first to last. The empty word is
/// the identity.
#[derive(Clone, Debug, PartialEq)]
pub struct AutWord {
    n: usize,
    prims: Vec<Primitive>,
}

impl AutWord {
    pub fn identity(n: usize) -> Self {
        AutWord { n, prims: Vec::new() }
    }

    pub fn from_primitives(n: usize, prims: Vec<Primitive>) -> Result<Self, AutError> {
        for p in &prims {
            if p.dim() != n {
                return Err(AutError::DimensionMismatch { expected: n, got: p.dim() });
            }
        }
        Ok(AutWord { n, prims })
    }

    pub fn single(p: impl Into<Primitive>) -> Self {
        let p = p.into();
        AutWord { n: p.dim(), prims: alloc::vec![p] }
    }

    pub fn dim(&self) -> usize {
        self.n
    }
    pub fn len(&self) -> usize {
        self.prims.len()
    }
    pub fn is_empty(&self) -> bool {
        self.prims.is_empty()
    }
    pub fn primitives(&self) -> &[Primitive] {
        &self.prims
    }

    /// Appends `p`, to be applied after the current word.
    pub fn push(&mut self, p: impl Into<Primitive>) {
        let p = p.into();
        assert_eq!(p.dim(), self.n, "primitive dimension mismatch");
        self.prims.push(p);
    }

    pub fn eval_in_place(&self, z: &mut [C64]) {
        for p in &self.prims {
            p.apply(z);
        }
    }

    pub fn eval(&self, z: &CPoint) -> CPoint {
        debug_assert_eq!(z.dim(), self.n);
        let mut out = z.clone();
        self.eval_in_place(&mut out.0);
        out
    }

    /// Reversed list of element-wise inverses.
    pub fn inverse(&self) -> AutWord {
        AutWord { n: self.n, prims: self.prims.iter().rev().map(Primitive::inverse).collect() }
    }

    /// The word applying `self` first and then `then`.
    pub fn compose(&self, then: &AutWord) -> AutWord {
        assert_eq!(self.n, then.n, "word dimension mismatch");
        let mut prims = self.prims.clone();
        prims.extend(then.prims.iter().cloned());
        AutWord { n: self.n, prims }
    }

    /// Complex Jacobian at `z` by the chain rule.
    pub fn jacobian(&self, z: &CPoint) -> CMatrix {
        let mut j = CMatrix::identity(self.n);
        let mut cur = z.0.clone();
        for p in &self.prims {
            j = p.jacobian(&cur).matmul(&j);
            p.apply(&mut cur);
        }
        j
    }

    /// Value and `Df(z) w` in one pass, avoiding full Jacobians.
    pub fn eval_with_directional(&self, z: &[C64], w: &[C64]) -> (Vec<C64>, Vec<C64>) {
        let mut cur = z.to_vec();
        let mut dir = w.to_vec();
        for p in &self.prims {
            match p {
                Primitive::Shear(s) => {
                    let (_, dh) = s.h.eval_with_deriv(bilinear(&s.form, &cur));
                    let f = dh * bilinear(&s.form, &dir);
                    for (dj, vj) in dir.iter_mut().zip(&s.v) {
                        *dj += f * vj;
                    }
                }
                Primitive::Overshear(o) => {
                    let (hv, dh) = o.h.eval_with_deriv(bilinear(&o.form, &cur));
                    let e = hv.exp();
                    let mz = bilinear(&o.mu, &cur);
                    let f = (e - 1.0) * bilinear(&o.mu, &dir) + e * dh * mz * bilinear(&o.form, &dir);
                    for (dj, vj) in dir.iter_mut().zip(&o.v) {
                        *dj += f * vj;
                    }
                }
                Primitive::Affine(a) => {
                    dir = a.l.matvec(&dir);
                }
            }
            p.apply(&mut cur);
        }
        (cur, dir)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    fn e(n: usize, k: usize) -> Vec<C64> {
        CPoint::basis(n, k).0
    }

    #[test]
    fn empty_word_is_identity() {
        let z = CPoint::from_pairs(&[(0.3, 0.0), (-1.0, 2.0)]);
        assert_eq!(AutWord::identity(2).eval(&z), z);
    }

    #[test]
    fn shear_formula() {
        let s = Shear::new(&e(2, 1), &e(2, 0), Poly::monomial(c(5.0, 0.0), 1)).unwrap();
        let w = AutWord::single(s.clone());
        let out = w.eval(&CPoint::from_pairs(&[(1.0, 0.0), (0.0, 0.0)]));
        assert_eq!(out, CPoint::from_pairs(&[(1.0, 0.0), (5.0, 0.0)]));
        let back = AutWord::single(s.inverse()).eval(&out);
        assert_eq!(back, CPoint::from_pairs(&[(1.0, 0.0), (0.0, 0.0)]));
        let mut both = w.clone();
        both.push(s.inverse());
        let z = CPoint::from_pairs(&[(2.0, 1.0), (3.0, 0.0)]);
        assert!(both.eval(&z).dist(&z) < 1e-15);
    }

    #[test]
    fn affine_inverse() {
        let a = AffineMap::new(CMatrix::scaled_identity(2, c(2.0, 0.0)), alloc::vec![c(1.0, 0.0), c(0.0, 0.0)]).unwrap();
        let inv = AutWord::single(a.inverse());
        let out = inv.eval(&CPoint::from_pairs(&[(3.0, 0.0), (0.0, 0.0)]));
        assert!(out.dist(&CPoint::from_pairs(&[(1.0, 0.0), (0.0, 0.0)])) < 1e-15);
    }

    #[test]
    fn form_is_projected_onto_annihilator() {
        let v = alloc::vec![c(1.0, 2.0), c(-0.5, 0.25)];
        let s = Shear::new(&v, &[c(1.0, 0.0), c(1.0, 1.0)], Poly::constant(c(1.0, 0.0))).unwrap();
        let lv = bilinear(s.form(), s.direction());
        assert!(lv.norm() <= 1e-14 * norm(s.form()) * norm(&v));
    }

    #[test]
    fn degenerate_inputs_are_rejected() {
        let zero = alloc::vec![c(0.0, 0.0); 2];
        assert_eq!(Shear::new(&zero, &e(2, 0), Poly::zero()), Err(AutError::ZeroDirection));
        // the conjugate of v is annihilated entirely
        let v = alloc::vec![c(1.0, 1.0), c(0.0, 0.0)];
        let hint = alloc::vec![c(1.0, -1.0), c(0.0, 0.0)];
        assert_eq!(Shear::new(&v, &hint, Poly::zero()), Err(AutError::DegenerateForm));
        let high = Poly::monomial(c(1.0, 0.0), 13);
        assert!(matches!(Shear::new(&e(2, 1), &e(2, 0), high.clone()), Err(AutError::DegreeTooHigh { .. })));
        assert!(Shear::with_degree_cap(&e(2, 1), &e(2, 0), high, 20).is_ok());
        let sing = CMatrix::zeros(2, 2);
        assert!(matches!(AffineMap::new(sing, zero), Err(AutError::SingularAffine(_))));
    }

    #[test]
    fn shear_jacobian_is_unipotent() {
        let s = Shear::new(&[c(0.3, 0.1), c(1.0, -0.2)], &[c(1.0, 0.5), c(0.2, 0.0)], Poly::new(alloc::vec![c(0.1, 0.0), c(1.0, 1.0), c(-0.5, 0.3)])).unwrap();
        for z in [CPoint::from_pairs(&[(0.5, -1.0), (2.0, 0.3)]), CPoint::from_pairs(&[(-3.0, 0.0), (0.0, 1.0)])] {
            let d = s.jacobian(&z.0).det();
            assert!((d - c(1.0, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn zero_overshear_is_identity() {
        let o = Overshear::new(&e(2, 0), &e(2, 1), &e(2, 0), Poly::zero()).unwrap();
        let z = CPoint::from_pairs(&[(0.7, 0.2), (-1.0, 0.4)]);
        assert_eq!(AutWord::single(o.clone()).eval(&z), z);
        assert_eq!(o.jacobian(&z.0), CMatrix::identity(2));
    }

    #[test]
    fn overshear_inverse_round_trip() {
        let o = Overshear::new(
            &[c(1.0, 0.0), c(0.5, 0.5)],
            &[c(0.2, 0.0), c(1.0, -1.0)],
            &[c(1.0, 0.0), c(0.0, 0.0)],
            Poly::new(alloc::vec![c(0.1, 0.2), c(0.3, -0.1)]),
        )
        .unwrap();
        assert!((bilinear(o.mu(), o.direction()) - 1.0).norm() < 1e-14);
        let mut w = AutWord::single(o.clone());
        w.push(o.inverse());
        let z = CPoint::from_pairs(&[(0.3, -0.4), (1.2, 0.9)]);
        assert!(w.eval(&z).dist(&z) < 1e-13);
    }
}
