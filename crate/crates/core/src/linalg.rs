//! Small dense complex linear algebra: the `n x n` matrices of affine maps
//! and Jacobians, plus a Householder least-squares solver for field fitting.

use alloc::vec::Vec;

#[allow(unused_imports)]
use crate::prelude::*;
use crate::C64;

const ZERO: C64 = C64 { re: 0.0, im: 0.0 };
const ONE: C64 = C64 { re: 1.0, im: 0.0 };

/// Row-major complex matrix.
#[derive(Clone, Debug, PartialEq)]
pub struct CMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<C64>,
}

impl CMatrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        CMatrix { rows, cols, data: alloc::vec![ZERO; rows * cols] }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = ONE;
        }
        m
    }

    pub fn from_rows(rows: &[Vec<C64>]) -> Self {
        let r = rows.len();
        let c = rows.first().map_or(0, |row| row.len());
        let mut data = Vec::with_capacity(r * c);
        for row in rows {
            assert_eq!(row.len(), c, "ragged matrix rows");
            data.extend_from_slice(row);
        }
        CMatrix { rows: r, cols: c, data }
    }

    pub fn scaled_identity(n: usize, s: C64) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = s;
        }
        m
    }

    pub fn matvec(&self, x: &[C64]) -> Vec<C64> {
        (0..self.rows)
            .map(|i| {
                self.data[i * self.cols..(i + 1) * self.cols]
                    .iter()
                    .zip(x)
                    .map(|(a, b)| a * b)
                    .sum()
            })
            .collect()
    }

    /// `self * other`.
    pub fn matmul(&self, other: &CMatrix) -> CMatrix {
        assert_eq!(self.cols, other.rows);
        let mut out = CMatrix::zeros(self.rows, other.cols);
        for i in 0..self.rows {
            for k in 0..self.cols {
                let a = self[(i, k)];
                if a == ZERO {
                    continue;
                }
                for j in 0..other.cols {
                    out[(i, j)] += a * other[(k, j)];
                }
            }
        }
        out
    }

    pub fn adjoint(&self) -> CMatrix {
        let mut out = CMatrix::zeros(self.cols, self.rows);
        for i in 0..self.rows {
            for j in 0..self.cols {
                out[(j, i)] = self[(i, j)].conj();
            }
        }
        out
    }

    /// Frobenius norm.
    pub fn norm(&self) -> f64 {
        self.data.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
    }

    /// LU with partial pivoting; `None` when exactly singular.
    fn lu(&self) -> Option<(CMatrix, Vec<usize>, bool)> {
        assert_eq!(self.rows, self.cols);
        let n = self.rows;
        let mut a = self.clone();
        let mut perm: Vec<usize> = (0..n).collect();
        let mut odd = false;
        for k in 0..n {
            let p = (k..n)
                .max_by(|&i, &j| a[(i, k)].norm().total_cmp(&a[(j, k)].norm()))
                .unwrap();
            if a[(p, k)].norm() == 0.0 {
                return None;
            }
            if p != k {
                for j in 0..n {
                    a.data.swap(k * n + j, p * n + j);
                }
                perm.swap(k, p);
                odd = !odd;
            }
            let pivot = a[(k, k)];
            for i in k + 1..n {
                let f = a[(i, k)] / pivot;
                a[(i, k)] = f;
                for j in k + 1..n {
                    let t = a[(k, j)];
                    a[(i, j)] -= f * t;
                }
            }
        }
        Some((a, perm, odd))
    }

    pub fn det(&self) -> C64 {
        match self.lu() {
            None => ZERO,
            Some((a, _, odd)) => {
                let mut d = if odd { -ONE } else { ONE };
                for i in 0..self.rows {
                    d *= a[(i, i)];
                }
                d
            }
        }
    }

    pub fn inverse(&self) -> Option<CMatrix> {
        let n = self.rows;
        let (lu, perm, _) = self.lu()?;
        let mut inv = CMatrix::zeros(n, n);
        for col in 0..n {
            // Solve L U x = P e_col.
            let mut x: Vec<C64> = (0..n).map(|i| if perm[i] == col { ONE } else { ZERO }).collect();
            for i in 0..n {
                for j in 0..i {
                    let t = lu[(i, j)] * x[j];
                    x[i] -= t;
                }
            }
            for i in (0..n).rev() {
                for j in i + 1..n {
                    let t = lu[(i, j)] * x[j];
                    x[i] -= t;
                }
                x[i] /= lu[(i, i)];
            }
            for i in 0..n {
                inv[(i, col)] = x[i];
            }
        }
        Some(inv)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl core::ops::Index<(usize, usize)> for CMatrix {
    type Output = C64;
    fn index(&self, (i, j): (usize, usize)) -> &C64 {
        &self.data[i * self.cols + j]
    }
}

impl core::ops::IndexMut<(usize, usize)> for CMatrix {
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut C64 {
        &mut self.data[i * self.cols + j]
    }
}

/// Result of a least-squares solve.
#[derive(Clone, Debug)]
pub struct LstsqSolution {
    pub x: Vec<C64>,
    /// `|A x - b|` in the unregularized system.
    pub residual: f64,
    /// Numerical rank detected from the R diagonal.
    pub rank: usize,
}

/// Minimizes `|A x - b|^2 + ridge^2 |x|^2` by Householder QR of the
/// ridge-augmented system. Columns are equilibrated before factoring.
pub fn lstsq(a: &CMatrix, b: &[C64], ridge: f64) -> LstsqSolution {
    let (m, n) = (a.rows, a.cols);
    let aug_rows = if ridge > 0.0 { m + n } else { m };
    let scales: Vec<f64> = (0..n)
        .map(|j| {
            let s = (0..m).map(|i| a[(i, j)].norm_sqr()).sum::<f64>().sqrt();
            if s > 0.0 { s } else { 1.0 }
        })
        .collect();
    let mut q = CMatrix::zeros(aug_rows, n);
    let mut rhs: Vec<C64> = alloc::vec![ZERO; aug_rows];
    for i in 0..m {
        for j in 0..n {
            q[(i, j)] = a[(i, j)] / scales[j];
        }
        rhs[i] = b[i];
    }
    if ridge > 0.0 {
        for j in 0..n {
            q[(m + j, j)] = C64::new(ridge / scales[j], 0.0);
        }
    }
    let kmax = n.min(aug_rows);
    let mut diag = Vec::with_capacity(kmax);
    for k in 0..kmax {
        let alpha_norm = (k..aug_rows).map(|i| q[(i, k)].norm_sqr()).sum::<f64>().sqrt();
        if alpha_norm == 0.0 {
            diag.push(0.0);
            continue;
        }
        let x0 = q[(k, k)];
        let phase = if x0.norm() > 0.0 { x0 / x0.norm() } else { ONE };
        let alpha = -phase * alpha_norm;
        // v = x - alpha e1, reflect H = I - 2 v v^H / (v^H v)
        let mut v: Vec<C64> = (k..aug_rows).map(|i| q[(i, k)]).collect();
        v[0] -= alpha;
        let vnorm2: f64 = v.iter().map(|z| z.norm_sqr()).sum();
        if vnorm2 > 0.0 {
            for j in k..n {
                let s: C64 = v.iter().enumerate().map(|(t, vi)| vi.conj() * q[(k + t, j)]).sum();
                let f = s * 2.0 / vnorm2;
                for (t, vi) in v.iter().enumerate() {
                    q[(k + t, j)] -= f * vi;
                }
            }
            let s: C64 = v.iter().enumerate().map(|(t, vi)| vi.conj() * rhs[k + t]).sum();
            let f = s * 2.0 / vnorm2;
            for (t, vi) in v.iter().enumerate() {
                rhs[k + t] -= f * vi;
            }
        }
        diag.push(q[(k, k)].norm());
    }
    let dmax = diag.iter().cloned().fold(0.0, f64::max);
    let tol = dmax * 1e-13 * (aug_rows.max(n) as f64);
    let rank = diag.iter().filter(|&&d| d > tol).count();
    let mut y = alloc::vec![ZERO; n];
    for i in (0..kmax).rev() {
        if diag[i] <= tol {
            y[i] = ZERO;
            continue;
        }
        let mut s = rhs[i];
        for j in i + 1..n {
            s -= q[(i, j)] * y[j];
        }
        y[i] = s / q[(i, i)];
    }
    let x: Vec<C64> = y.iter().zip(&scales).map(|(v, s)| v / s).collect();
    let ax = a.matvec(&x);
    let residual = ax.iter().zip(b).map(|(p, t)| (p - t).norm_sqr()).sum::<f64>().sqrt();
    LstsqSolution { x, residual, rank }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64, im: f64) -> C64 {
        C64::new(re, im)
    }

    #[test]
    fn inverse_and_det() {
        let m = CMatrix::from_rows(&[
            alloc::vec![c(2.0, 1.0), c(0.0, 1.0), c(1.0, 0.0)],
            alloc::vec![c(0.0, 0.0), c(1.0, -1.0), c(3.0, 0.0)],
            alloc::vec![c(1.0, 0.0), c(0.5, 0.0), c(0.0, 2.0)],
        ]);
        let inv = m.inverse().unwrap();
        let prod = m.matmul(&inv);
        for i in 0..3 {
            for j in 0..3 {
                let e = if i == j { 1.0 } else { 0.0 };
                assert!((prod[(i, j)] - c(e, 0.0)).norm() < 1e-13);
            }
        }
        let d = m.det();
        // cofactor expansion along the first row
        let det3 = m[(0, 0)] * (m[(1, 1)] * m[(2, 2)] - m[(1, 2)] * m[(2, 1)])
            - m[(0, 1)] * (m[(1, 0)] * m[(2, 2)] - m[(1, 2)] * m[(2, 0)])
            + m[(0, 2)] * (m[(1, 0)] * m[(2, 1)] - m[(1, 1)] * m[(2, 0)]);
        assert!((d - det3).norm() < 1e-12);
    }

    #[test]
    fn singular_has_no_inverse() {
        let m = CMatrix::from_rows(&[alloc::vec![c(1.0, 0.0), c(2.0, 0.0)], alloc::vec![c(2.0, 0.0), c(4.0, 0.0)]]);
        assert!(m.inverse().is_none());
        assert_eq!(m.det(), c(0.0, 0.0));
    }

    #[test]
    fn exact_system_solves() {
        let a = CMatrix::from_rows(&[
            alloc::vec![c(1.0, 0.0), c(0.0, 1.0)],
            alloc::vec![c(2.0, -1.0), c(1.0, 0.0)],
            alloc::vec![c(0.0, 0.0), c(3.0, 3.0)],
        ]);
        let x_true = [c(0.5, 0.25), c(-1.0, 2.0)];
        let b = a.matvec(&x_true);
        let sol = lstsq(&a, &b, 0.0);
        assert!(sol.residual < 1e-12);
        assert_eq!(sol.rank, 2);
        for (x, t) in sol.x.iter().zip(&x_true) {
            assert!((x - t).norm() < 1e-12);
        }
    }
}
