//! The sparse T-even linearization `L(z) = z X + Y` of a T-even polynomial.
//!
//! With `d` the smallest odd integer `>= deg` (padding `P_d := 0` for even
//! degree) and `ell = (d + 1) / 2`, the pencil has order `d n` and block form
//!
//! ```text
//! L(z) = [ M(z)           L_{ell-1}(-z)^T (x) I ]
//!        [ L_{ell-1}(z) (x) I          0        ]
//! ```
//!
//! where `M(z) = diag_k (z A_k + B_k)`,
//! `A_k = (-1)^(ell-1-k) P_{d-2k}`, `B_k = (-1)^(ell-1-k) P_{d-2k-1}`, and
//! `L_j(z)` is the `j x (j+1)` bidiagonal matrix with rows `[.. 1 -z ..]`.
//! The sign pattern makes
//! `(Lambda(-z) (x) I) M(z) (Lambda(z)^T (x) I) = P(z)` for
//! `Lambda(z) = [z^(ell-1), .., z, 1]`, which spans the kernel of
//! `L_{ell-1}(z)`. `X` is skew-symmetric and `Y` symmetric.
//!
//! Vectors of length `d n` are split as `[v1; v2]` with `ell` blocks in
//! `v1` and `ell - 1` blocks in `v2`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::matpoly::{MatrixPolynomial, FILE_STRUCTURE_TOL};
use crate::scalar::{gemv_acc, Scalar};

pub const DEFAULT_MATERIALIZE_CAP: usize = 2000;

#[derive(Debug, Clone)]
pub struct EvenLinearization {
    poly: MatrixPolynomial,
    n: usize,
    d: usize,
    ell: usize,
    a: Vec<DMatrix<f64>>,
    b: Vec<DMatrix<f64>>,
}

impl EvenLinearization {
    /// Builds the linearization; `p` must be T-even to the file tolerance.
    pub fn new(p: &MatrixPolynomial) -> Result<Self> {
        p.require_t_even(FILE_STRUCTURE_TOL)?;
        let n = p.n();
        let deg = p.degree();
        if deg == 0 {
            return Err(Error::InvalidParameter(
                "a constant polynomial has no eigenvalues to linearize".into(),
            ));
        }
        let d = if deg % 2 == 1 { deg } else { deg + 1 };
        let ell = d.div_ceil(2);
        let coeff = |j: usize| -> DMatrix<f64> {
            if j <= deg {
                p.coeff(j).clone()
            } else {
                DMatrix::zeros(n, n)
            }
        };
        let mut a = Vec::with_capacity(ell);
        let mut b = Vec::with_capacity(ell);
        for k in 0..ell {
            let sign = if (ell - 1 - k) % 2 == 0 { 1.0 } else { -1.0 };
            a.push(coeff(d - 2 * k) * sign);
            b.push(coeff(d - 2 * k - 1) * sign);
        }
        Ok(EvenLinearization {
            poly: p.clone(),
            n,
            d,
            ell,
            a,
            b,
        })
    }

    pub fn poly(&self) -> &MatrixPolynomial {
        &self.poly
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.poly.degree()
    }

    /// Odd padded degree.
    pub fn d(&self) -> usize {
        self.d
    }

    pub fn ell(&self) -> usize {
        self.ell
    }

    /// Order `d n` of the pencil.
    pub fn dim(&self) -> usize {
        self.d * self.n
    }

    pub fn a_blocks(&self) -> &[DMatrix<f64>] {
        &self.a
    }

    pub fn b_blocks(&self) -> &[DMatrix<f64>] {
        &self.b
    }

    fn check_len(&self, len: usize, expect: usize, what: &str) -> Result<()> {
        if len == expect {
            Ok(())
        } else {
            Err(Error::Dimension(format!("{what}: vector length {len}, expected {expect}")))
        }
    }

    /// `X v`.
    pub fn apply_x<T: Scalar>(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len(), self.dim(), "apply_x")?;
        let mut out = vec![T::zero(); self.dim()];
        self.apply_x_into(v, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_x_into<T: Scalar>(&self, v: &[T], out: &mut [T]) {
        let (n, ell) = (self.n, self.ell);
        let top = ell * n;
        out.iter_mut().for_each(|o| *o = T::zero());
        for k in 0..ell {
            if k == 0 && self.degree().is_multiple_of(2) {
                continue; // A_0 = 0 for even degree
            }
            gemv_acc(&self.a[k], &v[k * n..(k + 1) * n], &mut out[k * n..(k + 1) * n]);
        }
        for i in 0..ell - 1 {
            for r in 0..n {
                out[(i + 1) * n + r] += v[top + i * n + r];
                out[top + i * n + r] = -v[(i + 1) * n + r];
            }
        }
    }

    /// `Y v`.
    pub fn apply_y<T: Scalar>(&self, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len(), self.dim(), "apply_y")?;
        let (n, ell) = (self.n, self.ell);
        let top = ell * n;
        let mut out = vec![T::zero(); self.dim()];
        for k in 0..ell {
            gemv_acc(&self.b[k], &v[k * n..(k + 1) * n], &mut out[k * n..(k + 1) * n]);
        }
        for i in 0..ell - 1 {
            for r in 0..n {
                out[i * n + r] += v[top + i * n + r];
                out[top + i * n + r] = v[i * n + r];
            }
        }
        Ok(out)
    }

    /// `(z X + Y) v`.
    pub fn apply_pencil<T: Scalar>(&self, z: T, v: &[T]) -> Result<Vec<T>> {
        let xv = self.apply_x(v)?;
        let mut yv = self.apply_y(v)?;
        for (y, x) in yv.iter_mut().zip(xv) {
            *y += z * x;
        }
        Ok(yv)
    }

    /// `M(z) v` on a vector of length `ell n`.
    pub fn apply_mp<T: Scalar>(&self, z: T, v: &[T]) -> Result<Vec<T>> {
        self.check_len(v.len(), self.ell * self.n, "apply_mp")?;
        let mut out = vec![T::zero(); v.len()];
        self.apply_mp_into(z, v, &mut out);
        Ok(out)
    }

    pub(crate) fn apply_mp_into<T: Scalar>(&self, z: T, v: &[T], out: &mut [T]) {
        let n = self.n;
        let mut tmp = vec![T::zero(); n];
        for k in 0..self.ell {
            let (vk, ok) = (&v[k * n..(k + 1) * n], &mut out[k * n..(k + 1) * n]);
            ok.iter_mut().for_each(|o| *o = T::zero());
            gemv_acc(&self.b[k], vk, ok);
            if k == 0 && self.degree().is_multiple_of(2) {
                continue;
            }
            tmp.iter_mut().for_each(|t| *t = T::zero());
            gemv_acc(&self.a[k], vk, &mut tmp);
            for (o, t) in ok.iter_mut().zip(&tmp) {
                *o += z * *t;
            }
        }
    }

    /// Dense `(X, Y)`; refuses orders above `cap`.
    pub fn materialize(&self, cap: usize) -> Result<(DMatrix<f64>, DMatrix<f64>)> {
        let dim = self.dim();
        if dim > cap {
            return Err(Error::CapExceeded { size: dim, cap });
        }
        let (n, ell) = (self.n, self.ell);
        let top = ell * n;
        let mut x = DMatrix::zeros(dim, dim);
        let mut y = DMatrix::zeros(dim, dim);
        for k in 0..ell {
            x.view_mut((k * n, k * n), (n, n)).copy_from(&self.a[k]);
            y.view_mut((k * n, k * n), (n, n)).copy_from(&self.b[k]);
        }
        for i in 0..ell - 1 {
            for r in 0..n {
                x[((i + 1) * n + r, top + i * n + r)] = 1.0;
                x[(top + i * n + r, (i + 1) * n + r)] = -1.0;
                y[(i * n + r, top + i * n + r)] = 1.0;
                y[(top + i * n + r, i * n + r)] = 1.0;
            }
        }
        Ok((x, y))
    }

    /// Dense `M(z)` of order `ell n`.
    pub fn materialize_mp(&self, z: Complex64) -> DMatrix<Complex64> {
        let n = self.n;
        let mut m = DMatrix::zeros(self.ell * n, self.ell * n);
        for k in 0..self.ell {
            let blk = (&self.a[k] * z.re + &self.b[k]).zip_map(&self.a[k], |re, a| Complex64::new(re, a * z.im));
            m.view_mut((k * n, k * n), (n, n)).copy_from(&blk);
        }
        m
    }

    /// `Lambda(z)^T (x) r`: the kernel embedding of `r` for `L_{ell-1}(z) (x) I`.
    pub fn lift<T: Scalar>(&self, z: T, r: &[T]) -> Vec<T> {
        let n = self.n;
        let mut out = vec![T::zero(); self.ell * n];
        let mut pow = T::one();
        for k in (0..self.ell).rev() {
            for i in 0..n {
                out[k * n + i] = pow * r[i];
            }
            pow *= z;
        }
        out
    }

    /// `(Lambda(w) (x) I) u` for `u` of length `ell n`, by Horner.
    pub fn project<T: Scalar>(&self, w: T, u: &[T]) -> Vec<T> {
        let n = self.n;
        let mut acc = vec![T::zero(); n];
        for k in 0..self.ell {
            for i in 0..n {
                acc[i] = acc[i] * w + u[k * n + i];
            }
        }
        acc
    }
}
