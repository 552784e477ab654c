//! Reference eigenvalues of a matrix polynomial via the first companion
//! pencil and dense QZ. Meant for validation at modest sizes.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::qz::qz_eigenvalues;
use crate::error::{Error, Result};
use crate::matpoly::MatrixPolynomial;

pub const DEFAULT_ORACLE_CAP: usize = 600;
/// Same meaning as the solver's `tol_inf`: `|theta| >= 1/tol` is infinite.
pub const ORACLE_TOL_INF: f64 = 1e-8;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PolyEigenvalues {
    #[serde(with = "crate::complex_serde::vec")]
    pub finite: Vec<Complex64>,
    pub infinite: usize,
}

impl PolyEigenvalues {
    /// Finite values sorted by descending modulus.
    pub fn by_descending_modulus(&self) -> Vec<Complex64> {
        let mut v = self.finite.clone();
        v.sort_by(|a, b| b.norm().total_cmp(&a.norm()));
        v
    }

    /// Finite value closest to `z`, with its distance.
    pub fn nearest(&self, z: Complex64) -> Option<(Complex64, f64)> {
        self.finite
            .iter()
            .map(|&w| (w, (w - z).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1))
    }
}

/// `A x = lambda B x` with `B = diag(I, .., I, P_deg)` and `A` the block
/// companion matrix carrying `-P_0 .. -P_{deg-1}` in its last block row.
pub fn companion_pencil(p: &MatrixPolynomial) -> (DMatrix<f64>, DMatrix<f64>) {
    let (n, d) = (p.n(), p.degree());
    let size = n * d;
    let mut a = DMatrix::<f64>::zeros(size, size);
    let mut b = DMatrix::<f64>::identity(size, size);
    for k in 0..d.saturating_sub(1) {
        for i in 0..n {
            a[(k * n + i, (k + 1) * n + i)] = 1.0;
        }
    }
    if d > 0 {
        let last = (d - 1) * n;
        for k in 0..d {
            a.view_mut((last, k * n), (n, n)).copy_from(&(-p.coeff(k)));
        }
        b.view_mut((last, last), (n, n)).copy_from(p.leading());
    }
    (a, b)
}

pub fn dense_polyeig_oracle(p: &MatrixPolynomial, cap: usize) -> Result<PolyEigenvalues> {
    let size = p.n() * p.degree();
    if size > cap {
        return Err(Error::CapExceeded { size, cap });
    }
    if size == 0 {
        return Ok(PolyEigenvalues::default());
    }
    let (a, b) = companion_pencil(p);
    let eigs = qz_eigenvalues(&b, &a)?;
    let mut out = PolyEigenvalues::default();
    for e in eigs {
        if e.is_infinite(ORACLE_TOL_INF) {
            out.infinite += 1;
        } else {
            out.finite.push(e.value().unwrap());
        }
    }
    Ok(out)
}
