//! Real matrix polynomials `P(z) = sum_k z^k P_k` and their T-even structure.

mod generate;
pub mod io;

pub use generate::{generate_butterfly, generate_gyroscopic, random_t_even, ButterflyConstants};

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Default relative symmetry tolerance for polynomials read from files.
pub const FILE_STRUCTURE_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub struct MatrixPolynomial {
    n: usize,
    coeffs: Vec<DMatrix<f64>>,
}

/// Outcome of [`MatrixPolynomial::check_structure`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub is_t_even: bool,
    /// Largest `|P_k - (+/-) P_k^T|` entry, divided by the largest
    /// coefficient entry (zero for the zero polynomial).
    pub max_symmetry_defect: f64,
}

impl MatrixPolynomial {
    /// `coeffs[k]` is `P_k`. The leading coefficient must be nonzero.
    pub fn new(coeffs: Vec<DMatrix<f64>>) -> Result<Self> {
        let first = coeffs
            .first()
            .ok_or_else(|| Error::InvalidParameter("polynomial needs at least one coefficient".into()))?;
        let n = first.nrows();
        if n == 0 {
            return Err(Error::Dimension("coefficients must be at least 1x1".into()));
        }
        for (k, c) in coeffs.iter().enumerate() {
            if c.nrows() != n || c.ncols() != n {
                return Err(Error::Dimension(format!(
                    "coefficient P_{k} is {}x{}, expected {n}x{n}",
                    c.nrows(),
                    c.ncols()
                )));
            }
            if c.iter().any(|x| !x.is_finite()) {
                return Err(Error::InvalidParameter(format!("coefficient P_{k} has non-finite entries")));
            }
        }
        if coeffs.last().unwrap().iter().all(|&x| x == 0.0) {
            return Err(Error::InvalidParameter(
                "leading coefficient is zero; declare a lower degree".into(),
            ));
        }
        Ok(MatrixPolynomial { n, coeffs })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn degree(&self) -> usize {
        self.coeffs.len() - 1
    }

    pub fn coeffs(&self) -> &[DMatrix<f64>] {
        &self.coeffs
    }

    pub fn coeff(&self, k: usize) -> &DMatrix<f64> {
        &self.coeffs[k]
    }

    pub fn leading(&self) -> &DMatrix<f64> {
        self.coeffs.last().unwrap()
    }

    /// Largest absolute coefficient entry.
    pub fn max_abs_entry(&self) -> f64 {
        self.coeffs.iter().map(|c| c.amax()).fold(0.0, f64::max)
    }

    /// `P(z)` by Horner's rule.
    pub fn evaluate(&self, z: Complex64) -> DMatrix<Complex64> {
        let mut acc: DMatrix<Complex64> = self.leading().map(|x| Complex64::new(x, 0.0));
        for c in self.coeffs.iter().rev().skip(1) {
            acc *= z;
            acc.zip_apply(c, |a, b| *a += b);
        }
        acc
    }

    /// `P(x)` for real `x`.
    pub fn evaluate_real(&self, x: f64) -> DMatrix<f64> {
        let mut acc = self.leading().clone();
        for c in self.coeffs.iter().rev().skip(1) {
            acc *= x;
            acc += c;
        }
        acc
    }

    /// `P(z) v` without forming `P(z)`.
    pub fn apply(&self, z: Complex64, v: &DVector<Complex64>) -> DVector<Complex64> {
        let mut acc = DVector::<Complex64>::zeros(self.n);
        for c in self.coeffs.iter().rev() {
            acc *= z;
            acc += c.map(|x| Complex64::new(x, 0.0)) * v;
        }
        acc
    }

    pub fn check_structure(&self, tol: f64) -> StructureReport {
        let scale = self.max_abs_entry();
        let mut defect: f64 = 0.0;
        for (k, c) in self.coeffs.iter().enumerate() {
            let sign = if k % 2 == 0 { 1.0 } else { -1.0 };
            for i in 0..self.n {
                for j in 0..self.n {
                    defect = defect.max((c[(i, j)] - sign * c[(j, i)]).abs());
                }
            }
        }
        let rel = if scale > 0.0 { defect / scale } else { 0.0 };
        StructureReport {
            is_t_even: rel <= tol,
            max_symmetry_defect: rel,
        }
    }

    /// Returns an error unless the polynomial is T-even within `tol`.
    pub fn require_t_even(&self, tol: f64) -> Result<()> {
        let rep = self.check_structure(tol);
        if rep.is_t_even {
            Ok(())
        } else {
            Err(Error::NotTEven {
                defect: rep.max_symmetry_defect,
            })
        }
    }

    /// `z^deg P(1/z)`, with zero leading coefficients trimmed.
    pub fn reversal(&self) -> MatrixPolynomial {
        let mut coeffs: Vec<DMatrix<f64>> = self.coeffs.iter().rev().cloned().collect();
        while coeffs.len() > 1 && coeffs.last().unwrap().iter().all(|&x| x == 0.0) {
            coeffs.pop();
        }
        MatrixPolynomial { n: self.n, coeffs }
    }

    /// Reversal that stays T-even: for odd degree the polynomial is first
    /// padded to degree `deg + 1` (so `0` becomes an eigenvalue standing
    /// for the padding at infinity).
    pub fn t_even_reversal(&self) -> MatrixPolynomial {
        if self.degree().is_multiple_of(2) {
            return self.reversal();
        }
        let mut padded = self.coeffs.clone();
        padded.push(DMatrix::zeros(self.n, self.n));
        MatrixPolynomial { n: self.n, coeffs: padded }.reversal()
    }
}
