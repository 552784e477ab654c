//! Rational Arnoldi decompositions `G^2 V_m T_m = V_{m+1} Hbar_m` with a
//! possibly different shift in every step (`G = X^{-1} Y`, never formed).
//!
//! A step with shift `xi` orthogonalizes `w = K(xi) v_{m+1}` against the
//! basis. Since `K(xi) = (G^2 - xi^2)^{-1}`, writing `w = Vhat t` gives
//! `G^2 Vhat t = Vhat (e_{m+1} + xi^2 t)`, one new column for `T` and one
//! for `H`. The enlarged pair is no longer triangular/Hessenberg; a bulge
//! chase with Givens rotations from both sides restores the shape, and the
//! left rotations are applied to the basis. For a genuinely complex `xi`
//! the real and imaginary parts of `w` give two real columns at once.

use std::ops::AddAssign;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::densekernels::Givens;
use crate::error::{Error, Result};
use crate::linearize::EvenLinearization;
use crate::structsolve::{FactorCache, ShiftClass, ShiftedFactorization};

/// Residual norms at or below this fraction of `||K v||` are a breakdown.
pub const BREAKDOWN_TOL: f64 = 1e-12;
/// Tolerance on `||v1|| = 1` at initialization.
pub const INIT_NORM_TOL: f64 = 1e-10;
/// Relative singular value cutoff for the basis of `X V`.
pub const ISOTROPY_RANK_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct RationalKrylovDecomposition {
    pub(crate) v: DMatrix<f64>,
    pub(crate) t: DMatrix<f64>,
    pub(crate) h: DMatrix<f64>,
    pub(crate) shifts: Vec<Complex64>,
    pub(crate) locked: usize,
    rng: ChaCha8Rng,
    isotropic: bool,
}

/// Diagnostics of one expansion step.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct StepReport {
    #[serde(with = "crate::complex_serde")]
    pub shift: Complex64,
    pub class: ShiftClass,
    /// Basis columns added.
    pub added: usize,
    /// Norm of the last orthogonalization residual (the new subdiagonal
    /// coefficient before chasing).
    pub residual: f64,
    /// Nontrivial Givens rotations in the chase.
    pub rotations: usize,
    /// The step hit an invariant subspace and was absorbed.
    pub breakdown: bool,
}

/// Output of a bulge chase: `Q That Z = [T; 0]`, `Q Hhat Z = Hbar`.
#[derive(Debug, Clone)]
pub struct ChaseResult {
    pub q: DMatrix<f64>,
    pub z: DMatrix<f64>,
    pub t: DMatrix<f64>,
    pub h: DMatrix<f64>,
    pub rotations: usize,
    /// Smallest row index touched by a left rotation (`rows` if none).
    pub first_row: usize,
}

/// Pre-chase step data (exposed for verification).
#[derive(Debug, Clone)]
pub struct RawStep {
    pub vhat: DMatrix<f64>,
    pub that: DMatrix<f64>,
    pub hhat: DMatrix<f64>,
    pub residual: f64,
    /// Coefficients of the vector `K` was applied to, in the old basis.
    pub continuation: DVector<f64>,
}

struct Chaser {
    t: DMatrix<f64>,
    h: DMatrix<f64>,
    q: DMatrix<f64>,
    z: DMatrix<f64>,
    rotations: usize,
    first_row: usize,
}

impl Chaser {
    fn new(t: DMatrix<f64>, h: DMatrix<f64>) -> Self {
        let (r, c) = t.shape();
        Chaser {
            t,
            h,
            q: DMatrix::identity(r, r),
            z: DMatrix::identity(c, c),
            rotations: 0,
            first_row: r,
        }
    }

    fn left(&mut self, g: Givens, i: usize, j: usize) {
        if g.is_identity() {
            return;
        }
        let (r, c) = self.t.shape();
        g.apply_left(&mut self.t, i, j, 0..c);
        g.apply_left(&mut self.h, i, j, 0..c);
        g.apply_left(&mut self.q, i, j, 0..r);
        self.rotations += 1;
        self.first_row = self.first_row.min(i);
    }

    fn right(&mut self, g: Givens, i: usize, j: usize) {
        if g.is_identity() {
            return;
        }
        let (r, c) = self.t.shape();
        g.apply_right(&mut self.t, i, j, 0..r);
        g.apply_right(&mut self.h, i, j, 0..r);
        g.apply_right(&mut self.z, i, j, 0..c);
        self.rotations += 1;
    }

    /// Chases a `T` subdiagonal entry at `(j0+1, j0)` off the top-left corner.
    fn real_from(&mut self, j0: usize) {
        for j in (0..=j0).rev() {
            let (g, r) = Givens::zero_second(self.t[(j, j)], self.t[(j + 1, j)]);
            if !g.is_identity() {
                self.left(g, j, j + 1);
                self.t[(j, j)] = r;
                self.t[(j + 1, j)] = 0.0;
            }
            if j >= 1 {
                let (g, _) = Givens::zero_first(self.h[(j + 1, j - 1)], self.h[(j + 1, j)]);
                if !g.is_identity() {
                    self.right(g, j - 1, j);
                    self.h[(j + 1, j - 1)] = 0.0;
                }
            }
        }
    }

    /// Chases the two `T` subdiagonal entries `(m+1, m)`, `(m+2, m+1)` and
    /// the `H` entry `(m+2, m)` off the top-left corner.
    fn complex_from(&mut self, m: usize) {
        for p in (0..=m).rev() {
            self.zero_t_sub(p);
            self.zero_t_sub(p + 1);
            if p >= 1 {
                let (g, _) = Givens::zero_first(self.h[(p + 2, p - 1)], self.h[(p + 2, p)]);
                if !g.is_identity() {
                    self.right(g, p - 1, p);
                    self.h[(p + 2, p - 1)] = 0.0;
                }
            }
            let (g, _) = Givens::zero_first(self.h[(p + 2, p)], self.h[(p + 2, p + 1)]);
            if !g.is_identity() {
                self.right(g, p, p + 1);
                self.h[(p + 2, p)] = 0.0;
            }
        }
        self.zero_t_sub(0);
    }

    fn zero_t_sub(&mut self, j: usize) {
        let (g, r) = Givens::zero_second(self.t[(j, j)], self.t[(j + 1, j)]);
        if !g.is_identity() {
            self.left(g, j, j + 1);
            self.t[(j, j)] = r;
            self.t[(j + 1, j)] = 0.0;
        }
    }

    fn finish(self) -> ChaseResult {
        ChaseResult {
            q: self.q,
            z: self.z,
            t: self.t,
            h: self.h,
            rotations: self.rotations,
            first_row: self.first_row,
        }
    }
}

fn check_chase_input(that: &DMatrix<f64>, hhat: &DMatrix<f64>, min_cols: usize) -> Result<()> {
    let (r, c) = that.shape();
    if hhat.shape() != (r, c) || r != c + 1 || c < min_cols {
        return Err(Error::Dimension(format!(
            "bulge chase needs matching (k+1) x k inputs, got {:?} and {:?}",
            that.shape(),
            hhat.shape()
        )));
    }
    Ok(())
}

/// Restores the shape after a real or imaginary shift step. `That` is
/// `(m+2) x (m+1)` upper triangular apart from `(m+1, m)`; `Hhat` is
/// Hessenberg.
pub fn bulge_chase_real(that: &DMatrix<f64>, hhat: &DMatrix<f64>) -> Result<ChaseResult> {
    check_chase_input(that, hhat, 1)?;
    let m = that.ncols() - 1;
    let mut ch = Chaser::new(that.clone(), hhat.clone());
    ch.real_from(m);
    Ok(ch.finish())
}

/// Restores the shape after a complex shift step. `That` is `(m+3) x (m+2)`
/// upper triangular apart from `(m+1, m)` and `(m+2, m+1)`; `Hhat` is
/// Hessenberg apart from `(m+2, m)`.
pub fn bulge_chase_complex(that: &DMatrix<f64>, hhat: &DMatrix<f64>) -> Result<ChaseResult> {
    check_chase_input(that, hhat, 2)?;
    let m = that.ncols() - 2;
    let mut ch = Chaser::new(that.clone(), hhat.clone());
    ch.complex_from(m);
    Ok(ch.finish())
}

/// Classical Gram-Schmidt against the columns of `v`, repeated until the
/// residual stops shrinking substantially (at least twice).
fn orthogonalize(v: &DMatrix<f64>, w: &mut DVector<f64>) -> (DVector<f64>, f64) {
    let mut coeffs = DVector::zeros(v.ncols());
    let mut prev = w.norm();
    for pass in 0..4 {
        let c = v.tr_mul(w);
        w.gemv(-1.0, v, &c, 1.0);
        coeffs += c;
        let now = w.norm();
        if pass >= 1 && now > 0.7 * prev {
            break;
        }
        prev = now;
    }
    let beta = w.norm();
    (coeffs, beta)
}

/// Orthonormal basis of `range(X V)`, dropping directions below a
/// relative singular value cutoff.
fn x_image_basis(lin: &EvenLinearization, v: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    let mut xv = DMatrix::zeros(v.nrows(), v.ncols());
    for (j, col) in v.column_iter().enumerate() {
        let c: Vec<f64> = col.iter().copied().collect();
        xv.set_column(j, &DVector::from_vec(lin.apply_x(&c)?));
    }
    let svd = xv.svd(true, false);
    let u = svd.u.expect("requested U");
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| smax > 0.0 && svd.singular_values[i] > ISOTROPY_RANK_TOL * smax)
        .collect();
    Ok(u.select_columns(&keep))
}

/// Orthogonalizes against `v`; in isotropic mode the part of `w` along
/// `X V` (zero in exact arithmetic) is dropped as well.
fn orthogonalize_structured(
    v: &DMatrix<f64>,
    w: &mut DVector<f64>,
    lin: Option<&EvenLinearization>,
) -> Result<(DVector<f64>, f64)> {
    let (mut coeffs, mut beta) = orthogonalize(v, w);
    if let Some(lin) = lin {
        let u = x_image_basis(lin, v)?;
        if u.ncols() > 0 {
            for _ in 0..2 {
                let c = u.tr_mul(w);
                w.gemv(-1.0, &u, &c, 1.0);
            }
            let c = v.tr_mul(w);
            w.gemv(-1.0, v, &c, 1.0);
            coeffs += c;
            beta = w.norm();
        }
    }
    Ok((coeffs, beta))
}

fn embed(col: &DVector<f64>, len: usize) -> DVector<f64> {
    let mut out = DVector::zeros(len);
    out.rows_mut(0, col.len()).copy_from(col);
    out
}

fn argmin(x: &[f64]) -> usize {
    (0..x.len()).min_by(|&a, &b| x[a].total_cmp(&x[b])).unwrap_or(0)
}

fn xi_squared(f: &ShiftedFactorization) -> Complex64 {
    let z = f.zeta();
    match f.class() {
        ShiftClass::Real => Complex64::new(z.re * z.re, 0.0),
        ShiftClass::Imaginary => Complex64::new(-z.im * z.im, 0.0),
        ShiftClass::Complex => z * z,
    }
}

impl RationalKrylovDecomposition {
    /// Starts from a unit vector.
    pub fn new(v1: &DVector<f64>) -> Result<Self> {
        let nrm = v1.norm();
        if nrm == 0.0 {
            return Err(Error::InvalidParameter("starting vector is zero".into()));
        }
        if (nrm - 1.0).abs() > INIT_NORM_TOL {
            return Err(Error::InvalidParameter(format!("starting vector has norm {nrm}, expected 1")));
        }
        Ok(RationalKrylovDecomposition {
            v: DMatrix::from_columns(std::slice::from_ref(v1)),
            t: DMatrix::zeros(0, 0),
            h: DMatrix::zeros(1, 0),
            shifts: Vec::new(),
            locked: 0,
            rng: ChaCha8Rng::seed_from_u64(0x7e7e),
            isotropic: false,
        })
    }

    /// Assembles a decomposition from its parts (`v` has `m+1` columns,
    /// `t` is `m x m`, `h` is `(m+1) x m`).
    pub fn from_parts(v: DMatrix<f64>, t: DMatrix<f64>, h: DMatrix<f64>, locked: usize) -> Result<Self> {
        let m = t.nrows();
        if v.ncols() != m + 1 || t.ncols() != m || h.shape() != (m + 1, m) || locked > m {
            return Err(Error::Dimension(format!(
                "decomposition parts: V {:?}, T {:?}, Hbar {:?}, locked {locked}",
                v.shape(),
                t.shape(),
                h.shape()
            )));
        }
        Ok(RationalKrylovDecomposition {
            v,
            t,
            h,
            shifts: Vec::new(),
            locked,
            rng: ChaCha8Rng::seed_from_u64(0x7e7e),
            isotropic: false,
        })
    }

    /// Keeps the basis `X`-isotropic (`V^T X V = 0`), as the exact
    /// Krylov space is. Without it, rounding errors let the partner `-mu`
    /// of a converged `mu` grow into the basis, and `mu^2` converges twice.
    pub fn set_isotropic(&mut self, on: bool) {
        self.isotropic = on;
    }

    pub fn isotropic(&self) -> bool {
        self.isotropic
    }

    /// `||V^T X V||_F / ||X V||_F`.
    pub fn isotropy_defect(&self, lin: &EvenLinearization) -> Result<f64> {
        let mut xv = DMatrix::zeros(self.v.nrows(), self.v.ncols());
        for (j, col) in self.v.column_iter().enumerate() {
            let c: Vec<f64> = col.iter().copied().collect();
            xv.set_column(j, &DVector::from_vec(lin.apply_x(&c)?));
        }
        let nrm = xv.norm();
        Ok(if nrm == 0.0 { 0.0 } else { self.v.tr_mul(&xv).norm() / nrm })
    }

    fn orth(&self, f: &ShiftedFactorization, v: &DMatrix<f64>, w: &mut DVector<f64>) -> Result<(DVector<f64>, f64)> {
        let lin = self.isotropic.then(|| f.linearization().as_ref());
        orthogonalize_structured(v, w, lin)
    }

    pub fn m(&self) -> usize {
        self.t.nrows()
    }

    /// Length of the basis vectors.
    pub fn dim(&self) -> usize {
        self.v.nrows()
    }

    /// `V_{m+1}`.
    pub fn v(&self) -> &DMatrix<f64> {
        &self.v
    }

    /// `T_m`.
    pub fn t(&self) -> &DMatrix<f64> {
        &self.t
    }

    /// `Hbar_m`, `(m+1) x m`.
    pub fn hbar(&self) -> &DMatrix<f64> {
        &self.h
    }

    /// Last row of `Hbar_m`.
    pub fn b(&self) -> DVector<f64> {
        self.h.row(self.m()).transpose()
    }

    pub fn shifts(&self) -> &[Complex64] {
        &self.shifts
    }

    pub fn locked(&self) -> usize {
        self.locked
    }

    /// `max |V^T V - I|`.
    pub fn orthonormality_defect(&self) -> f64 {
        let k = self.v.ncols();
        (self.v.tr_mul(&self.v) - DMatrix::<f64>::identity(k, k)).amax()
    }

    /// `||G2 V_m T_m - V_{m+1} Hbar_m||_F` for an explicit `G2 = (X^{-1} Y)^2`.
    pub fn residual(&self, g2: &DMatrix<f64>) -> f64 {
        let m = self.m();
        let vm = self.v.columns(0, m);
        (g2 * vm * &self.t - &self.v * &self.h).norm()
    }

    /// One step with the shift of `f`, dispatching on its class.
    pub fn step(&mut self, f: &ShiftedFactorization) -> Result<StepReport> {
        if f.class() == ShiftClass::Complex {
            self.expand_complex_shift(f)
        } else {
            self.expand_real_shift(f)
        }
    }

    fn check_operator(&self, f: &ShiftedFactorization, needed: usize) -> Result<()> {
        if f.linearization().dim() != self.dim() {
            return Err(Error::Dimension(format!(
                "operator order {} vs basis length {}",
                f.linearization().dim(),
                self.dim()
            )));
        }
        if self.v.ncols() + needed > self.dim() {
            return Err(Error::InvalidParameter(format!(
                "cannot add {needed} basis vectors to {} in dimension {}",
                self.v.ncols(),
                self.dim()
            )));
        }
        Ok(())
    }

    /// Coefficients `c` of the continuation vector `V_{m+1} c`.
    ///
    /// With an unchanged pole this is `e_{m+1}`. A new pole gets a unit `c`
    /// orthogonal to the range of `Hbar - xi^2 [T; 0]`: continuing with
    /// `v_{m+1}` breaks down exactly when `xi^2` is a Ritz value, which is
    /// what Ritz-value shifts ask for.
    fn continuation(&self, f: &ShiftedFactorization) -> DVector<f64> {
        let m = self.m();
        if m == self.locked || self.shifts.last().is_none_or(|&z| z == f.zeta()) {
            let mut e = DVector::zeros(m + 1);
            e[m] = 1.0;
            return e;
        }
        let sigma = xi_squared(f);
        let mut c = if sigma.im == 0.0 {
            let mut a = DMatrix::<f64>::zeros(m + 1, m + 1);
            a.view_mut((0, 0), (m + 1, m)).copy_from(&self.h);
            let st = &self.t * sigma.re;
            let top = a.view((0, 0), (m, m)) - st;
            a.view_mut((0, 0), (m, m)).copy_from(&top);
            let svd = a.svd(true, false);
            let jmin = argmin(svd.singular_values.as_slice());
            svd.u.expect("u requested").column(jmin).into_owned()
        } else {
            let mut a = DMatrix::<Complex64>::zeros(m + 1, m + 1);
            for j in 0..m {
                for i in 0..=m {
                    let tij = if i < m { self.t[(i, j)] } else { 0.0 };
                    a[(i, j)] = Complex64::new(self.h[(i, j)], 0.0) - sigma * tij;
                }
            }
            let svd = a.svd(true, false);
            let u = svd.u.expect("u requested");
            let jmin = argmin(svd.singular_values.as_slice());
            let col = u.column(jmin);
            // real part of the best phase rotation of the complex null vector
            let utu: Complex64 = col.iter().map(|z| z * z).sum();
            let phase = if utu.norm() > 0.0 { (utu.conj() / utu.norm()).sqrt() } else { Complex64::new(1.0, 0.0) };
            DVector::from_iterator(m + 1, col.iter().map(|z| (z * phase).re))
        };
        if c[m] < 0.0 {
            c.neg_mut();
        }
        let nrm = c.norm();
        c / nrm
    }

    fn continuation_vector(&self, c: &DVector<f64>) -> Vec<f64> {
        (&self.v * c).iter().copied().collect()
    }

    /// Pre-chase data of a real/imaginary shift step.
    pub fn raw_real_step(&self, f: &ShiftedFactorization) -> Result<RawStep> {
        if !f.class().is_real_operator() {
            return Err(Error::InvalidParameter(format!("shift {} is not real or imaginary", f.zeta())));
        }
        self.check_operator(f, 1)?;
        let m = self.m();
        let cont = self.continuation(f);
        let (w, _) = f.apply_k_real(&self.continuation_vector(&cont))?;
        let mut w = DVector::from_vec(w);
        let scale = w.norm();
        let (t, beta) = self.orth(f, &self.v, &mut w)?;
        if !(beta > BREAKDOWN_TOL * scale) {
            return Err(Error::Breakdown { residual: beta, scale });
        }
        let xi2 = xi_squared(f).re;
        let mut vhat = self.v.clone().resize_horizontally(m + 2, 0.0);
        vhat.set_column(m + 1, &(w / beta));

        let mut that = self.t.clone().resize(m + 2, m + 1, 0.0);
        let mut hhat = self.h.clone().resize(m + 2, m + 1, 0.0);
        let tcol = {
            let mut c = embed(&t, m + 2);
            c[m + 1] = beta;
            c
        };
        let mut hcol = &tcol * xi2;
        hcol.rows_mut(0, m + 1).add_assign(&cont);
        that.set_column(m, &tcol);
        hhat.set_column(m, &hcol);
        Ok(RawStep { vhat, that, hhat, residual: beta, continuation: cont })
    }

    /// Pre-chase data of a complex shift step.
    pub fn raw_complex_step(&self, f: &ShiftedFactorization) -> Result<RawStep> {
        if f.class() != ShiftClass::Complex {
            return Err(Error::InvalidParameter(format!("shift {} is not genuinely complex", f.zeta())));
        }
        self.check_operator(f, 2)?;
        let m = self.m();
        let cont = self.continuation(f);
        let w = f.apply_k(&self.continuation_vector(&cont))?;
        let scale = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let mut wr = DVector::from_iterator(w.len(), w.iter().map(|z| z.re));
        let mut wi = DVector::from_iterator(w.len(), w.iter().map(|z| z.im));

        let (t1, beta1) = self.orth(f, &self.v, &mut wr)?;
        if !(beta1 > BREAKDOWN_TOL * scale) {
            return Err(Error::Breakdown { residual: beta1, scale });
        }
        let mut vhat = self.v.clone().resize_horizontally(m + 3, 0.0);
        vhat.set_column(m + 1, &(wr / beta1));
        let (t2, beta2) = self.orth(f, &vhat.columns(0, m + 2).into_owned(), &mut wi)?;
        if !(beta2 > BREAKDOWN_TOL * scale) {
            return Err(Error::Breakdown { residual: beta2, scale });
        }
        vhat.set_column(m + 2, &(wi / beta2));

        let xi2 = xi_squared(f);
        let (rho, eta) = (xi2.re, xi2.im);
        let mut c1 = embed(&t1, m + 3);
        c1[m + 1] = beta1;
        let mut c2 = embed(&t2, m + 3);
        c2[m + 2] = beta2;
        let mut h1 = &c1 * rho - &c2 * eta;
        h1.rows_mut(0, m + 1).add_assign(&cont);
        let h2 = &c1 * eta + &c2 * rho;

        let mut that = self.t.clone().resize(m + 3, m + 2, 0.0);
        let mut hhat = self.h.clone().resize(m + 3, m + 2, 0.0);
        that.set_column(m, &c1);
        that.set_column(m + 1, &c2);
        hhat.set_column(m, &h1);
        hhat.set_column(m + 1, &h2);
        Ok(RawStep { vhat, that, hhat, residual: beta2, continuation: cont })
    }

    /// Installs chased matrices and rotates the basis: `V <- Vhat Q^T`.
    fn install(&mut self, vhat: DMatrix<f64>, ch: ChaseResult, square: bool) {
        let ChaseResult { q, t, h, first_row, .. } = ch;
        let cols = vhat.ncols();
        let mut v = vhat;
        if first_row < cols {
            let k = cols - first_row;
            let block = v.columns(first_row, k) * q.view((first_row, first_row), (k, k)).transpose();
            v.columns_mut(first_row, k).copy_from(&block);
        }
        let mk = t.ncols();
        if square {
            self.t = t;
            self.h = h;
        } else {
            debug_assert!(t.row(mk).iter().all(|&x| x == 0.0));
            self.t = t.rows(0, mk).into_owned();
            self.h = h;
        }
        self.v = v;
    }

    /// Expansion by one column with a real or purely imaginary shift.
    /// On breakdown the decomposition is left unchanged.
    pub fn expand_real_shift(&mut self, f: &ShiftedFactorization) -> Result<StepReport> {
        let raw = self.raw_real_step(f)?;
        let ch = bulge_chase_real(&raw.that, &raw.hhat)?;
        let rotations = ch.rotations;
        self.install(raw.vhat, ch, false);
        self.shifts.push(f.zeta());
        Ok(StepReport {
            shift: f.zeta(),
            class: f.class(),
            added: 1,
            residual: raw.residual,
            rotations,
            breakdown: false,
        })
    }

    /// Expansion by two columns with a genuinely complex shift.
    /// On breakdown of either part the decomposition is left unchanged.
    pub fn expand_complex_shift(&mut self, f: &ShiftedFactorization) -> Result<StepReport> {
        let raw = self.raw_complex_step(f)?;
        let ch = bulge_chase_complex(&raw.that, &raw.hhat)?;
        let rotations = ch.rotations;
        self.install(raw.vhat, ch, false);
        self.shifts.push(f.zeta());
        Ok(StepReport {
            shift: f.zeta(),
            class: f.class(),
            added: 2,
            residual: raw.residual,
            rotations,
            breakdown: false,
        })
    }

    /// Completes a step that broke down. The new direction(s) of `K v_{m+1}`
    /// that do exist are added, closing an invariant subspace
    /// (`Hbar` gets a zero last row), and a fresh orthonormal vector from
    /// the range of `K` becomes `v_{m+1}`.
    pub fn absorb_breakdown(&mut self, f: &ShiftedFactorization) -> Result<StepReport> {
        let m = self.m();
        let xi2 = xi_squared(f);
        let mut report = StepReport {
            shift: f.zeta(),
            class: f.class(),
            added: 0,
            residual: 0.0,
            rotations: 0,
            breakdown: true,
        };

        if f.class().is_real_operator() {
            self.check_operator(f, 1)?;
            let cont = self.continuation(f);
            let (w, _) = f.apply_k_real(&self.continuation_vector(&cont))?;
            let mut w = DVector::from_vec(w);
            let (t, beta) = self.orth(f, &self.v, &mut w)?;
            let mut hcol = &t * xi2.re;
            hcol.rows_mut(0, m + 1).add_assign(&cont);
            self.t = self.t.clone().resize(m + 1, m + 1, 0.0);
            self.h = self.h.clone().resize(m + 1, m + 1, 0.0);
            self.t.set_column(m, &t);
            self.h.set_column(m, &hcol);
            report.added = 1;
            report.residual = beta;
        } else {
            self.check_operator(f, 2)?;
            let cont = self.continuation(f);
            let w = f.apply_k(&self.continuation_vector(&cont))?;
            let scale = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
            let mut wr = DVector::from_iterator(w.len(), w.iter().map(|z| z.re));
            let mut wi = DVector::from_iterator(w.len(), w.iter().map(|z| z.im));
            let (rho, eta) = (xi2.re, xi2.im);
            let (t1, beta1) = self.orth(f, &self.v, &mut wr)?;
            let real_dependent = !(beta1 > BREAKDOWN_TOL * scale);
            let mut basis = self.v.clone();
            let mut t1 = t1;
            if !real_dependent {
                basis = basis.resize_horizontally(m + 2, 0.0);
                basis.set_column(m + 1, &(wr / beta1));
                t1 = embed(&t1, m + 2);
                t1[m + 1] = beta1;
            }
            let (t2, beta2) = self.orth(f, &basis, &mut wi)?;
            let imag_dependent = !(beta2 > BREAKDOWN_TOL * scale);
            report.residual = beta2;

            if real_dependent && imag_dependent {
                // Only the real relation is needed: t2 lies in span(V).
                let mut hcol = &t1 * rho - &t2 * eta;
                hcol.rows_mut(0, m + 1).add_assign(&cont);
                self.t = self.t.clone().resize(m + 1, m + 1, 0.0);
                self.h = self.h.clone().resize(m + 1, m + 1, 0.0);
                self.t.set_column(m, &t1);
                self.h.set_column(m, &hcol);
                report.added = 1;
            } else {
                let (c1, c2, vhat) = if real_dependent {
                    let mut vhat = basis.resize_horizontally(m + 2, 0.0);
                    vhat.set_column(m + 1, &(wi / beta2));
                    let mut c2 = embed(&t2, m + 2);
                    c2[m + 1] = beta2;
                    (embed(&t1, m + 2), c2, vhat)
                } else {
                    (t1, t2, basis)
                };
                let mut h1 = &c1 * rho - &c2 * eta;
                h1.rows_mut(0, m + 1).add_assign(&cont);
                let h2 = &c1 * eta + &c2 * rho;
                let mut that = self.t.clone().resize(m + 2, m + 2, 0.0);
                let mut hhat = self.h.clone().resize(m + 2, m + 2, 0.0);
                that.set_column(m, &c1);
                that.set_column(m + 1, &c2);
                hhat.set_column(m, &h1);
                hhat.set_column(m + 1, &h2);
                let mut ch = Chaser::new(that, hhat);
                if !real_dependent {
                    ch.real_from(m);
                }
                let res = ch.finish();
                report.rotations = res.rotations;
                self.install(vhat, res, true);
                report.added = 2;
            }
        }

        // Fresh direction: K applied to a random vector, orthogonalized.
        let fresh = self.fresh_vector(f)?;
        let k = self.t.nrows();
        self.v = self.v.clone().resize_horizontally(k + 1, 0.0);
        self.v.set_column(k, &fresh);
        self.h = self.h.clone().resize(k + 1, k, 0.0);
        self.shifts.push(f.zeta());
        Ok(report)
    }

    fn fresh_vector(&mut self, f: &ShiftedFactorization) -> Result<DVector<f64>> {
        let dim = self.dim();
        if self.v.ncols() >= dim {
            return Err(Error::InvalidParameter("basis already spans the whole space".into()));
        }
        // the isotropic complement may be exhausted; then any direction will do
        for attempt in 0..12 {
            let r: Vec<f64> = (0..dim).map(|_| StandardNormal.sample(&mut self.rng)).collect();
            let cand = if attempt % 4 < 2 {
                f.apply_k(&r)?.into_iter().map(|z| z.re).collect()
            } else {
                r
            };
            let mut w = DVector::from_vec(cand);
            let scale = w.norm();
            let lin = (self.isotropic && attempt < 4).then(|| f.linearization().as_ref());
            let (_, beta) = orthogonalize_structured(&self.v, &mut w, lin)?;
            if beta > 1e-8 * scale {
                return Ok(w / beta);
            }
        }
        Err(Error::Breakdown { residual: 0.0, scale: 1.0 })
    }
}

/// Expands until `m >= target_m`; step `j` uses `plan[min(j, len-1)]`.
/// Factorizations come from (and are stored in) `cache`.
pub fn expand(
    dec: &mut RationalKrylovDecomposition,
    lin: &Arc<EvenLinearization>,
    plan: &[Complex64],
    target_m: usize,
    cache: &mut FactorCache,
) -> Result<Vec<StepReport>> {
    if plan.is_empty() {
        return Err(Error::InvalidParameter("empty shift plan".into()));
    }
    if target_m <= dec.m() {
        return Err(Error::InvalidParameter(format!(
            "target size {target_m} does not exceed current size {}",
            dec.m()
        )));
    }
    let mut reports = Vec::new();
    let mut j = 0;
    while dec.m() < target_m {
        let zeta = plan[j.min(plan.len() - 1)];
        let f = cache.get(lin, zeta)?;
        reports.push(dec.step(&f)?);
        j += 1;
    }
    Ok(reports)
}
