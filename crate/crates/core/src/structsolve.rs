//! Solves with `L(+/-zeta)` through a single `n x n` factorization of
//! `P(zeta)`, and the spectral transform
//! `K(zeta) = L(zeta)^{-T} X L(zeta)^{-1} X`.
//!
//! For `L(s) y = x` the border rows fix `y1` up to the kernel of
//! `L_{ell-1}(s) (x) I`, i.e. `y1 = yhat + Lambda(s)^T (x) r`; projecting the
//! top rows with `Lambda(-s) (x) I` eliminates `y2` and leaves
//! `P(s) r = (Lambda(-s) (x) I)(x1 - M(s) yhat)`. `y2` then follows from the
//! top rows by forward substitution. `L(zeta)^T = L(-zeta)` and
//! `P(-zeta) = P(zeta)^T`, so one LU of `P(zeta)` serves both signs.

use std::collections::HashMap;
use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::densekernels::LuFactors;
use crate::error::{Error, Result};
use crate::linearize::EvenLinearization;
use crate::scalar::Scalar;

/// Relative size below which a shift component counts as zero.
pub const SHIFT_CLASS_TOL: f64 = 8.0 * f64::EPSILON;
/// Relative imaginary residue tolerated when `K(zeta) v` should be real.
pub const REAL_TRUNCATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ShiftClass {
    Real,
    Imaginary,
    Complex,
}

impl ShiftClass {
    pub fn classify(z: Complex64) -> ShiftClass {
        let mag = z.norm();
        if z.im.abs() <= SHIFT_CLASS_TOL * mag {
            ShiftClass::Real
        } else if z.re.abs() <= SHIFT_CLASS_TOL * mag {
            ShiftClass::Imaginary
        } else {
            ShiftClass::Complex
        }
    }

    /// Whether `K(zeta)` is a real operator.
    pub fn is_real_operator(self) -> bool {
        !matches!(self, ShiftClass::Complex)
    }
}

/// Snaps negligible real or imaginary parts to exact zeros.
pub fn normalize_shift(z: Complex64) -> Complex64 {
    match ShiftClass::classify(z) {
        ShiftClass::Real => Complex64::new(z.re, 0.0),
        ShiftClass::Imaginary => Complex64::new(0.0, z.im),
        ShiftClass::Complex => z,
    }
}

#[derive(Debug, Clone)]
enum Factors {
    Real(LuFactors<f64>),
    Complex(LuFactors<Complex64>),
}

/// A shift with a reusable LU factorization of `P(zeta)`.
#[derive(Debug, Clone)]
pub struct ShiftedFactorization {
    zeta: Complex64,
    class: ShiftClass,
    factors: Factors,
    rcond: f64,
    lin: Arc<EvenLinearization>,
}

impl ShiftedFactorization {
    pub fn new(lin: Arc<EvenLinearization>, zeta: Complex64) -> Result<Self> {
        let zeta = normalize_shift(zeta);
        if !(zeta.re.is_finite() && zeta.im.is_finite()) {
            return Err(Error::InvalidParameter(format!("non-finite shift {zeta}")));
        }
        let class = ShiftClass::classify(zeta);
        let p = lin.poly();
        let (factors, pivot, threshold, rcond) = if class == ShiftClass::Real {
            let f = LuFactors::factor(p.evaluate_real(zeta.re));
            let (pv, th) = (f.min_pivot(), f.breakdown_threshold());
            let rc = 1.0 / (f.norm_inf() * f.inverse_norm_estimate());
            (Factors::Real(f), pv, th, rc)
        } else {
            let f = LuFactors::factor(p.evaluate(zeta));
            let (pv, th) = (f.min_pivot(), f.breakdown_threshold());
            let rc = 1.0 / (f.norm_inf() * f.inverse_norm_estimate());
            (Factors::Complex(f), pv, th, rc)
        };
        if pivot <= threshold {
            return Err(Error::ShiftOnSpectrum { zeta, pivot, threshold });
        }
        Ok(ShiftedFactorization { zeta, class, factors, rcond, lin })
    }

    pub fn zeta(&self) -> Complex64 {
        self.zeta
    }

    pub fn class(&self) -> ShiftClass {
        self.class
    }

    /// Estimated reciprocal condition number of `P(zeta)`; small means
    /// the shift is close to an eigenvalue.
    pub fn rcond(&self) -> f64 {
        self.rcond
    }

    pub fn linearization(&self) -> &Arc<EvenLinearization> {
        &self.lin
    }

    fn check_len(&self, len: usize) -> Result<()> {
        let dim = self.lin.dim();
        if len == dim {
            Ok(())
        } else {
            Err(Error::Dimension(format!("solve: vector length {len}, expected {dim}")))
        }
    }

    /// `y` with `L(s) y = x`, `s = zeta` or (transposed) `s = -zeta`.
    pub fn solve_l(&self, x: &[Complex64], transposed: bool) -> Result<Vec<Complex64>> {
        self.check_len(x.len())?;
        Ok(match &self.factors {
            Factors::Real(lu) => {
                let s = if transposed { -self.zeta.re } else { self.zeta.re };
                let re: Vec<f64> = x.iter().map(|z| z.re).collect();
                let im: Vec<f64> = x.iter().map(|z| z.im).collect();
                let solve = |b: &mut [f64]| lu.solve_in_place(b, transposed);
                let yr = solve_chain(&self.lin, s, &re, solve);
                let yi = solve_chain(&self.lin, s, &im, solve);
                yr.into_iter().zip(yi).map(|(a, b)| Complex64::new(a, b)).collect()
            }
            Factors::Complex(lu) => {
                let s = if transposed { -self.zeta } else { self.zeta };
                solve_chain(&self.lin, s, x, |b: &mut [Complex64]| lu.solve_in_place(b, transposed))
            }
        })
    }

    /// Real-arithmetic solve; only for real shifts.
    pub fn solve_l_real(&self, x: &[f64], transposed: bool) -> Result<Vec<f64>> {
        self.check_len(x.len())?;
        match &self.factors {
            Factors::Real(lu) => {
                let s = if transposed { -self.zeta.re } else { self.zeta.re };
                Ok(solve_chain(&self.lin, s, x, |b: &mut [f64]| lu.solve_in_place(b, transposed)))
            }
            Factors::Complex(_) => Err(Error::InvalidParameter(format!(
                "real solve requested for non-real shift {}",
                self.zeta
            ))),
        }
    }

    /// `K(zeta) v`.
    pub fn apply_k(&self, v: &[f64]) -> Result<Vec<Complex64>> {
        self.check_len(v.len())?;
        if let Factors::Real(_) = self.factors {
            return Ok(self.apply_k_real_path(v).into_iter().map(|x| Complex64::new(x, 0.0)).collect());
        }
        let xv: Vec<Complex64> = self.lin.apply_x(v)?.into_iter().map(|x| Complex64::new(x, 0.0)).collect();
        let y = self.solve_l(&xv, false)?;
        let xy = self.lin.apply_x(&y)?;
        self.solve_l(&xy, true)
    }

    fn apply_k_real_path(&self, v: &[f64]) -> Vec<f64> {
        let lin = &self.lin;
        let Factors::Real(lu) = &self.factors else { unreachable!() };
        let s = self.zeta.re;
        let xv = lin.apply_x(v).expect("length checked");
        let y = solve_chain(lin, s, &xv, |b: &mut [f64]| lu.solve_in_place(b, false));
        let xy = lin.apply_x(&y).expect("length checked");
        solve_chain(lin, -s, &xy, |b: &mut [f64]| lu.solve_in_place(b, true))
    }

    /// `K(zeta) v` as a real vector, for real or purely imaginary shifts.
    /// Also returns the discarded relative imaginary part.
    pub fn apply_k_real(&self, v: &[f64]) -> Result<(Vec<f64>, f64)> {
        self.check_len(v.len())?;
        match self.class {
            ShiftClass::Real => Ok((self.apply_k_real_path(v), 0.0)),
            ShiftClass::Imaginary => {
                let w = self.apply_k(v)?;
                let norm = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let im = w.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
                let rel = if norm > 0.0 { im / norm } else { 0.0 };
                Ok((w.into_iter().map(|z| z.re).collect(), rel))
            }
            ShiftClass::Complex => Err(Error::InvalidParameter(format!(
                "K({}) is not a real operator",
                self.zeta
            ))),
        }
    }

    /// Dense `P(zeta)` (test support).
    pub fn p_matrix(&self) -> DMatrix<Complex64> {
        self.lin.poly().evaluate(self.zeta)
    }
}

/// The recurrence chain for `L(s) y = x`; `psolve` solves with `P(s)` in place.
fn solve_chain<T: Scalar>(lin: &EvenLinearization, s: T, x: &[T], psolve: impl Fn(&mut [T])) -> Vec<T> {
    let (n, ell) = (lin.n(), lin.ell());
    let top = ell * n;
    let (x1, x2) = x.split_at(top);

    // Particular solution of the border rows: yhat_k = x2_k + s yhat_{k+1}.
    let mut y1 = vec![T::zero(); top];
    for k in (0..ell - 1).rev() {
        for i in 0..n {
            y1[k * n + i] = x2[k * n + i] + s * y1[(k + 1) * n + i];
        }
    }

    let mut my = vec![T::zero(); top];
    lin.apply_mp_into(s, &y1, &mut my);
    let resid: Vec<T> = x1.iter().zip(&my).map(|(&a, &b)| a - b).collect();
    let mut r = lin.project(-s, &resid);
    psolve(&mut r);

    let lifted = lin.lift(s, &r);
    for (y, l) in y1.iter_mut().zip(lifted) {
        *y += l;
    }

    lin.apply_mp_into(s, &y1, &mut my);
    let w: Vec<T> = x1.iter().zip(&my).map(|(&a, &b)| a - b).collect();
    let mut y2 = vec![T::zero(); (ell - 1) * n];
    for k in 0..ell - 1 {
        for i in 0..n {
            let prev = if k == 0 { T::zero() } else { y2[(k - 1) * n + i] };
            y2[k * n + i] = w[k * n + i] - s * prev;
        }
    }

    #[cfg(debug_assertions)]
    if ell > 1 {
        let last = (ell - 1) * n;
        let norm = |v: &[T]| v.iter().map(|z| z.modulus_squared()).sum::<f64>().sqrt();
        let defect: Vec<T> = (0..n).map(|i| w[last + i] - s * y2[(ell - 2) * n + i]).collect();
        let scale = norm(x1) + norm(&my) + s.modulus() * norm(&y2) + f64::MIN_POSITIVE;
        debug_assert!(
            norm(&defect) <= 1e-8 * scale,
            "inconsistent last block row: {} vs scale {}",
            norm(&defect),
            scale
        );
    }

    y1.extend(y2);
    y1
}

/// Shift-keyed store of factorizations; counts every LU performed.
#[derive(Debug, Default)]
pub struct FactorCache {
    map: HashMap<(u64, u64), Arc<ShiftedFactorization>>,
    factorizations: usize,
}

impl FactorCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn get(&mut self, lin: &Arc<EvenLinearization>, zeta: Complex64) -> Result<Arc<ShiftedFactorization>> {
        let zeta = normalize_shift(zeta);
        let key = (zeta.re.to_bits(), zeta.im.to_bits());
        if let Some(f) = self.map.get(&key) {
            return Ok(Arc::clone(f));
        }
        self.factorizations += 1;
        let f = Arc::new(ShiftedFactorization::new(Arc::clone(lin), zeta)?);
        self.map.insert(key, Arc::clone(&f));
        Ok(f)
    }

    pub fn factorizations(&self) -> usize {
        self.factorizations
    }

    /// Drops cached factors (the counter is kept).
    pub fn clear(&mut self) {
        self.map.clear();
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densekernels::dense_polyeig_oracle;
    use crate::matpoly::{generate_butterfly, random_t_even, ButterflyConstants, MatrixPolynomial};
    use nalgebra::DVector;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn lin_of(p: &MatrixPolynomial) -> Arc<EvenLinearization> {
        Arc::new(EvenLinearization::new(p).unwrap())
    }

    fn dense_pencil(lin: &EvenLinearization, s: Complex64) -> DMatrix<Complex64> {
        let (x, y) = lin.materialize(2000).unwrap();
        x.map(|v| c(v, 0.0)) * s + y.map(|v| c(v, 0.0))
    }

    fn rand_cvec(len: usize, rng: &mut ChaCha8Rng) -> Vec<Complex64> {
        (0..len).map(|_| c(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))).collect()
    }

    #[test]
    fn classification() {
        assert_eq!(ShiftClass::classify(c(0.7, 0.0)), ShiftClass::Real);
        assert_eq!(ShiftClass::classify(c(0.0, 2.0)), ShiftClass::Imaginary);
        assert_eq!(ShiftClass::classify(c(1e-17, 2.0)), ShiftClass::Imaginary);
        assert_eq!(ShiftClass::classify(c(0.5, 2.0)), ShiftClass::Complex);
        assert_eq!(normalize_shift(c(1e-17, 2.0)), c(0.0, 2.0));
    }

    #[test]
    fn degree_one_solve_is_p_inverse() {
        let n = 3;
        let p = MatrixPolynomial::new(vec![DMatrix::zeros(n, n), DMatrix::identity(n, n)]);
        // z I + 0 is not T-even (odd coefficient must be skew); use a skew P1.
        assert!(EvenLinearization::new(&p.unwrap()).is_err());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_t_even(4, 1, &mut rng);
        let f = ShiftedFactorization::new(lin_of(&p), c(2.0, 0.0)).unwrap();
        let x = rand_cvec(4, &mut rng);
        let y = f.solve_l(&x, false).unwrap();
        let r = p.evaluate(c(2.0, 0.0)) * DVector::from_vec(y) - DVector::from_vec(x.clone());
        assert!(r.norm() < 1e-13);
        let yt = f.solve_l(&x, true).unwrap();
        let r = p.evaluate(c(-2.0, 0.0)) * DVector::from_vec(yt) - DVector::from_vec(x);
        assert!(r.norm() < 1e-13);
    }

    #[test]
    fn butterfly_initial_shift_factorizes() {
        let p = generate_butterfly(4, &ButterflyConstants::default()).unwrap();
        let f = ShiftedFactorization::new(lin_of(&p), c(0.5, 2.0)).unwrap();
        assert_eq!(f.class(), ShiftClass::Complex);
    }

    #[test]
    fn shift_on_eigenvalue_is_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        let p = random_t_even(3, 3, &mut rng);
        let mu = dense_polyeig_oracle(&p, 600).unwrap().finite[0];
        let err = ShiftedFactorization::new(lin_of(&p), mu).unwrap_err();
        assert!(matches!(err, Error::ShiftOnSpectrum { .. }), "{err}");
    }

    #[test]
    fn solves_match_dense_pencil() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let p = random_t_even(4, 5, &mut rng);
        let lin = lin_of(&p);
        for zeta in [c(0.7, 0.0), c(0.0, 1.3), c(0.4, -0.9)] {
            let f = ShiftedFactorization::new(Arc::clone(&lin), zeta).unwrap();
            let x = DVector::from_vec(rand_cvec(lin.dim(), &mut rng));
            for (transposed, s) in [(false, zeta), (true, -zeta)] {
                let y = DVector::from_vec(f.solve_l(x.as_slice(), transposed).unwrap());
                let res = dense_pencil(&lin, s) * &y - &x;
                assert!(res.norm() <= 1e-12 * x.norm(), "{zeta} {transposed}: {}", res.norm());
            }
            // transposed solve equals a dense solve with L(zeta)^T
            let lt = dense_pencil(&lin, zeta).transpose();
            let yd = lt.lu().solve(&x).unwrap();
            let y = DVector::from_vec(f.solve_l(x.as_slice(), true).unwrap());
            assert!((y - &yd).norm() <= 1e-11 * yd.norm());
        }
    }

    #[test]
    fn real_solve_matches_complex_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let p = random_t_even(3, 4, &mut rng);
        let f = ShiftedFactorization::new(lin_of(&p), c(0.3, 0.0)).unwrap();
        let x: Vec<f64> = (0..f.linearization().dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
        let yr = f.solve_l_real(&x, true).unwrap();
        let xc: Vec<Complex64> = x.iter().map(|&v| c(v, 0.0)).collect();
        let yc = f.solve_l(&xc, true).unwrap();
        for (a, b) in yr.iter().zip(&yc) {
            assert_eq!(*a, b.re);
            assert_eq!(b.im, 0.0);
        }
        let g = ShiftedFactorization::new(lin_of(&p), c(0.3, 0.2)).unwrap();
        assert!(g.solve_l_real(&x, false).is_err());
    }

    fn dense_k(lin: &EvenLinearization, zeta: Complex64) -> DMatrix<Complex64> {
        let (x, _) = lin.materialize(2000).unwrap();
        let xc = x.map(|v| c(v, 0.0));
        let l = dense_pencil(lin, zeta);
        let linv = l.clone().try_inverse().unwrap();
        let ltinv = l.transpose().try_inverse().unwrap();
        ltinv * &xc * linv * &xc
    }

    #[test]
    fn k_matches_dense_construction() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_t_even(4, 5, &mut rng);
        let lin = lin_of(&p);
        for zeta in [c(0.6, 0.0), c(0.0, 0.8), c(0.5, 2.0)] {
            let f = ShiftedFactorization::new(Arc::clone(&lin), zeta).unwrap();
            let k = dense_k(&lin, zeta);
            let v: Vec<f64> = (0..lin.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
            let expect = &k * DVector::from_iterator(v.len(), v.iter().map(|&a| c(a, 0.0)));
            let got = DVector::from_vec(f.apply_k(&v).unwrap());
            assert!((got - &expect).norm() <= 1e-11 * expect.norm(), "{zeta}");
            if f.class().is_real_operator() {
                let (kr, rel) = f.apply_k_real(&v).unwrap();
                assert!(rel <= REAL_TRUNCATION_TOL, "{rel}");
                let d = DVector::from_vec(kr) - expect.map(|z| z.re);
                assert!(d.norm() <= 1e-11 * expect.norm());
            } else {
                assert!(f.apply_k_real(&v).is_err());
            }
        }
    }

    #[test]
    fn k_eigen_relation() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_t_even(3, 3, &mut rng);
        let lin = lin_of(&p);
        let (x, y) = lin.materialize(2000).unwrap();
        let zeta = c(0.35, 0.0);
        let f = ShiftedFactorization::new(Arc::clone(&lin), zeta).unwrap();
        let oracle = dense_polyeig_oracle(&p, 600).unwrap();
        for &mu in oracle.finite.iter().filter(|m| m.im == 0.0).take(2) {
            // real eigenvalue: null vector of mu X + Y
            let l = x.clone() * mu.re + &y;
            let svd = l.svd(false, true);
            let idx = svd.singular_values.imin();
            let v: Vec<f64> = svd.v_t.unwrap().row(idx).iter().copied().collect();
            let kv = f.apply_k(&v).unwrap();
            let theta = 1.0 / (mu * mu - zeta * zeta);
            let err: f64 = kv.iter().zip(&v).map(|(a, &b)| (a - theta * b).norm_sqr()).sum::<f64>().sqrt();
            assert!(err <= 1e-10 * theta.norm(), "{mu}: {err}");
        }
    }

    #[test]
    fn k_vanishes_on_null_x() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_t_even(3, 4, &mut rng);
        let f = ShiftedFactorization::new(lin_of(&p), c(0.5, 2.0)).unwrap();
        let mut v = vec![0.0; f.linearization().dim()];
        v[0] = 1.0;
        v[2] = -0.5;
        assert!(f.apply_k(&v).unwrap().iter().all(|z| *z == c(0.0, 0.0)));
    }

    #[test]
    fn cache_counts_distinct_shifts() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_t_even(3, 3, &mut rng);
        let lin = lin_of(&p);
        let mut cache = FactorCache::new();
        for z in [c(0.7, 0.0), c(0.7, 0.0), c(0.0, 2.0), c(0.7, 0.0), c(0.5, 2.0), c(0.0, 2.0)] {
            cache.get(&lin, z).unwrap();
        }
        assert_eq!(cache.factorizations(), 3);
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(64))]

        #[test]
        fn solve_residuals_small(seed in any::<u64>(), n in 2usize..6, deg in 1usize..8, kind in 0u8..3) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let p = random_t_even(n, deg, &mut rng);
            let lin = lin_of(&p);
            let (re, im) = (rng.random_range(0.2..1.5), rng.random_range(0.2..1.5));
            let zeta = match kind { 0 => c(re, 0.0), 1 => c(0.0, im), _ => c(re, im) };
            let f = match ShiftedFactorization::new(Arc::clone(&lin), zeta) {
                Ok(f) => f,
                Err(Error::ShiftOnSpectrum { .. }) => return Ok(()),
                Err(e) => panic!("{e}"),
            };
            let x = DVector::from_vec(rand_cvec(lin.dim(), &mut rng));
            for (t, s) in [(false, zeta), (true, -zeta)] {
                let y = DVector::from_vec(f.solve_l(x.as_slice(), t).unwrap());
                let res = DVector::from_vec(lin.apply_pencil(s, y.as_slice()).unwrap()) - &x;
                prop_assert!(res.norm() <= 1e-11 * x.norm(),
                    "res {} x {} y {}", res.norm(), x.norm(), y.norm());
            }
            if f.class().is_real_operator() {
                let v: Vec<f64> = (0..lin.dim()).map(|_| rng.random_range(-1.0..1.0)).collect();
                let w = f.apply_k(&v).unwrap();
                let nw = w.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
                let ni = w.iter().map(|z| z.im * z.im).sum::<f64>().sqrt();
                prop_assert!(ni <= REAL_TRUNCATION_TOL * nw);
            }
        }
    }
}
