//! Shared fixtures for the benchmarks.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teven_core::matpoly::ButterflyConstants;
use teven_core::{generate_butterfly, EvenLinearization, MatrixPolynomial, RationalKrylovDecomposition};

pub fn butterfly(m: usize) -> MatrixPolynomial {
    generate_butterfly(m, &ButterflyConstants::default()).expect("valid size")
}

pub fn linearization(p: &MatrixPolynomial) -> Arc<EvenLinearization> {
    Arc::new(EvenLinearization::new(p).expect("T-even input"))
}

pub fn unit_vector(dim: usize, seed: u64) -> DVector<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)).normalize()
}

pub fn fresh_decomposition(dim: usize, seed: u64) -> RationalKrylovDecomposition {
    RationalKrylovDecomposition::new(&unit_vector(dim, seed)).expect("unit start")
}

/// `(That, Hhat)` shaped like the input of the real-shift chase: `T`
/// triangular plus a full last column, `H` Hessenberg, both `(m+2) x (m+1)`.
pub fn chase_input(m: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut t = DMatrix::zeros(m + 2, m + 1);
    let mut h = DMatrix::zeros(m + 2, m + 1);
    for j in 0..=m {
        for i in 0..=(j + 1).min(m + 1) {
            h[(i, j)] = rng.random_range(-1.0..1.0);
            if i <= j || j == m {
                t[(i, j)] = rng.random_range(-1.0..1.0);
            }
        }
    }
    (t, h)
}

/// Random dense pencil `(T, H)` of order `k`.
pub fn pencil(k: usize, seed: u64) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let t = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    let h = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    (t, h)
}

pub const SHIFTS: [(&str, Complex64); 3] = [
    ("real", Complex64::new(0.7, 0.0)),
    ("imaginary", Complex64::new(0.0, 1.3)),
    ("complex", Complex64::new(0.5, 2.0)),
];
