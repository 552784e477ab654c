#![allow(dead_code)]

use std::sync::Arc;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use teven_core::densekernels::{nullspace, qz_eigenvalues, PolyEigenvalues};
use teven_core::ratarnoldi::ChaseResult;
use teven_core::{random_t_even, EvenLinearization, MatrixPolynomial, RationalKrylovDecomposition};

pub fn c(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

/// Odd-degree instance whose leading coefficient is a well conditioned
/// skew matrix (`n` even), so `X` is invertible.
pub fn odd_invertible(n: usize, deg: usize, seed: u64) -> MatrixPolynomial {
    assert!(n.is_multiple_of(2) && !deg.is_multiple_of(2));
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = random_t_even(n, deg, &mut rng).coeffs().to_vec();
    let mut lead = DMatrix::zeros(n, n);
    for i in (0..n).step_by(2) {
        lead[(i, i + 1)] = 2.0;
        lead[(i + 1, i)] = -2.0;
    }
    coeffs[deg] = &coeffs[deg] * 0.2 + lead;
    MatrixPolynomial::new(coeffs).unwrap()
}

/// Degree-3 instance whose leading coefficient has a kernel of dimension 2.
pub fn deg3_nullity2(n: usize, seed: u64) -> MatrixPolynomial {
    assert!(n.is_multiple_of(2) && n >= 4);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut coeffs = random_t_even(n, 3, &mut rng).coeffs().to_vec();
    let mut lead = DMatrix::zeros(n, n);
    for i in (0..n - 2).step_by(2) {
        let w = 1.0 + rng.random_range(0.0..1.0);
        lead[(i, i + 1)] = w;
        lead[(i + 1, i)] = -w;
    }
    // hide the kernel behind an orthogonal change of basis
    let q = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0)).qr().q();
    coeffs[3] = q.transpose() * lead * &q;
    MatrixPolynomial::new(coeffs).unwrap()
}

/// Explicit `G^2 = (X^{-1} Y)^2`.
pub fn g_squared(lin: &EvenLinearization) -> DMatrix<f64> {
    let (x, y) = lin.materialize(4000).unwrap();
    let g = x.lu().solve(&y).expect("X invertible");
    &g * &g
}

/// Scale for the relation residual.
pub fn relation_scale(g2: &DMatrix<f64>, dec: &RationalKrylovDecomposition) -> f64 {
    g2.norm() * dec.t().norm() + dec.hbar().norm()
}

pub fn linearize(p: &MatrixPolynomial) -> Arc<EvenLinearization> {
    Arc::new(EvenLinearization::new(p).unwrap())
}

/// Greedy one-to-one matching; returns the worst relative distance.
pub fn worst_match(got: &[Complex64], reference: &[Complex64]) -> f64 {
    let mut used = vec![false; reference.len()];
    let mut worst: f64 = 0.0;
    for z in got {
        let best = reference
            .iter()
            .enumerate()
            .filter(|(i, _)| !used[*i])
            .map(|(i, w)| (i, (z - w).norm()))
            .min_by(|a, b| a.1.total_cmp(&b.1));
        match best {
            Some((i, d)) => {
                used[i] = true;
                worst = worst.max(d / z.norm().max(f64::MIN_POSITIVE));
            }
            None => return f64::INFINITY,
        }
    }
    worst
}

/// Worst relative distance from each value to the nearest oracle value.
pub fn worst_nearest(got: &[Complex64], oracle: &PolyEigenvalues) -> f64 {
    got.iter()
        .map(|z| {
            let (_, d) = oracle.nearest(*z).expect("oracle has finite values");
            d / z.norm().max(f64::MIN_POSITIVE)
        })
        .fold(0.0, f64::max)
}

/// Entry of `T`; diagonal entries stay away from zero so that eigenvalue
/// conditioning does not swamp the comparison.
pub fn t_entry(i: usize, j: usize, rng: &mut ChaCha8Rng) -> f64 {
    if i == j {
        let v: f64 = rng.random_range(0.5..1.5);
        if rng.random_bool(0.5) { v } else { -v }
    } else {
        rng.random_range(-1.0..1.0)
    }
}

pub fn structured_real(m: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut t = DMatrix::zeros(m + 2, m + 1);
    let mut h = DMatrix::zeros(m + 2, m + 1);
    for j in 0..=m {
        for i in 0..=(j + 1).min(m + 1) {
            h[(i, j)] = rng.random_range(-1.0..1.0);
            if i <= j || j == m {
                t[(i, j)] = t_entry(i, j, rng);
            }
        }
    }
    (t, h)
}

pub fn structured_complex(m: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>) {
    let mut t = DMatrix::zeros(m + 3, m + 2);
    let mut h = DMatrix::zeros(m + 3, m + 2);
    for j in 0..m + 2 {
        for i in 0..=(j + 1) {
            h[(i, j)] = rng.random_range(-1.0..1.0);
            if i <= j || j >= m {
                t[(i, j)] = t_entry(i, j, rng);
            }
        }
    }
    h[(m + 2, m)] = rng.random_range(-1.0..1.0);
    (t, h)
}

pub fn finite_eigs(t: &DMatrix<f64>, h: &DMatrix<f64>) -> Vec<Complex64> {
    qz_eigenvalues(t, h).unwrap().iter().filter_map(|e| e.value()).collect()
}

/// Checks one chase; returns (pattern exact, orthogonality defect and
/// equivalence backward error, eigenvalue drift).
pub fn check_chase(t: &DMatrix<f64>, h: &DMatrix<f64>, r: &ChaseResult) -> (bool, f64, f64) {
    let k = r.t.ncols();
    let mut pattern = r.t.row(k).iter().all(|&x| x == 0.0);
    for j in 0..k {
        pattern &= ((j + 1)..k).all(|i| r.t[(i, j)] == 0.0);
        pattern &= ((j + 2)..=k).all(|i| r.h[(i, j)] == 0.0);
    }
    let orth = (&r.q * r.q.transpose() - DMatrix::<f64>::identity(k + 1, k + 1))
        .amax()
        .max((&r.z * r.z.transpose() - DMatrix::<f64>::identity(k, k)).amax())
        .max((r.q.transpose() * &r.t * r.z.transpose() - t).amax())
        .max((r.q.transpose() * &r.h * r.z.transpose() - h).amax());
    // before: the pair restricted to the complement of That's left null vector
    let y = nullspace(&t.transpose(), 1e-12);
    let u = nullspace(&y.transpose(), 1e-12);
    let before = finite_eigs(&(u.transpose() * t), &(u.transpose() * h));
    let after = finite_eigs(&r.t.rows(0, k).into_owned(), &r.h.rows(0, k).into_owned());
    let drift = if before.len() == after.len() {
        after
            .iter()
            .map(|z| before.iter().map(|w| (z - w).norm()).fold(f64::INFINITY, f64::min) / z.norm().max(1.0))
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    (pattern, orth, drift)
}
