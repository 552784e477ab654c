//! Test-problem generators.

use nalgebra::DMatrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use super::MatrixPolynomial;
use crate::error::{Error, Result};

/// Weights `c[i] = [c_i1, c_i2]` of the Kronecker sums
/// `P_i = c_i1 (I (x) Pt_i) + c_i2 (Pt_i (x) I)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ButterflyConstants {
    pub c: [[f64; 2]; 5],
}

impl Default for ButterflyConstants {
    fn default() -> Self {
        ButterflyConstants {
            c: [[0.6, 1.3], [1.3, 0.1], [0.1, 1.2], [1.0, 1.0], [1.0, 1.0]],
        }
    }
}

/// Degree-4 T-even "butterfly" polynomial of order `m^2`.
pub fn generate_butterfly(m: usize, constants: &ButterflyConstants) -> Result<MatrixPolynomial> {
    if m < 2 {
        return Err(Error::InvalidParameter(format!("butterfly needs m >= 2, got {m}")));
    }
    if let Some(bad) = constants.c.iter().flatten().find(|&&x| !(x > 0.0 && x.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "butterfly constants must be positive, got {bad}"
        )));
    }
    let eye = DMatrix::<f64>::identity(m, m);
    let nil = DMatrix::from_fn(m, m, |i, j| if j == i + 1 { 1.0 } else { 0.0 });
    let sym = &nil + nil.transpose();
    let skew = &nil - nil.transpose();
    let pt0 = (&eye * 4.0 + &sym) * (1.0 / 6.0);
    let pt2 = -(&eye * 2.0 - &sym);
    let pt4 = -pt2.clone();
    let tildes = [pt0, skew.clone(), pt2, skew, pt4];
    let coeffs = tildes
        .iter()
        .zip(constants.c.iter())
        .map(|(pt, c)| eye.kronecker(pt) * c[0] + pt.kronecker(&eye) * c[1])
        .collect();
    MatrixPolynomial::new(coeffs)
}

/// Quadratic `z^2 M + z G + K` with `M`, `K` symmetric positive definite
/// and `G` skew, deterministic in `seed`.
pub fn generate_gyroscopic(n: usize, seed: u64) -> Result<MatrixPolynomial> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("gyroscopic needs n >= 2, got {n}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let scale = 1.0 / (n as f64).sqrt();
    let gauss = |rng: &mut ChaCha8Rng| {
        DMatrix::from_fn(n, n, |_, _| rng.sample::<f64, _>(StandardNormal) * scale)
    };
    let a = gauss(&mut rng);
    let b = gauss(&mut rng);
    let c = gauss(&mut rng);
    let eye = DMatrix::<f64>::identity(n, n);
    let m = a.transpose() * &a + &eye;
    let k = b.transpose() * &b + &eye;
    let g = &c - c.transpose();
    // Products A^T A are symmetric only up to summation order; enforce it.
    let m = (&m + m.transpose()) * 0.5;
    let k = (&k + k.transpose()) * 0.5;
    MatrixPolynomial::new(vec![k, g, m])
}

/// Random T-even polynomial with entries in `[-2, 2]`. Needs `n >= 2`
/// when `deg` is odd (a 1x1 skew coefficient vanishes).
pub fn random_t_even<R: Rng + ?Sized>(n: usize, deg: usize, rng: &mut R) -> MatrixPolynomial {
    let coeffs = (0..=deg)
        .map(|k| {
            let a = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
            if k % 2 == 0 {
                &a + a.transpose()
            } else {
                &a - a.transpose()
            }
        })
        .collect();
    MatrixPolynomial::new(coeffs).expect("random leading coefficient is nonzero")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densekernels::oracle::dense_polyeig_oracle;

    #[test]
    fn butterfly_shape_and_structure() {
        let p = generate_butterfly(10, &ButterflyConstants::default()).unwrap();
        assert_eq!(p.n(), 100);
        assert_eq!(p.degree(), 4);
        let p4 = generate_butterfly(4, &ButterflyConstants::default()).unwrap();
        assert!(p4.check_structure(0.0).is_t_even);
        for (k, c) in p4.coeffs().iter().enumerate() {
            if k % 2 == 0 {
                assert_eq!(c, &c.transpose());
            } else {
                assert_eq!(c, &-c.transpose());
            }
        }
    }

    #[test]
    fn butterfly_small_m_entries() {
        // m = 2: N = [[0,1],[0,0]]; P_1 = 1.3 (I (x) S) + 0.1 (S (x) I), S = N - N^T.
        let p = generate_butterfly(2, &ButterflyConstants::default()).unwrap();
        let p1 = p.coeff(1);
        assert_eq!(p1[(0, 1)], 1.3);
        assert_eq!(p1[(0, 2)], 0.1);
        assert_eq!(p1[(1, 0)], -1.3);
        assert_eq!(p1[(0, 3)], 0.0);
        let p0 = p.coeff(0);
        assert!((p0[(0, 0)] - (0.6 + 1.3) * 4.0 / 6.0).abs() < 1e-15);
    }

    #[test]
    fn butterfly_rejects_bad_input() {
        assert!(generate_butterfly(1, &ButterflyConstants::default()).is_err());
        let mut c = ButterflyConstants::default();
        c.c[2][1] = 0.0;
        assert!(generate_butterfly(4, &c).is_err());
    }

    #[test]
    fn gyroscopic_structure_and_determinism() {
        let p = generate_gyroscopic(6, 11).unwrap();
        assert!(p.check_structure(0.0).is_t_even);
        assert_eq!(p, generate_gyroscopic(6, 11).unwrap());
        assert_ne!(p, generate_gyroscopic(6, 12).unwrap());
        assert!(generate_gyroscopic(1, 0).is_err());
    }

    #[test]
    fn gyroscopic_spectrum_is_imaginary() {
        let p = generate_gyroscopic(6, 5).unwrap();
        let ev = dense_polyeig_oracle(&p, 600).unwrap();
        assert_eq!(ev.finite.len(), 12);
        assert_eq!(ev.infinite, 0);
        for z in ev.finite {
            assert!(z.re.abs() <= 1e-10 * z.norm(), "{z}");
        }
    }
}
