//! Rank-revealing right nullspace through the SVD.

use nalgebra::DMatrix;

/// Orthonormal basis (as columns) of the right singular directions of `a`
/// with singular value `<= rank_tol * sigma_max`. A zero matrix has the
/// whole space as nullspace.
pub fn nullspace(a: &DMatrix<f64>, rank_tol: f64) -> DMatrix<f64> {
    let (m, n) = a.shape();
    if n == 0 {
        return DMatrix::zeros(0, 0);
    }
    if m == 0 || a.iter().all(|&x| x == 0.0) {
        return DMatrix::identity(n, n);
    }
    // Pad to at least square so that V^T is n x n.
    let padded;
    let src = if m < n {
        padded = a.clone().resize_vertically(n, 0.0);
        &padded
    } else {
        a
    };
    let svd = src.clone().svd(false, true);
    let v_t = svd.v_t.expect("requested V^T");
    let sigma_max = svd.singular_values.max();
    let cut = rank_tol * sigma_max;
    let cols: Vec<_> = svd
        .singular_values
        .iter()
        .enumerate()
        .filter(|(_, &s)| s <= cut)
        .map(|(i, _)| v_t.row(i).transpose())
        .collect();
    if cols.is_empty() {
        DMatrix::zeros(n, 0)
    } else {
        DMatrix::from_columns(&cols)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nonsingular_has_empty_nullspace() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 1.0, 1.0, 3.0]);
        assert_eq!(nullspace(&a, 1e-12).ncols(), 0);
    }

    #[test]
    fn diagonal_with_zero() {
        let a = DMatrix::from_diagonal(&nalgebra::DVector::from_vec(vec![0.0, 1.0, 1.0]));
        let v = nullspace(&a, 1e-12);
        assert_eq!(v.ncols(), 1);
        assert!((v[(0, 0)].abs() - 1.0).abs() < 1e-15);
        assert_eq!(v[(1, 0)], 0.0);
    }

    #[test]
    fn constructed_rank_is_recovered() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for n in 2..=12 {
            for rank in 0..n {
                let f = DMatrix::from_fn(n, rank, |_, _| rng.random_range(-1.0..1.0));
                let g = DMatrix::from_fn(rank, n, |_, _| rng.random_range(-1.0..1.0));
                let a = &f * &g;
                let v = nullspace(&a, 1e-10);
                assert_eq!(v.ncols(), n - rank, "n={n} rank={rank}");
                let vtv = v.transpose() * &v;
                assert!((vtv - DMatrix::identity(n - rank, n - rank)).amax() < 1e-12);
                assert!((&a * &v).amax() <= 1e-10 * a.norm().max(1.0));
            }
        }
    }
}
