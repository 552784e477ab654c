use nalgebra::ComplexField;

/// Real or complex double-precision scalar.
pub trait Scalar: ComplexField<RealField = f64> + Copy {}

impl<T: ComplexField<RealField = f64> + Copy> Scalar for T {}

/// `y += A x` for a real dense `A` and a real or complex `x`.
pub(crate) fn gemv_acc<T: Scalar>(a: &nalgebra::DMatrix<f64>, x: &[T], y: &mut [T]) {
    debug_assert_eq!(a.ncols(), x.len());
    debug_assert_eq!(a.nrows(), y.len());
    for (j, &xj) in x.iter().enumerate() {
        if xj == T::zero() {
            continue;
        }
        let col = a.column(j);
        for (yi, &aij) in y.iter_mut().zip(col.iter()) {
            if aij != 0.0 {
                *yi += xj.scale(aij);
            }
        }
    }
}
