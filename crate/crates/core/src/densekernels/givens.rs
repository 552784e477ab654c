//! Plane rotations `[c s; -s c]` acting on row or column pairs.
//!
//! Both the left and the right application map a pair `(a, b)` to
//! `(c a + s b, -s a + c b)`. A left rotation on rows `(i, j)` is the
//! orthogonal matrix `G` with `G[i,i] = G[j,j] = c`, `G[i,j] = s`,
//! `G[j,i] = -s`, applied as `M <- G M`; a right rotation on columns
//! `(i, j)` is `M <- M R` with `R = G^T` restricted to that pair.

use nalgebra::DMatrix;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Givens {
    pub c: f64,
    pub s: f64,
}

impl Givens {
    pub const IDENTITY: Givens = Givens { c: 1.0, s: 0.0 };

    /// Rotation mapping `(a, b)` to `(r, 0)` with `c >= 0`.
    pub fn zero_second(a: f64, b: f64) -> (Givens, f64) {
        if b == 0.0 {
            return (Givens::IDENTITY, a);
        }
        let mut r = a.hypot(b);
        if a < 0.0 {
            r = -r;
        }
        (Givens { c: a / r, s: b / r }, r)
    }

    /// Rotation mapping `(a, b)` to `(0, r)` with `c >= 0`.
    pub fn zero_first(a: f64, b: f64) -> (Givens, f64) {
        if a == 0.0 {
            return (Givens::IDENTITY, b);
        }
        let mut r = a.hypot(b);
        if b < 0.0 {
            r = -r;
        }
        (Givens { c: b / r, s: -a / r }, r)
    }

    pub fn is_identity(&self) -> bool {
        self.c == 1.0 && self.s == 0.0
    }

    #[inline]
    pub fn rotate(&self, a: f64, b: f64) -> (f64, f64) {
        (self.c * a + self.s * b, -self.s * a + self.c * b)
    }

    /// `M <- G M` on rows `i, j`, restricted to columns `cols`.
    pub fn apply_left(&self, m: &mut DMatrix<f64>, i: usize, j: usize, cols: std::ops::Range<usize>) {
        if self.is_identity() {
            return;
        }
        for k in cols {
            let (a, b) = self.rotate(m[(i, k)], m[(j, k)]);
            m[(i, k)] = a;
            m[(j, k)] = b;
        }
    }

    /// `M <- M R` on columns `i, j`, restricted to rows `rows`.
    pub fn apply_right(&self, m: &mut DMatrix<f64>, i: usize, j: usize, rows: std::ops::Range<usize>) {
        if self.is_identity() {
            return;
        }
        for k in rows {
            let (a, b) = self.rotate(m[(k, i)], m[(k, j)]);
            m[(k, i)] = a;
            m[(k, j)] = b;
        }
    }

    /// Same as [`apply_right`](Self::apply_right) for a row vector.
    pub fn apply_to_pair(&self, v: &mut [f64], i: usize, j: usize) {
        let (a, b) = self.rotate(v[i], v[j]);
        v[i] = a;
        v[j] = b;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn zeroing_conventions() {
        let (g, r) = Givens::zero_second(3.0, 4.0);
        let (a, b) = g.rotate(3.0, 4.0);
        assert!((a - 5.0).abs() < 1e-15 && b.abs() < 1e-15);
        assert_eq!(r, 5.0);
        assert!(g.c >= 0.0);

        let (g, _) = Givens::zero_second(-3.0, 4.0);
        let (_, b) = g.rotate(-3.0, 4.0);
        assert!(b.abs() < 1e-15);
        assert!(g.c >= 0.0);

        let (g, r) = Givens::zero_first(3.0, -4.0);
        let (a, b) = g.rotate(3.0, -4.0);
        assert!(a.abs() < 1e-15);
        assert!((b - r).abs() < 1e-15);
        assert!(g.c >= 0.0);
    }

    #[test]
    fn trivial_generators_give_identity() {
        assert!(Givens::zero_second(2.0, 0.0).0.is_identity());
        assert!(Givens::zero_first(0.0, -1.0).0.is_identity());
    }
}
