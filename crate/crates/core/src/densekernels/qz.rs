//! Real generalized Schur (QZ) decomposition and eigenvalue reordering.
//!
//! The pencil is written with the T-side as the "B" matrix and the H-side
//! as the "A" matrix: generalized eigenvalues are `theta` with
//! `H y = theta T y`. The decomposition returned by [`qz`] satisfies
//! `Q^T T Z = S` (upper triangular) and `Q^T H Z = R` (quasi upper
//! triangular, 1x1 and 2x2 diagonal blocks, the latter carrying complex
//! conjugate pairs).
//!
//! Implementation: Hessenberg-triangular reduction by Givens rotations
//! followed by the Moler-Stewart implicit double-shift iteration. Zero
//! diagonal entries of the triangular factor (infinite eigenvalues) are
//! chased to the bottom of the active window and deflated there.
//! Reordering swaps adjacent blocks through the generalized Sylvester
//! equation for the block coupling.

use nalgebra::DMatrix;
use num_complex::Complex64;

use super::givens::Givens;
use super::lu::LuFactors;
use crate::error::{Error, Result};

/// Sweeps allowed per unit of matrix order before giving up.
const MAX_SWEEPS_PER_ORDER: usize = 40;

/// A generalized eigenvalue `alpha / beta`, `beta >= 0`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenEig {
    pub alpha: Complex64,
    pub beta: f64,
}

impl GenEig {
    pub fn infinite() -> Self {
        GenEig {
            alpha: Complex64::new(1.0, 0.0),
            beta: 0.0,
        }
    }

    /// Finite value, or `None` when `beta == 0`.
    pub fn value(&self) -> Option<Complex64> {
        (self.beta != 0.0).then(|| self.alpha / self.beta)
    }

    /// `|beta| <= tol * |alpha|`, i.e. `|theta| >= 1/tol`.
    pub fn is_infinite(&self, tol: f64) -> bool {
        self.beta <= tol * self.alpha.norm()
    }

    pub fn modulus(&self) -> f64 {
        match self.value() {
            Some(v) => v.norm(),
            None => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone)]
pub struct GeneralizedSchur {
    pub q: DMatrix<f64>,
    pub z: DMatrix<f64>,
    /// T-side, upper triangular.
    pub s: DMatrix<f64>,
    /// H-side, quasi upper triangular.
    pub r: DMatrix<f64>,
    pub block_starts: Vec<usize>,
    /// Set when a requested block swap was rejected as ill-conditioned.
    pub reorder_failed: bool,
}

impl GeneralizedSchur {
    pub fn order(&self) -> usize {
        self.s.nrows()
    }

    /// `(start, size)` of each diagonal block.
    pub fn blocks(&self) -> Vec<(usize, usize)> {
        let k = self.order();
        self.block_starts
            .iter()
            .enumerate()
            .map(|(i, &st)| {
                let end = self.block_starts.get(i + 1).copied().unwrap_or(k);
                (st, end - st)
            })
            .collect()
    }

    pub fn block_eigenvalues(&self, start: usize, size: usize) -> Vec<GenEig> {
        block_eigenvalues(&self.r, &self.s, start, size)
    }

    pub fn eigenvalues(&self) -> Vec<GenEig> {
        self.blocks()
            .into_iter()
            .flat_map(|(st, sz)| self.block_eigenvalues(st, sz))
            .collect()
    }

    fn refresh_blocks(&mut self) {
        self.block_starts = scan_blocks(&self.r);
    }

    /// Moves all blocks whose eigenvalues satisfy `wanted` ahead of the rest,
    /// keeping the relative order inside both groups.
    pub fn reorder<F>(&mut self, wanted: F)
    where
        F: Fn(&GenEig) -> bool,
    {
        self.sort_blocks_by(|eigs| if eigs.iter().any(&wanted) { 1.0 } else { 0.0 });
    }

    /// Stable insertion sort of the diagonal blocks by descending `priority`.
    pub fn sort_blocks_by<F>(&mut self, priority: F)
    where
        F: Fn(&[GenEig]) -> f64,
    {
        let k = self.order();
        let mut sorted_end = 0;
        while sorted_end < k {
            let cur_size = block_size_at(&self.r, sorted_end);
            let cur_prio = priority(&block_eigenvalues(&self.r, &self.s, sorted_end, cur_size));
            let mut pos = sorted_end;
            let mut size = cur_size;
            while pos > 0 {
                let prev_start = block_start_before(&self.r, pos);
                let prev_size = pos - prev_start;
                let prev_prio =
                    priority(&block_eigenvalues(&self.r, &self.s, prev_start, prev_size));
                if prev_prio >= cur_prio {
                    break;
                }
                if !self.swap_adjacent(prev_start, prev_size, size) {
                    self.reorder_failed = true;
                    break;
                }
                pos = prev_start;
                size = block_size_at(&self.r, pos);
            }
            sorted_end += cur_size;
        }
        self.refresh_blocks();
    }

    /// Swaps the block of size `p` at `j` with the following block of size
    /// `q`. Returns `false` (leaving the decomposition untouched) when the
    /// swap is numerically unsafe.
    pub fn swap_adjacent(&mut self, j: usize, p: usize, q: usize) -> bool {
        let n = p + q;
        let a = self.r.view((j, j), (n, n)).into_owned();
        let b = self.s.view((j, j), (n, n)).into_owned();
        let Some((ql, zl, a_new, b_new)) = swap_local(&a, &b, p, q) else {
            return false;
        };

        let k = self.order();
        let rows_r = ql.transpose() * self.r.rows(j, n);
        self.r.rows_mut(j, n).copy_from(&rows_r);
        let rows_s = ql.transpose() * self.s.rows(j, n);
        self.s.rows_mut(j, n).copy_from(&rows_s);
        let cols_r = self.r.columns(j, n) * &zl;
        self.r.columns_mut(j, n).copy_from(&cols_r);
        let cols_s = self.s.columns(j, n) * &zl;
        self.s.columns_mut(j, n).copy_from(&cols_s);
        let cq = self.q.columns(j, n) * &ql;
        self.q.columns_mut(j, n).copy_from(&cq);
        let cz = self.z.columns(j, n) * &zl;
        self.z.columns_mut(j, n).copy_from(&cz);

        // Structural zeros outside the block are preserved exactly by the
        // products above (they combine zeros); inside, install the cleaned block.
        self.r.view_mut((j, j), (n, n)).copy_from(&a_new);
        self.s.view_mut((j, j), (n, n)).copy_from(&b_new);
        debug_assert_eq!(self.r.nrows(), k);
        self.refresh_blocks();
        true
    }
}

/// QZ decomposition of the pencil `(T, H)`.
pub fn qz(t: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<GeneralizedSchur> {
    let mut w = QzWork::new(t, h, true)?;
    w.run()?;
    let QzWork { a, b, qt, z, .. } = w;
    let block_starts = scan_blocks(&a);
    Ok(GeneralizedSchur {
        q: qt.transpose(),
        z,
        s: b,
        r: a,
        block_starts,
        reorder_failed: false,
    })
}

/// Generalized eigenvalues of `(T, H)` without accumulating transformations.
pub fn qz_eigenvalues(t: &DMatrix<f64>, h: &DMatrix<f64>) -> Result<Vec<GenEig>> {
    let mut w = QzWork::new(t, h, false)?;
    w.run()?;
    let k = w.a.nrows();
    let starts = scan_blocks(&w.a);
    let mut out = Vec::with_capacity(k);
    for (i, &st) in starts.iter().enumerate() {
        let end = starts.get(i + 1).copied().unwrap_or(k);
        out.extend(block_eigenvalues(&w.a, &w.b, st, end - st));
    }
    Ok(out)
}

fn scan_blocks(a: &DMatrix<f64>) -> Vec<usize> {
    let k = a.nrows();
    let mut starts = Vec::new();
    let mut i = 0;
    while i < k {
        starts.push(i);
        i += block_size_at(a, i);
    }
    starts
}

fn block_size_at(a: &DMatrix<f64>, i: usize) -> usize {
    if i + 1 < a.nrows() && a[(i + 1, i)] != 0.0 {
        2
    } else {
        1
    }
}

fn block_start_before(a: &DMatrix<f64>, pos: usize) -> usize {
    if pos >= 2 && a[(pos - 1, pos - 2)] != 0.0 {
        pos - 2
    } else {
        pos - 1
    }
}

pub(crate) fn block_eigenvalues(a: &DMatrix<f64>, b: &DMatrix<f64>, st: usize, size: usize) -> Vec<GenEig> {
    if size == 1 {
        let (alpha, beta) = (a[(st, st)], b[(st, st)]);
        let sign = if beta < 0.0 { -1.0 } else { 1.0 };
        return vec![GenEig {
            alpha: Complex64::new(sign * alpha, 0.0),
            beta: sign * beta,
        }];
    }
    let a2 = [
        [a[(st, st)], a[(st, st + 1)]],
        [a[(st + 1, st)], a[(st + 1, st + 1)]],
    ];
    let b2 = [[b[(st, st)], b[(st, st + 1)]], [0.0, b[(st + 1, st + 1)]]];
    match pencil2_eigenvalues(&a2, &b2) {
        Some((l1, l2)) => vec![
            GenEig { alpha: l1, beta: 1.0 },
            GenEig { alpha: l2, beta: 1.0 },
        ],
        None => vec![GenEig::infinite(), GenEig::infinite()],
    }
}

/// Eigenvalues of the 2x2 pencil `A - lambda B`, `B` upper triangular.
fn pencil2_eigenvalues(a: &[[f64; 2]; 2], b: &[[f64; 2]; 2]) -> Option<(Complex64, Complex64)> {
    let (b00, b01, b11) = (b[0][0], b[0][1], b[1][1]);
    if b00 == 0.0 || b11 == 0.0 {
        return None;
    }
    // C = B^{-1} A
    let c10 = a[1][0] / b11;
    let c11 = a[1][1] / b11;
    let c00 = (a[0][0] - b01 * c10) / b00;
    let c01 = (a[0][1] - b01 * c11) / b00;
    let half_tr = 0.5 * (c00 + c11);
    let det = c00 * c11 - c01 * c10;
    let half_diff = 0.5 * (c00 - c11);
    let disc = half_diff * half_diff + c01 * c10;
    if disc >= 0.0 {
        let sq = disc.sqrt();
        let l1 = half_tr + if half_tr >= 0.0 { sq } else { -sq };
        let l2 = if l1 != 0.0 { det / l1 } else { half_tr - (l1 - half_tr) };
        Some((Complex64::new(l1, 0.0), Complex64::new(l2, 0.0)))
    } else {
        let im = (-disc).sqrt();
        Some((Complex64::new(half_tr, im), Complex64::new(half_tr, -im)))
    }
}

struct QzWork {
    /// H-side.
    a: DMatrix<f64>,
    /// T-side.
    b: DMatrix<f64>,
    /// Accumulated Q^T.
    qt: DMatrix<f64>,
    z: DMatrix<f64>,
    accumulate: bool,
    n: usize,
}

impl QzWork {
    fn new(t: &DMatrix<f64>, h: &DMatrix<f64>, accumulate: bool) -> Result<Self> {
        let n = t.nrows();
        if !t.is_square() || h.shape() != t.shape() {
            return Err(Error::Dimension(format!(
                "qz: T is {}x{}, H is {}x{}",
                t.nrows(),
                t.ncols(),
                h.nrows(),
                h.ncols()
            )));
        }
        if t.iter().chain(h.iter()).any(|x| !x.is_finite()) {
            return Err(Error::InvalidParameter("qz: non-finite entries".into()));
        }
        let eye = if accumulate {
            DMatrix::identity(n, n)
        } else {
            DMatrix::zeros(0, 0)
        };
        Ok(QzWork {
            a: h.clone(),
            b: t.clone(),
            qt: eye.clone(),
            z: eye,
            accumulate,
            n,
        })
    }

    fn left(&mut self, g: Givens, i: usize, j: usize, a_from: usize, b_from: usize) {
        let n = self.n;
        g.apply_left(&mut self.a, i, j, a_from..n);
        g.apply_left(&mut self.b, i, j, b_from..n);
        if self.accumulate {
            g.apply_left(&mut self.qt, i, j, 0..n);
        }
    }

    fn right(&mut self, g: Givens, i: usize, j: usize, a_to: usize, b_to: usize) {
        g.apply_right(&mut self.a, i, j, 0..a_to);
        g.apply_right(&mut self.b, i, j, 0..b_to);
        if self.accumulate {
            let n = self.n;
            g.apply_right(&mut self.z, i, j, 0..n);
        }
    }

    fn run(&mut self) -> Result<()> {
        if self.n == 0 {
            return Ok(());
        }
        self.triangularize_b();
        self.hessenberg();
        self.iterate()
    }

    fn triangularize_b(&mut self) {
        let n = self.n;
        for j in 0..n {
            for i in ((j + 1)..n).rev() {
                if self.b[(i, j)] == 0.0 {
                    continue;
                }
                let (g, rr) = Givens::zero_second(self.b[(i - 1, j)], self.b[(i, j)]);
                self.left(g, i - 1, i, 0, j);
                self.b[(i - 1, j)] = rr;
                self.b[(i, j)] = 0.0;
            }
        }
    }

    fn hessenberg(&mut self) {
        let n = self.n;
        if n < 3 {
            return;
        }
        for j in 0..(n - 2) {
            for i in ((j + 2)..n).rev() {
                if self.a[(i, j)] == 0.0 {
                    continue;
                }
                let (g, rr) = Givens::zero_second(self.a[(i - 1, j)], self.a[(i, j)]);
                self.left(g, i - 1, i, j, i - 1);
                self.a[(i - 1, j)] = rr;
                self.a[(i, j)] = 0.0;
                if self.b[(i, i - 1)] != 0.0 {
                    let (g, _) = Givens::zero_first(self.b[(i, i - 1)], self.b[(i, i)]);
                    self.right(g, i - 1, i, n, i + 1);
                    self.b[(i, i - 1)] = 0.0;
                }
            }
        }
    }

    fn iterate(&mut self) -> Result<()> {
        let n = self.n;
        let eps = f64::EPSILON;
        let anorm = self.a.norm().max(f64::MIN_POSITIVE);
        let bnorm = self.b.norm().max(f64::MIN_POSITIVE);
        let max_sweeps = MAX_SWEEPS_PER_ORDER * n.max(1);
        let mut sweeps = 0usize;
        let mut since_deflation = 0usize;
        let mut hi = n - 1;

        loop {
            // Locate the unreduced window [lo, hi].
            let mut lo = hi;
            while lo > 0 {
                let sub = self.a[(lo, lo - 1)].abs();
                let mut scale = self.a[(lo - 1, lo - 1)].abs() + self.a[(lo, lo)].abs();
                if scale == 0.0 {
                    scale = anorm;
                }
                if sub <= eps * scale {
                    self.a[(lo, lo - 1)] = 0.0;
                    break;
                }
                lo -= 1;
            }

            if lo == hi {
                since_deflation = 0;
                if hi == 0 {
                    break;
                }
                hi -= 1;
                continue;
            }

            // Zero diagonal in the triangular factor: infinite eigenvalue.
            if let Some(jz) = (lo..=hi).find(|&j| self.b[(j, j)].abs() <= eps * bnorm) {
                self.b[(jz, jz)] = 0.0;
                self.push_zero_down(jz, lo, hi);
                since_deflation = 0;
                continue;
            }

            if hi - lo == 1 {
                self.split_2x2_if_real(lo);
                since_deflation = 0;
                if hi < 2 {
                    break;
                }
                hi -= 2;
                continue;
            }

            sweeps += 1;
            since_deflation += 1;
            if sweeps > max_sweeps {
                return Err(Error::QzNoConvergence { iterations: sweeps });
            }
            self.double_shift_sweep(lo, hi, since_deflation.is_multiple_of(10));
        }
        Ok(())
    }

    /// Moves a zero at `b[jz, jz]` to `b[hi, hi]` and splits off the
    /// infinite eigenvalue there.
    fn push_zero_down(&mut self, jz: usize, lo: usize, hi: usize) {
        let n = self.n;
        for k in jz..hi {
            let (g, rr) = Givens::zero_second(self.b[(k, k + 1)], self.b[(k + 1, k + 1)]);
            let a_from = k.saturating_sub(1).max(lo.saturating_sub(1));
            self.left(g, k, k + 1, a_from, k + 1);
            self.b[(k, k + 1)] = rr;
            self.b[(k + 1, k + 1)] = 0.0;
            if k > lo && self.a[(k + 1, k - 1)] != 0.0 {
                let (g, _) = Givens::zero_first(self.a[(k + 1, k - 1)], self.a[(k + 1, k)]);
                self.right(g, k - 1, k, k + 2, k + 1);
                self.a[(k + 1, k - 1)] = 0.0;
            }
        }
        if hi > lo && self.a[(hi, hi - 1)] != 0.0 {
            let (g, _) = Givens::zero_first(self.a[(hi, hi - 1)], self.a[(hi, hi)]);
            self.right(g, hi - 1, hi, hi + 1, hi + 1);
            self.a[(hi, hi - 1)] = 0.0;
            let _ = n;
        }
    }

    /// Splits a 2x2 block with real eigenvalues into two 1x1 blocks.
    fn split_2x2_if_real(&mut self, l: usize) {
        let h = l + 1;
        let a2 = [[self.a[(l, l)], self.a[(l, h)]], [self.a[(h, l)], self.a[(h, h)]]];
        let b2 = [[self.b[(l, l)], self.b[(l, h)]], [0.0, self.b[(h, h)]]];
        let Some((l1, _)) = pencil2_eigenvalues(&a2, &b2) else {
            return;
        };
        if l1.im != 0.0 {
            return;
        }
        let lam = l1.re;
        let r0 = [a2[0][0] - lam * b2[0][0], a2[0][1] - lam * b2[0][1]];
        let r1 = [a2[1][0], a2[1][1] - lam * b2[1][1]];
        let row = if r0[0].hypot(r0[1]) >= r1[0].hypot(r1[1]) { r0 } else { r1 };
        let (mut x0, mut x1) = (-row[1], row[0]);
        let nx = x0.hypot(x1);
        if nx == 0.0 {
            x0 = 1.0;
            x1 = 0.0;
        } else {
            x0 /= nx;
            x1 /= nx;
        }
        if x0 < 0.0 {
            x0 = -x0;
            x1 = -x1;
        }
        // Right rotation whose first column is x.
        let g = Givens { c: x0, s: x1 };
        self.right(g, l, h, h + 1, h + 1);
        let (g, rr) = Givens::zero_second(self.b[(l, l)], self.b[(h, l)]);
        self.left(g, l, h, l, l);
        self.b[(l, l)] = rr;
        self.b[(h, l)] = 0.0;
        self.a[(h, l)] = 0.0;
    }

    fn double_shift_sweep(&mut self, lo: usize, hi: usize, exceptional: bool) {
        let n = self.n;
        let (a, b) = (&self.a, &self.b);

        // Bottom 2x2 of M = A B^{-1}.
        let mut mb = [[0.0; 2]; 2];
        for (ri, r) in [hi - 1, hi].into_iter().enumerate() {
            let start = r - 1;
            let mut x = vec![0.0; hi + 1 - start];
            for jj in start..=hi {
                let mut acc = a[(r, jj)];
                for ii in start..jj {
                    acc -= x[ii - start] * b[(ii, jj)];
                }
                x[jj - start] = acc / b[(jj, jj)];
            }
            mb[ri][0] = x[hi - 1 - start];
            mb[ri][1] = x[hi - start];
        }
        let (mut s, mut p) = (
            mb[0][0] + mb[1][1],
            mb[0][0] * mb[1][1] - mb[0][1] * mb[1][0],
        );
        if exceptional {
            let w = mb[1][0].abs() + mb[1][1].abs().max(1e-3 * (mb[0][0].abs() + 1.0));
            s = 1.5 * w;
            p = w * w;
        }

        // Leading entries of M.
        let m00 = a[(lo, lo)] / b[(lo, lo)];
        let m10 = a[(lo + 1, lo)] / b[(lo, lo)];
        let m01 = (a[(lo, lo + 1)] - m00 * b[(lo, lo + 1)]) / b[(lo + 1, lo + 1)];
        let m11 = (a[(lo + 1, lo + 1)] - m10 * b[(lo, lo + 1)]) / b[(lo + 1, lo + 1)];
        let m21 = a[(lo + 2, lo + 1)] / b[(lo + 1, lo + 1)];

        let mut x = [
            m00 * m00 + m01 * m10 - s * m00 + p,
            m10 * (m00 + m11 - s),
            m21 * m10,
        ];

        for k in lo..(hi - 1) {
            if k > lo {
                x = [self.a[(k, k - 1)], self.a[(k + 1, k - 1)], self.a[(k + 2, k - 1)]];
            }
            let a_from = if k > lo { k - 1 } else { lo };
            let (g1, r1) = Givens::zero_second(x[1], x[2]);
            self.left(g1, k + 1, k + 2, a_from, k);
            let (g0, _) = Givens::zero_second(x[0], r1);
            self.left(g0, k, k + 1, a_from, k);
            if k > lo {
                self.a[(k + 1, k - 1)] = 0.0;
                self.a[(k + 2, k - 1)] = 0.0;
            }

            let a_to = (k + 4).min(hi + 1);
            let (g, _) = Givens::zero_first(self.b[(k + 2, k + 1)], self.b[(k + 2, k + 2)]);
            self.right(g, k + 1, k + 2, a_to, k + 3);
            self.b[(k + 2, k + 1)] = 0.0;
            let (g, _) = Givens::zero_first(self.b[(k + 2, k)], self.b[(k + 2, k + 2)]);
            self.right(g, k, k + 2, a_to, k + 3);
            self.b[(k + 2, k)] = 0.0;
            let (g, _) = Givens::zero_first(self.b[(k + 1, k)], self.b[(k + 1, k + 1)]);
            self.right(g, k, k + 1, a_to, k + 2);
            self.b[(k + 1, k)] = 0.0;
        }

        // Final 2-vector step.
        let k = hi - 1;
        let (g, rr) = Givens::zero_second(self.a[(k, k - 1)], self.a[(hi, k - 1)]);
        self.left(g, k, hi, k - 1, k);
        self.a[(k, k - 1)] = rr;
        self.a[(hi, k - 1)] = 0.0;
        let (g, _) = Givens::zero_first(self.b[(hi, k)], self.b[(hi, hi)]);
        self.right(g, k, hi, hi + 1, hi + 1);
        self.b[(hi, k)] = 0.0;
        let _ = n;
    }
}

/// Orthonormal basis of `R^n` whose first columns span `w`'s columns.
fn completed_basis(w: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    let n = w.nrows();
    let mut basis: Vec<nalgebra::DVector<f64>> = Vec::with_capacity(n);
    let candidates = w
        .column_iter()
        .map(|c| c.into_owned())
        .chain((0..n).map(|i| nalgebra::DVector::from_fn(n, |r, _| if r == i { 1.0 } else { 0.0 })));
    for (idx, mut v) in candidates.enumerate() {
        if basis.len() == n {
            break;
        }
        let norm0 = v.norm();
        for _ in 0..2 {
            for u in &basis {
                let c = u.dot(&v);
                v.axpy(-c, u, 1.0);
            }
        }
        let nv = v.norm();
        if idx < w.ncols() {
            if nv <= 1e-10 * norm0 || norm0 == 0.0 {
                return None;
            }
        } else if nv <= 0.5 {
            continue;
        }
        basis.push(v / nv);
    }
    (basis.len() == n).then(|| DMatrix::from_columns(&basis))
}

/// Local block swap. Returns `(Ql, Zl, Ql^T A Zl, Ql^T B Zl)` with the new
/// leading `q x q` block carrying the old trailing eigenvalues.
fn swap_local(
    a: &DMatrix<f64>,
    b: &DMatrix<f64>,
    p: usize,
    q: usize,
) -> Option<(DMatrix<f64>, DMatrix<f64>, DMatrix<f64>, DMatrix<f64>)> {
    let n = p + q;
    let a11 = a.view((0, 0), (p, p));
    let a12 = a.view((0, p), (p, q));
    let a22 = a.view((p, p), (q, q));
    let b11 = b.view((0, 0), (p, p));
    let b12 = b.view((0, p), (p, q));
    let b22 = b.view((p, p), (q, q));

    // A11 R - L A22 = -A12,  B11 R - L B22 = -B12  (column-major vec).
    let nu = p * q;
    let mut sys = DMatrix::<f64>::zeros(2 * nu, 2 * nu);
    let mut rhs = nalgebra::DVector::<f64>::zeros(2 * nu);
    for c in 0..q {
        for r in 0..p {
            let row = c * p + r;
            rhs[row] = -a12[(r, c)];
            rhs[nu + row] = -b12[(r, c)];
            for i in 0..p {
                sys[(row, c * p + i)] += a11[(r, i)];
                sys[(nu + row, c * p + i)] += b11[(r, i)];
            }
            for l in 0..q {
                sys[(row, nu + l * p + r)] -= a22[(l, c)];
                sys[(nu + row, nu + l * p + r)] -= b22[(l, c)];
            }
        }
    }
    let lu = LuFactors::factor(sys);
    let scale = a.norm() + b.norm();
    if lu.min_pivot() <= 1e2 * f64::EPSILON * scale.max(f64::MIN_POSITIVE) {
        return None;
    }
    let sol = lu.solve(&rhs, false);
    if sol.iter().any(|x| !x.is_finite()) {
        return None;
    }

    let mut wr = DMatrix::<f64>::zeros(n, q);
    let mut wl = DMatrix::<f64>::zeros(n, q);
    for c in 0..q {
        for r in 0..p {
            wr[(r, c)] = sol[c * p + r];
            wl[(r, c)] = sol[nu + c * p + r];
        }
        wr[(p + c, c)] = 1.0;
        wl[(p + c, c)] = 1.0;
    }
    let zl = completed_basis(&wr)?;
    let mut ql = completed_basis(&wl)?;

    let mut an = ql.transpose() * a * &zl;
    let mut bn = ql.transpose() * b * &zl;

    let defect = an.view((q, 0), (p, q)).norm() + bn.view((q, 0), (p, q)).norm();
    if defect > 1e3 * f64::EPSILON * scale {
        return None;
    }
    an.view_mut((q, 0), (p, q)).fill(0.0);
    bn.view_mut((q, 0), (p, q)).fill(0.0);

    // Re-triangularize 2x2 diagonal blocks of B.
    for (st, sz) in [(0, q), (q, p)] {
        if sz == 2 {
            let (g, rr) = Givens::zero_second(bn[(st, st)], bn[(st + 1, st)]);
            g.apply_left(&mut an, st, st + 1, 0..n);
            g.apply_left(&mut bn, st, st + 1, 0..n);
            bn[(st, st)] = rr;
            bn[(st + 1, st)] = 0.0;
            let mut qt = ql.transpose();
            g.apply_left(&mut qt, st, st + 1, 0..n);
            ql = qt.transpose();
        } else {
            for r in (st + 1)..n {
                an[(r, st)] = if r > st && r < st + sz { an[(r, st)] } else { 0.0 };
            }
        }
    }
    // A 2x2 block whose eigenvalues came out real keeps its subdiagonal;
    // callers see it as one block. Clean exact zeros below blocks.
    for c in 0..n {
        for r in (c + 1)..n {
            let same_block = (c < q && r < q && q == 2) || (c >= q && r >= q && p == 2);
            if !same_block {
                an[(r, c)] = 0.0;
            }
            bn[(r, c)] = 0.0;
        }
    }
    Some((ql, zl, an, bn))
}
