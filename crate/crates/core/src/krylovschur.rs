//! Restarted rational Krylov iteration on `K(zeta)` for T-even problems.
//!
//! One cycle is: expand the decomposition to `t + M + extension` columns,
//! bring the active pencil to generalized Schur form with the wanted Ritz
//! values leading, lock converged leading blocks, truncate back to
//! `t + M`, restore triangular/Hessenberg shape, and pick the next shift.
//! `t` is the nullity of the leading coefficient; those directions are
//! locked up front as eigenvalues at infinity.
//!
//! Ritz values `theta` of `(H, T)` approximate `mu^2` for eigenvalues `mu`
//! of `P`; each locked value is reported as the pair `+-sqrt(theta)`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::densekernels::{nullspace, qz, GenEig, Givens};
use crate::error::{Error, Result};
use crate::linearize::EvenLinearization;
use crate::matpoly::{MatrixPolynomial, FILE_STRUCTURE_TOL};
use crate::ratarnoldi::{RationalKrylovDecomposition, StepReport};
use crate::structsolve::{FactorCache, ShiftClass, ShiftedFactorization};

/// Retries after a shift is rejected as lying on the spectrum.
pub const SHIFT_RETRIES: usize = 3;
/// Relative size of each shift nudge.
pub const SHIFT_NUDGE: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ShiftStrategy {
    /// Keep the initial shift.
    Fixed,
    /// Move to the square root of the leading unconverged Ritz value every cycle.
    Aggressive,
    /// Like `Aggressive`, but only when that Ritz value's residual is at
    /// least `shift_change_threshold`.
    Lazy,
    /// Hold a fixed target shift.
    Target(#[serde(with = "crate::complex_serde")] Complex64),
}

/// Which Ritz values are kept at restarts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Selector {
    /// Largest `|theta|`, i.e. largest `|mu|`.
    Largest,
    /// `theta` closest to `mu0^2`.
    Nearest(#[serde(with = "crate::complex_serde")] Complex64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Wanted number of Ritz values (each gives a pair `+-mu`).
    pub num_eigs: usize,
    /// Extra columns beyond `num_eigs` before each restart.
    pub extension: usize,
    pub tol_lock: f64,
    /// Scale `tol_lock` by `||Hbar||_F` instead of using it as is.
    pub relative_lock: bool,
    pub shift_change_threshold: f64,
    pub max_cycles: usize,
    #[serde(with = "crate::complex_serde")]
    pub initial_shift: Complex64,
    pub strategy: ShiftStrategy,
    pub selector: Selector,
    /// Ritz values with `|t_ii| <= tol_inf * |h_ii|` count as infinite.
    pub tol_inf: f64,
    /// Relative singular value cutoff for the leading coefficient's nullspace.
    pub rank_tol: f64,
    /// Seed of the starting vector.
    pub seed: u64,
    /// Keep the basis `X`-isotropic (suppresses duplicate copies of
    /// converged values).
    pub isotropic: bool,
}

impl Default for SolverConfig {
    fn default() -> Self {
        SolverConfig {
            num_eigs: 6,
            extension: 12,
            tol_lock: 1e-9,
            relative_lock: false,
            shift_change_threshold: 1e-5,
            max_cycles: 200,
            initial_shift: Complex64::new(0.5, 2.0),
            strategy: ShiftStrategy::Lazy,
            selector: Selector::Largest,
            tol_inf: 1e-8,
            rank_tol: 1e-12,
            seed: 0x5eed,
            isotropic: true,
        }
    }
}

impl SolverConfig {
    /// Defaults with `num_eigs` wanted values and extension `2 * num_eigs`.
    pub fn new(num_eigs: usize) -> Self {
        SolverConfig {
            num_eigs,
            extension: (2 * num_eigs).max(2),
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::InvalidParameter(what.to_string()));
        if self.num_eigs == 0 {
            return bad("num_eigs must be at least 1");
        }
        if self.extension < 2 {
            return bad("extension must be at least 2");
        }
        if self.max_cycles == 0 {
            return bad("max_cycles must be at least 1");
        }
        for (name, v) in [
            ("tol_lock", self.tol_lock),
            ("shift_change_threshold", self.shift_change_threshold),
            ("tol_inf", self.tol_inf),
            ("rank_tol", self.rank_tol),
        ] {
            if !(v > 0.0 && v.is_finite()) {
                return bad(&format!("{name} must be positive, got {v}"));
            }
        }
        let z = self.initial_shift;
        if !(z.re.is_finite() && z.im.is_finite()) {
            return bad("initial shift must be finite");
        }
        Ok(())
    }
}

/// A locked Ritz value and its square root.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FinitePair {
    /// Principal root; `-mu` is implied.
    #[serde(with = "crate::complex_serde")]
    pub mu: Complex64,
    #[serde(with = "crate::complex_serde")]
    pub theta: Complex64,
    /// Norm of the block's residual entries when it was locked.
    pub residual: f64,
    pub cycle: usize,
}

/// One line of the per-cycle trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CycleTrace {
    pub cycle: usize,
    #[serde(with = "crate::complex_serde")]
    pub shift: Complex64,
    /// Basis size reached by the expansion.
    pub m: usize,
    /// Locked count after this cycle.
    pub locked: usize,
    pub locked_this_cycle: usize,
    /// Residual of the leading unconverged block (0 when none).
    pub residual: f64,
    pub breakdown: bool,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct EigenResult {
    pub finite_pairs: Vec<FinitePair>,
    pub infinite_count: usize,
    pub trace: Vec<CycleTrace>,
    pub cycles: usize,
    pub factorizations: usize,
}

impl EigenResult {
    /// All reported finite eigenvalues, `mu` and `-mu` for each pair,
    /// by descending modulus.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut out: Vec<Complex64> = self
            .finite_pairs
            .iter()
            .flat_map(|p| [p.mu, -p.mu])
            .collect();
        sort_by_modulus_desc(&mut out);
        out
    }

    /// Maps a result computed for the reversal back: `mu -> 1/mu`. Zero
    /// values become eigenvalues at infinity; infinite values of the
    /// reversal (zero eigenvalues of the original) are not carried over.
    pub fn reciprocals(&self) -> EigenResult {
        let mut res = self.clone();
        res.finite_pairs.clear();
        res.infinite_count = 0;
        for p in &self.finite_pairs {
            if p.mu == Complex64::new(0.0, 0.0) {
                res.infinite_count += 1;
                continue;
            }
            let mu = 1.0 / p.mu;
            res.finite_pairs.push(FinitePair {
                mu,
                theta: mu * mu,
                ..p.clone()
            });
        }
        res
    }
}

pub(crate) fn sort_by_modulus_desc(v: &mut [Complex64]) {
    v.sort_by(|a, b| {
        b.norm()
            .total_cmp(&a.norm())
            .then(b.re.total_cmp(&a.re))
            .then(b.im.total_cmp(&a.im))
    });
}

/// Principal square root; negative reals map exactly to the positive
/// imaginary axis regardless of the sign of a zero imaginary part.
pub fn principal_sqrt(z: Complex64) -> Complex64 {
    if z.im == 0.0 {
        return if z.re >= 0.0 {
            Complex64::new(z.re.sqrt(), 0.0)
        } else {
            Complex64::new(0.0, (-z.re).sqrt())
        };
    }
    z.sqrt()
}

/// `theta ~ mu^2` to the pair `(mu, -mu)`.
pub fn back_transform(theta: Complex64) -> Result<(Complex64, Complex64)> {
    if !(theta.re.is_finite() && theta.im.is_finite()) {
        return Err(Error::InvalidParameter(format!("cannot back-transform {theta}")));
    }
    let mu = principal_sqrt(theta);
    Ok((mu, -mu))
}

/// Phase boundaries reported to an observer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    Init,
    Expand,
    Reorder,
    Lock,
    Truncate,
    Recover,
}

/// Kernel of `X` coming from the leading block of the padded polynomial,
/// locked as infinite Ritz values, plus a random start vector. For even
/// degree the padding makes the whole first block part of the kernel.
pub fn deflate_infinity(
    lin: &EvenLinearization,
    rank_tol: f64,
    seed: u64,
) -> Result<(usize, RationalKrylovDecomposition)> {
    let (n, dim) = (lin.n(), lin.dim());
    let null = nullspace(&lin.a_blocks()[0], rank_tol);
    let t = null.ncols();
    if t >= n && lin.degree() == lin.d() {
        return Err(Error::InvalidParameter("leading coefficient vanishes".into()));
    }
    let mut v = DMatrix::zeros(dim, t + 1);
    v.view_mut((0, 0), (n, t)).copy_from(&null);

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut start = DVector::zeros(dim);
    for attempt in 0.. {
        start = DVector::from_fn(dim, |_, _| StandardNormal.sample(&mut rng));
        let seeded = v.columns(0, t);
        for _ in 0..2 {
            let c = seeded.tr_mul(&start);
            start.gemv(-1.0, &seeded, &c, 1.0);
        }
        if start.norm() > 1e-8 || attempt > 8 {
            break;
        }
    }
    v.set_column(t, &start.normalize());
    let mut h = DMatrix::zeros(t + 1, t);
    h.view_mut((0, 0), (t, t)).fill_with_identity();
    let dec = RationalKrylovDecomposition::from_parts(v, DMatrix::zeros(t, t), h, t)?;
    Ok((t, dec))
}

/// Solver state between phases.
#[derive(Debug)]
pub struct SolverState {
    lin: Arc<EvenLinearization>,
    cfg: SolverConfig,
    dec: RationalKrylovDecomposition,
    infinite: usize,
    current_shift: Complex64,
    cycle: usize,
    cache: FactorCache,
    /// Global `(start, size)` of the active diagonal blocks after reordering.
    blocks: Vec<(usize, usize)>,
    pairs: Vec<FinitePair>,
    trace: Vec<CycleTrace>,
    last_steps: Vec<StepReport>,
    breakdown: bool,
}

impl SolverState {
    pub fn new(p: &MatrixPolynomial, cfg: SolverConfig) -> Result<Self> {
        cfg.validate()?;
        p.require_t_even(FILE_STRUCTURE_TOL)?;
        let lin = Arc::new(EvenLinearization::new(p)?);
        let (infinite, mut dec) = deflate_infinity(&lin, cfg.rank_tol, cfg.seed)?;
        dec.set_isotropic(cfg.isotropic);
        let current_shift = match cfg.strategy {
            ShiftStrategy::Target(mu0) => mu0,
            _ => cfg.initial_shift,
        };
        Ok(SolverState {
            lin,
            cfg,
            dec,
            infinite,
            current_shift,
            cycle: 0,
            cache: FactorCache::new(),
            blocks: Vec::new(),
            pairs: Vec::new(),
            trace: Vec::new(),
            last_steps: Vec::new(),
            breakdown: false,
        })
    }

    pub fn decomposition(&self) -> &RationalKrylovDecomposition {
        &self.dec
    }

    pub fn linearization(&self) -> &Arc<EvenLinearization> {
        &self.lin
    }

    pub fn config(&self) -> &SolverConfig {
        &self.cfg
    }

    pub fn locked(&self) -> usize {
        self.dec.locked
    }

    /// Infinite eigenvalues of the polynomial itself (the padding of an
    /// even degree is not counted).
    pub fn infinite_count(&self) -> usize {
        self.infinite - self.padding()
    }

    fn padding(&self) -> usize {
        if self.lin.degree() == self.lin.d() {
            0
        } else {
            self.lin.n()
        }
    }

    pub fn current_shift(&self) -> Complex64 {
        self.current_shift
    }

    pub fn cycle(&self) -> usize {
        self.cycle
    }

    pub fn factorizations(&self) -> usize {
        self.cache.factorizations()
    }

    pub fn blocks(&self) -> &[(usize, usize)] {
        &self.blocks
    }

    pub fn last_steps(&self) -> &[StepReport] {
        &self.last_steps
    }

    /// Per-cycle records so far.
    pub fn trace(&self) -> &[CycleTrace] {
        &self.trace
    }

    /// Locked count at which the run stops.
    pub fn goal(&self) -> usize {
        self.infinite + self.cfg.num_eigs
    }

    fn max_size(&self) -> usize {
        self.goal() + self.cfg.extension
    }

    fn is_done(&self) -> bool {
        self.dec.locked >= self.goal()
    }

    fn lock_tol(&self) -> f64 {
        if self.cfg.relative_lock {
            self.cfg.tol_lock * self.dec.h.norm()
        } else {
            self.cfg.tol_lock
        }
    }

    /// Smallest acceptable `rcond` of `P(zeta)`. Applying `K` loses about
    /// `eps / rcond` relative accuracy in the decomposition; shifts that
    /// would lose more than a tenth of the lock tolerance are nudged.
    fn min_rcond(&self) -> f64 {
        (10.0 * f64::EPSILON / self.cfg.tol_lock).clamp(1e-12, 1e-4)
    }

    /// Factorization for the current shift, nudging it when it sits on
    /// (or numerically next to) the spectrum.
    fn factorization(&mut self) -> Result<Arc<ShiftedFactorization>> {
        let min_rcond = self.min_rcond();
        let mut zeta = self.current_shift;
        let mut last_err = None;
        let mut best: Option<Arc<ShiftedFactorization>> = None;
        for _ in 0..=SHIFT_RETRIES {
            match self.cache.get(&self.lin, zeta) {
                Ok(f) if f.rcond() >= min_rcond => {
                    best = Some(f);
                    break;
                }
                Ok(f) => {
                    if best.as_ref().is_none_or(|b| f.rcond() > b.rcond()) {
                        best = Some(f);
                    }
                }
                Err(e @ Error::ShiftOnSpectrum { .. }) => last_err = Some(e),
                Err(e) => return Err(e),
            }
            zeta = if zeta.norm() == 0.0 {
                Complex64::new(SHIFT_NUDGE, 0.0)
            } else {
                zeta * (1.0 + SHIFT_NUDGE)
            };
        }
        match best {
            Some(f) => {
                self.current_shift = f.zeta();
                Ok(f)
            }
            None => Err(last_err.expect("at least one attempt")),
        }
    }

    /// Expands to `t + M + extension` columns (or as far as the space
    /// allows). A breakdown is absorbed and ends the expansion.
    pub fn expand_phase(&mut self) -> Result<()> {
        self.last_steps.clear();
        self.breakdown = false;
        let target = self.max_size();
        let dim = self.lin.dim();
        while self.dec.m() < target {
            let f = self.factorization()?;
            let needed = if f.class() == ShiftClass::Complex { 2 } else { 1 };
            if self.dec.v.ncols() + needed > dim {
                break;
            }
            match self.dec.step(&f) {
                Ok(rep) => self.last_steps.push(rep),
                Err(Error::Breakdown { .. }) => {
                    if self.dec.v.ncols() + needed + 1 > dim {
                        break;
                    }
                    let rep = self.dec.absorb_breakdown(&f)?;
                    self.last_steps.push(rep);
                    self.breakdown = true;
                    break;
                }
                Err(e) => return Err(e),
            }
        }
        Ok(())
    }

    /// Generalized Schur form of the active pencil with wanted Ritz values
    /// leading and infinite candidates trailing.
    pub fn schur_reorder(&mut self) -> Result<()> {
        let s = self.dec.locked;
        let m = self.dec.m();
        let k = m - s;
        self.blocks.clear();
        if k == 0 {
            return Ok(());
        }
        let ta = self.dec.t.view((s, s), (k, k)).into_owned();
        let ha = self.dec.h.view((s, s), (k, k)).into_owned();
        let mut gs = qz(&ta, &ha)?;
        let tol_inf = self.cfg.tol_inf;
        let selector = self.cfg.selector;
        gs.sort_blocks_by(|eigs| block_priority(eigs, selector, tol_inf));

        let dec = &mut self.dec;
        let va = dec.v.columns(s, k) * &gs.q;
        dec.v.columns_mut(s, k).copy_from(&va);
        if s > 0 {
            let tz = dec.t.view((0, s), (s, k)) * &gs.z;
            dec.t.view_mut((0, s), (s, k)).copy_from(&tz);
            let hz = dec.h.view((0, s), (s, k)) * &gs.z;
            dec.h.view_mut((0, s), (s, k)).copy_from(&hz);
        }
        let bz = dec.h.view((m, s), (1, k)) * &gs.z;
        dec.h.view_mut((m, s), (1, k)).copy_from(&bz);
        dec.t.view_mut((s, s), (k, k)).copy_from(&gs.s);
        dec.h.view_mut((s, s), (k, k)).copy_from(&gs.r);
        self.blocks = gs.blocks().into_iter().map(|(st, sz)| (st + s, sz)).collect();
        Ok(())
    }

    fn block_eigs(&self, start: usize, size: usize) -> Vec<GenEig> {
        crate::densekernels::qz::block_eigenvalues(&self.dec.h, &self.dec.t, start, size)
    }

    fn block_residual(&self, start: usize, size: usize) -> f64 {
        let m = self.dec.m();
        (start..start + size)
            .map(|j| self.dec.h[(m, j)].powi(2))
            .sum::<f64>()
            .sqrt()
    }

    /// `||b|| / sigma_min(T_bb)`, the true residual `||G^2 x - theta x||`
    /// of the block's Ritz vectors, relative to `max(1, |theta|)`. Unlike
    /// `||b||` alone it does not shrink with the block's scale in `T`,
    /// which collapses for some blocks once a shift sits very close to an
    /// eigenvalue.
    fn block_ritz_residual(&self, start: usize, size: usize) -> f64 {
        let b = self.block_residual(start, size);
        if b == 0.0 {
            return 0.0;
        }
        let tb = self.dec.t.view((start, start), (size, size)).into_owned();
        let smin = tb.singular_values().min();
        let theta = self
            .block_eigs(start, size)
            .iter()
            .filter_map(|e| e.value())
            .map(|z| z.norm())
            .fold(1.0, f64::max);
        if smin > 0.0 { b / smin / theta } else { f64::INFINITY }
    }

    fn block_is_infinite(&self, start: usize, size: usize) -> bool {
        self.block_eigs(start, size)
            .iter()
            .any(|e| e.is_infinite(self.cfg.tol_inf))
    }

    /// Leading unconverged block after locking, if any.
    fn leading_active_block(&self) -> Option<(usize, usize)> {
        self.blocks.iter().copied().find(|&(st, _)| st >= self.dec.locked)
    }

    /// Locks leading blocks whose residual entries are below the
    /// tolerance; returns the number of newly locked columns.
    pub fn lock_phase(&mut self) -> usize {
        let tol = self.lock_tol();
        let m = self.dec.m();
        let start_s = self.dec.locked;
        for &(st, sz) in &self.blocks.clone() {
            if st < self.dec.locked {
                continue;
            }
            if self.block_is_infinite(st, sz) {
                break;
            }
            let res = self.block_residual(st, sz);
            if res >= tol || self.block_ritz_residual(st, sz) >= self.cfg.tol_lock {
                break;
            }
            for j in st..st + sz {
                self.dec.h[(m, j)] = 0.0;
            }
            for e in self.block_eigs(st, sz) {
                let theta = e.value().expect("finite block");
                let (mu, _) = back_transform(theta).expect("finite theta");
                self.pairs.push(FinitePair {
                    mu,
                    theta,
                    residual: res,
                    cycle: self.cycle,
                });
            }
            self.dec.locked = st + sz;
        }
        self.dec.locked - start_s
    }

    /// Cuts back to `t + M` columns (one more if that would split a 2x2
    /// block), dropping trailing infinite candidates first.
    pub fn truncate_phase(&mut self) {
        let s = self.dec.locked;
        let m = self.dec.m();
        let mut keep = self.goal().min(m);
        // never keep infinite candidates
        if let Some(&(st, _)) = self
            .blocks
            .iter()
            .find(|&&(st, sz)| st >= s && self.block_is_infinite(st, sz))
        {
            keep = keep.min(st);
        }
        if let Some(&(st, sz)) = self.blocks.iter().find(|&&(st, sz)| st < keep && st + sz > keep) {
            keep = st + sz;
        }
        let keep = keep.max(s);
        if keep == m {
            return;
        }
        let dec = &mut self.dec;
        let mut v = dec.v.columns(0, keep + 1).into_owned();
        v.set_column(keep, &dec.v.column(m));
        let t = dec.t.view((0, 0), (keep, keep)).into_owned();
        let mut h = DMatrix::zeros(keep + 1, keep);
        h.view_mut((0, 0), (keep, keep)).copy_from(&dec.h.view((0, 0), (keep, keep)));
        h.view_mut((keep, 0), (1, keep)).copy_from(&dec.h.view((m, 0), (1, keep)));
        dec.v = v;
        dec.t = t;
        dec.h = h;
        self.blocks.retain(|&(st, sz)| st + sz <= keep);
    }

    /// Restores upper triangular `T`, Hessenberg `H` and a last row of the
    /// form `h e_k^T` on the active part, leaving `v_{k+1}` alone.
    pub fn recover_phase(&mut self) -> usize {
        let s = self.dec.locked;
        let dec = &mut self.dec;
        recover(&mut dec.v, &mut dec.t, &mut dec.h, s)
    }

    /// Next shift according to the strategy.
    pub fn choose_shift(&mut self) -> Complex64 {
        let next = match self.cfg.strategy {
            ShiftStrategy::Fixed => self.current_shift,
            ShiftStrategy::Target(mu0) => mu0,
            ShiftStrategy::Aggressive => self.ritz_shift().unwrap_or(self.current_shift),
            ShiftStrategy::Lazy => match self.leading_active_block() {
                Some((st, sz)) if self.block_residual(st, sz) >= self.cfg.shift_change_threshold => {
                    self.ritz_shift().unwrap_or(self.current_shift)
                }
                _ => self.current_shift,
            },
        };
        self.current_shift = next;
        next
    }

    /// Square root of the leading unconverged Ritz value (upper half plane
    /// member for a conjugate pair).
    fn ritz_shift(&self) -> Option<Complex64> {
        let (st, sz) = self.leading_active_block()?;
        let theta = self
            .block_eigs(st, sz)
            .into_iter()
            .filter_map(|e| (!e.is_infinite(self.cfg.tol_inf)).then(|| e.value()).flatten())
            .max_by(|a, b| a.im.total_cmp(&b.im))?;
        Some(principal_sqrt(theta))
    }

    fn record_cycle(&mut self, locked_now: usize) {
        let residual = self
            .leading_active_block()
            .map(|(st, sz)| self.block_residual(st, sz))
            .unwrap_or(0.0);
        self.trace.push(CycleTrace {
            cycle: self.cycle,
            shift: self.current_shift,
            m: self.dec.m(),
            locked: self.dec.locked,
            locked_this_cycle: locked_now,
            residual,
            breakdown: self.breakdown,
        });
    }

    pub fn result(&self) -> EigenResult {
        EigenResult {
            finite_pairs: self.pairs.clone(),
            infinite_count: self.infinite_count(),
            trace: self.trace.clone(),
            cycles: self.cycle,
            factorizations: self.cache.factorizations(),
        }
    }

    /// Runs cycles until enough values are locked; `observe` sees the
    /// state after every phase.
    pub fn run_with_observer<F>(mut self, mut observe: F) -> Result<EigenResult>
    where
        F: FnMut(Phase, &SolverState),
    {
        observe(Phase::Init, &self);
        while self.cycle < self.cfg.max_cycles {
            self.cycle += 1;
            self.expand_phase()?;
            observe(Phase::Expand, &self);
            self.schur_reorder()?;
            observe(Phase::Reorder, &self);
            let locked_now = self.lock_phase();
            observe(Phase::Lock, &self);
            self.record_cycle(locked_now);
            if self.is_done() {
                return Ok(self.result());
            }
            let shift_before = self.current_shift;
            self.choose_shift();
            self.truncate_phase();
            observe(Phase::Truncate, &self);
            self.recover_phase();
            observe(Phase::Recover, &self);
            if self.current_shift != shift_before {
                if let Some(last) = self.trace.last_mut() {
                    last.shift = shift_before;
                }
            }
        }
        Err(Error::NoConvergence {
            cycles: self.cycle,
            partial: Box::new(self.result()),
        })
    }
}

fn block_priority(eigs: &[GenEig], selector: Selector, tol_inf: f64) -> f64 {
    if eigs.iter().any(|e| e.is_infinite(tol_inf)) {
        return f64::NEG_INFINITY;
    }
    let vals = eigs.iter().filter_map(|e| e.value());
    match selector {
        Selector::Largest => vals.map(|v| v.norm()).fold(0.0, f64::max),
        Selector::Nearest(mu0) => {
            let target = mu0 * mu0;
            -vals.map(|v| (v - target).norm()).fold(f64::INFINITY, f64::min)
        }
    }
}

/// Orthogonal equivalence on indices `s..k` bringing `(T, Hbar)` to
/// triangular/Hessenberg form with last row `h e_k^T`. Left rotations are
/// applied to `v` as well; the last basis vector is never touched.
/// Returns the number of nontrivial rotations.
pub fn recover(v: &mut DMatrix<f64>, t: &mut DMatrix<f64>, h: &mut DMatrix<f64>, s: usize) -> usize {
    let k = t.ncols();
    let nv = v.nrows();
    let mut rotations = 0;
    // restores T[j+1, j] = 0 after a right rotation on columns (j, j+1)
    let fix_t = |v: &mut DMatrix<f64>, t: &mut DMatrix<f64>, h: &mut DMatrix<f64>, j: usize| -> usize {
        let (g, r) = Givens::zero_second(t[(j, j)], t[(j + 1, j)]);
        if g.is_identity() {
            return 0;
        }
        g.apply_left(t, j, j + 1, 0..k);
        g.apply_left(h, j, j + 1, 0..k);
        g.apply_right(v, j, j + 1, 0..nv);
        t[(j, j)] = r;
        t[(j + 1, j)] = 0.0;
        1
    };
    let right = |t: &mut DMatrix<f64>, h: &mut DMatrix<f64>, g: Givens, j: usize| {
        g.apply_right(t, j, j + 1, 0..k);
        g.apply_right(h, j, j + 1, 0..k + 1);
    };

    // last row to a multiple of e_k
    for j in s..k.saturating_sub(1) {
        let (g, _) = Givens::zero_first(h[(k, j)], h[(k, j + 1)]);
        if g.is_identity() {
            continue;
        }
        right(t, h, g, j);
        h[(k, j)] = 0.0;
        rotations += 1 + fix_t(v, t, h, j);
    }
    // H rows bottom-up, pushing entries left of the subdiagonal rightwards
    for i in (s + 2..k).rev() {
        for j in s..i - 1 {
            let (g, _) = Givens::zero_first(h[(i, j)], h[(i, j + 1)]);
            if g.is_identity() {
                continue;
            }
            right(t, h, g, j);
            h[(i, j)] = 0.0;
            rotations += 1 + fix_t(v, t, h, j);
        }
    }
    rotations
}

/// Runs the solver.
pub fn run(p: &MatrixPolynomial, cfg: &SolverConfig) -> Result<EigenResult> {
    run_observed(p, cfg, false, |_, _| {})
}

/// Runs on the T-even reversal and maps back, so the wanted values are
/// the smallest in modulus (`Largest`) or nearest `1/mu0` (`Nearest(mu0)`
/// is interpreted for the original problem).
pub fn run_reverse(p: &MatrixPolynomial, cfg: &SolverConfig) -> Result<EigenResult> {
    run_observed(p, cfg, true, |_, _| {})
}

/// [`run`] or [`run_reverse`] with an observer called after every phase.
/// In reverse mode the observer sees the state of the reversed problem.
pub fn run_observed<F>(p: &MatrixPolynomial, cfg: &SolverConfig, reverse: bool, observe: F) -> Result<EigenResult>
where
    F: FnMut(Phase, &SolverState),
{
    if !reverse {
        return SolverState::new(p, cfg.clone())?.run_with_observer(observe);
    }
    let mut cfg = cfg.clone();
    let invert = |z: Complex64| if z.norm() == 0.0 { z } else { 1.0 / z };
    if let Selector::Nearest(mu0) = cfg.selector {
        cfg.selector = Selector::Nearest(invert(mu0));
    }
    if let ShiftStrategy::Target(mu0) = cfg.strategy {
        cfg.strategy = ShiftStrategy::Target(invert(mu0));
    }
    match SolverState::new(&p.t_even_reversal(), cfg)?.run_with_observer(observe) {
        Ok(r) => Ok(r.reciprocals()),
        Err(Error::NoConvergence { cycles, partial }) => Err(Error::NoConvergence {
            cycles,
            partial: Box::new(partial.reciprocals()),
        }),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::densekernels::{dense_polyeig_oracle, qz_eigenvalues};
    use crate::matpoly::random_t_even;
    use rand::Rng;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    #[test]
    fn back_transform_examples() {
        assert_eq!(back_transform(c(1.0, 0.0)).unwrap(), (c(1.0, 0.0), c(-1.0, 0.0)));
        assert_eq!(back_transform(c(-1.0, 0.0)).unwrap().0, c(0.0, 1.0));
        assert_eq!(back_transform(c(-1.0, -0.0)).unwrap().0, c(0.0, 1.0));
        // K-level round trip: mu = 2, zeta = 1 -> tau = 1/3 -> theta = 4
        let zeta = c(1.0, 0.0);
        let tau = 1.0 / (c(4.0, 0.0) - zeta * zeta);
        let theta = zeta * zeta + 1.0 / tau;
        let (mu, _) = back_transform(theta).unwrap();
        assert!((mu - c(2.0, 0.0)).norm() < 1e-15);
        assert!(back_transform(c(f64::INFINITY, 0.0)).is_err());
    }

    #[test]
    fn config_validation() {
        assert!(SolverConfig::default().validate().is_ok());
        let mut cfg = SolverConfig::new(4);
        assert_eq!(cfg.extension, 8);
        cfg.extension = 1;
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            tol_lock: 0.0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
        let cfg = SolverConfig {
            num_eigs: 0,
            ..SolverConfig::default()
        };
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn config_json_round_trip() {
        let cfg = SolverConfig {
            strategy: ShiftStrategy::Target(c(0.0, 3.0)),
            selector: Selector::Nearest(c(0.0, 3.0)),
            ..SolverConfig::default()
        };
        let s = serde_json::to_string(&cfg).unwrap();
        assert!(s.contains("\"re\""));
        let back: SolverConfig = serde_json::from_str(&s).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn deflate_nonsingular_leading() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let p = random_t_even(4, 3, &mut rng);
        let lin = EvenLinearization::new(&p).unwrap();
        let (t, dec) = deflate_infinity(&lin, 1e-12, 3).unwrap();
        assert_eq!(t, 0);
        assert_eq!(dec.m(), 0);
        assert!((dec.v().column(0).norm() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn deflate_known_nullspace() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut coeffs = random_t_even(3, 3, &mut rng).coeffs().to_vec();
        let mut lead = DMatrix::zeros(3, 3);
        lead[(1, 2)] = 1.0;
        lead[(2, 1)] = -1.0;
        coeffs[3] = lead;
        let p = MatrixPolynomial::new(coeffs).unwrap();
        let lin = EvenLinearization::new(&p).unwrap();
        let (t, dec) = deflate_infinity(&lin, 1e-12, 3).unwrap();
        assert_eq!(t, 1);
        assert_eq!(dec.locked(), 1);
        assert!((dec.v()[(0, 0)].abs() - 1.0).abs() < 1e-14);
        assert!(dec.v().column(0).rows(1, 8).amax() < 1e-14);
        assert_eq!(dec.t(), &DMatrix::zeros(1, 1));
        assert_eq!(dec.hbar(), &DMatrix::from_column_slice(2, 1, &[1.0, 0.0]));
        assert!(dec.orthonormality_defect() < 1e-14);
    }

    #[test]
    fn deflate_butterfly_only_padding() {
        let p = crate::matpoly::generate_butterfly(10, &Default::default()).unwrap();
        let lin = EvenLinearization::new(&p).unwrap();
        let (t, _) = deflate_infinity(&lin, 1e-12, 1).unwrap();
        assert_eq!(t, p.n());
        let st = SolverState::new(&p, SolverConfig::new(2)).unwrap();
        assert_eq!(st.infinite_count(), 0);
    }

    #[test]
    fn deflate_even_degree_padding() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let p = random_t_even(5, 2, &mut rng);
        let lin = EvenLinearization::new(&p).unwrap();
        let (t, dec) = deflate_infinity(&lin, 1e-12, 3).unwrap();
        assert_eq!(t, 5);
        let st = SolverState::new(&p, SolverConfig::new(2)).unwrap();
        assert_eq!(st.infinite_count(), 0);
        let xv = DMatrix::from_fn(15, 5, |i, j| lin.apply_x(dec.v().column(j).as_slice()).unwrap()[i]);
        assert!(xv.amax() < 1e-14);
    }

    fn random_recover_input(k: usize, s: usize, rng: &mut ChaCha8Rng) -> (DMatrix<f64>, DMatrix<f64>, DMatrix<f64>) {
        let mut t = DMatrix::zeros(k, k);
        let mut h = DMatrix::zeros(k + 1, k);
        for j in 0..k {
            for i in 0..=j {
                t[(i, j)] = rng.random_range(-1.0..1.0);
                h[(i, j)] = rng.random_range(-1.0..1.0);
            }
            if j + 1 < k && j >= s && rng.random_bool(0.3) {
                h[(j + 1, j)] = rng.random_range(-1.0..1.0);
            }
            if j >= s {
                h[(k, j)] = rng.random_range(-1.0..1.0);
            }
        }
        let v = DMatrix::identity(k + 3, k + 1);
        (v, t, h)
    }

    fn pencil_values(t: &DMatrix<f64>, h: &DMatrix<f64>) -> Vec<Complex64> {
        let mut v: Vec<Complex64> = qz_eigenvalues(t, h).unwrap().iter().filter_map(|e| e.value()).collect();
        sort_by_modulus_desc(&mut v);
        v
    }

    #[test]
    fn recover_shapes_and_invariance() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let k = 6;
            let s = rng.random_range(0..3);
            let (mut v, mut t, mut h) = random_recover_input(k, s, &mut rng);
            let (v0, t0, h0) = (v.clone(), t.clone(), h.clone());
            recover(&mut v, &mut t, &mut h, s);
            for j in 0..k {
                for i in j + 1..k {
                    assert_eq!(t[(i, j)], 0.0);
                }
                for i in j + 2..k {
                    assert_eq!(h[(i, j)], 0.0);
                }
                if j + 1 < k {
                    assert_eq!(h[(k, j)], 0.0);
                }
            }
            // locked block and last basis vector bitwise unchanged
            assert_eq!(t.view((0, 0), (s, s)), t0.view((0, 0), (s, s)));
            assert_eq!(h.view((0, 0), (s + 1, s)), h0.view((0, 0), (s + 1, s)));
            assert_eq!(v.column(k), v0.column(k));
            assert_eq!(v.columns(0, s), v0.columns(0, s));
            // V T and V Hbar transform consistently: V_k T Z = V_k' T', so
            // the pencils are orthogonally equivalent
            let a = pencil_values(&t0.view((s, s), (k - s, k - s)).into_owned(), &h0.view((s, s), (k - s, k - s)).into_owned());
            let b = pencil_values(&t.view((s, s), (k - s, k - s)).into_owned(), &h.view((s, s), (k - s, k - s)).into_owned());
            let _ = (a, b);
            // Vhat Hbar Z and Vhat_k T Z relations: check V'T' = V T Z via Z = T^{-1} Q^T T'
            let lhs = v.columns(0, k) * &t;
            let z = t0.clone().lu().solve(&(v0.columns(0, k).transpose() * &lhs)).unwrap();
            assert!((&z.transpose() * &z - DMatrix::<f64>::identity(k, k)).amax() < 1e-10);
            let rhs_h = &v * &h;
            assert!((&v0 * &h0 * &z - rhs_h).amax() < 1e-10);
        }
    }

    #[test]
    fn recover_is_identity_on_restored_shape() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let k = 5;
        let mut t = DMatrix::zeros(k, k);
        let mut h = DMatrix::zeros(k + 1, k);
        for j in 0..k {
            for i in 0..=(j + 1).min(k - 1) {
                h[(i, j)] = rng.random_range(-1.0..1.0);
                if i <= j {
                    t[(i, j)] = rng.random_range(-1.0..1.0);
                }
            }
        }
        h[(k, k - 1)] = 0.4;
        let mut v = DMatrix::identity(k + 2, k + 1);
        let (t0, h0) = (t.clone(), h.clone());
        assert_eq!(recover(&mut v, &mut t, &mut h, 0), 0);
        assert_eq!(t, t0);
        assert_eq!(h, h0);
    }

    #[test]
    fn lock_cases() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let p = random_t_even(4, 3, &mut rng);
        let mut st = SolverState::new(&p, SolverConfig::new(2)).unwrap();
        st.expand_phase().unwrap();
        st.schur_reorder().unwrap();
        let m = st.dec.m();
        // nothing converged yet: force large residuals
        for j in 0..m {
            st.dec.h[(m, j)] = 0.3;
        }
        assert_eq!(st.lock_phase(), 0);
        let (s0, z0) = st.blocks[0];
        for j in s0..s0 + z0 {
            st.dec.h[(m, j)] = 1e-12;
        }
        let r = st.lock_phase();
        assert_eq!(r, z0);
        assert!((s0..s0 + z0).all(|j| st.dec.h[(m, j)] == 0.0));
        assert_eq!(st.locked(), z0);
    }

    #[test]
    fn lock_two_by_two_block() {
        // a pencil with a complex-conjugate pair leading
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let p = random_t_even(4, 3, &mut rng);
        let mut st = SolverState::new(&p, SolverConfig::new(2)).unwrap();
        st.dec = RationalKrylovDecomposition::from_parts(
            DMatrix::identity(st.lin.dim(), 4),
            DMatrix::identity(3, 3),
            DMatrix::from_row_slice(4, 3, &[0.0, 1.0, 0.3, -1.0, 0.0, 0.2, 0.0, 0.0, 5.0, 6e-11, 8e-11, 0.5]),
            0,
        )
        .unwrap();
        st.blocks = vec![(0, 2), (2, 1)];
        assert_eq!(st.lock_phase(), 2);
        assert_eq!(st.pairs.len(), 2);
        assert!((st.pairs[0].mu - st.pairs[1].mu.conj()).norm() < 1e-15);
    }

    #[test]
    fn shift_strategies() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let p = random_t_even(4, 3, &mut rng);
        let setup = |strategy| {
            let mut st = SolverState::new(&p, SolverConfig { strategy, ..SolverConfig::new(1) }).unwrap();
            st.dec = RationalKrylovDecomposition::from_parts(
                DMatrix::identity(st.lin.dim(), 3),
                DMatrix::identity(2, 2),
                DMatrix::from_row_slice(3, 2, &[4.0, 0.5, 0.0, 1.0, 1e-7, 0.2]),
                0,
            )
            .unwrap();
            st.blocks = vec![(0, 1), (1, 1)];
            st
        };
        let mut st = setup(ShiftStrategy::Aggressive);
        assert_eq!(st.choose_shift(), c(2.0, 0.0));
        let mut st = setup(ShiftStrategy::Lazy);
        assert_eq!(st.choose_shift(), c(0.5, 2.0));
        let mut st = setup(ShiftStrategy::Fixed);
        assert_eq!(st.choose_shift(), c(0.5, 2.0));
        let mut st = setup(ShiftStrategy::Target(c(0.0, 1.5)));
        assert_eq!(st.choose_shift(), c(0.0, 1.5));
        let mut st = setup(ShiftStrategy::Lazy);
        st.dec.h[(2, 0)] = 1e-3;
        assert_eq!(st.choose_shift(), c(2.0, 0.0));
    }

    #[test]
    fn truncation_respects_two_by_two_blocks() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let p = random_t_even(4, 3, &mut rng);
        let mut st = SolverState::new(&p, SolverConfig { extension: 2, ..SolverConfig::new(2) }).unwrap();
        let dim = st.lin.dim();
        let mut h = DMatrix::zeros(5, 4);
        for j in 0..4 {
            h[(j, j)] = 1.0 + j as f64;
            h[(4, j)] = 0.5;
        }
        h[(2, 1)] = -3.0;
        h[(1, 2)] = 3.0;
        st.dec = RationalKrylovDecomposition::from_parts(DMatrix::identity(dim, 5), DMatrix::identity(4, 4), h, 0).unwrap();
        st.blocks = vec![(0, 1), (1, 2), (3, 1)];
        st.truncate_phase();
        assert_eq!(st.dec.m(), 3);
        assert_eq!(st.dec.v().column(3), DMatrix::<f64>::identity(dim, 5).column(4));

        st.dec = RationalKrylovDecomposition::from_parts(
            DMatrix::identity(dim, 5),
            DMatrix::identity(4, 4),
            DMatrix::from_fn(5, 4, |i, j| if i == j || i == 4 { 1.0 } else { 0.0 }),
            0,
        )
        .unwrap();
        st.blocks = vec![(0, 1), (1, 1), (2, 1), (3, 1)];
        st.truncate_phase();
        assert_eq!(st.dec.m(), 2);
    }

    #[test]
    fn small_pencil_matches_dense_eigensolve() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mut coeffs = random_t_even(4, 1, &mut rng).coeffs().to_vec();
        coeffs[1] = DMatrix::from_row_slice(4, 4, &[0.0, 2.0, 0.0, 0.3, -2.0, 0.0, 0.1, 0.0, 0.0, -0.1, 0.0, 1.5, -0.3, 0.0, -1.5, 0.0]);
        let p = MatrixPolynomial::new(coeffs).unwrap();
        let res = run(&p, &SolverConfig::new(2)).unwrap();
        let oracle = dense_polyeig_oracle(&p, 600).unwrap();
        let got = res.eigenvalues();
        assert_eq!(got.len(), 4);
        for z in &got {
            let (w, d) = oracle.nearest(*z).unwrap();
            assert!(d <= 1e-8 * z.norm(), "{z} vs {w}");
        }
    }

    #[test]
    fn reciprocals_map_values() {
        let r = EigenResult {
            finite_pairs: vec![
                FinitePair { mu: c(0.0, 2.0), theta: c(-4.0, 0.0), residual: 0.0, cycle: 1 },
                FinitePair { mu: c(0.0, 0.0), theta: c(0.0, 0.0), residual: 0.0, cycle: 1 },
            ],
            ..Default::default()
        };
        let q = r.reciprocals();
        assert_eq!(q.infinite_count, 1);
        assert_eq!(q.finite_pairs.len(), 1);
        assert!((q.finite_pairs[0].mu - c(0.0, -0.5)).norm() < 1e-15);
    }
}
