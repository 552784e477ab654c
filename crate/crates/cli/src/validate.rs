//! Comparison of reported eigenvalues with the dense oracle.

use std::fmt;

use num_complex::Complex64;
use serde::Serialize;
use teven_core::densekernels::PolyEigenvalues;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Match {
    #[serde(with = "teven_core::complex_serde")]
    pub reported: Complex64,
    #[serde(with = "teven_core::complex_serde")]
    pub oracle: Complex64,
    pub rel_dev: f64,
    /// Decimal digits of agreement, `-log10(rel_dev)` capped at 16.
    pub digits: f64,
    pub flagged: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Comparison {
    pub tol: f64,
    pub matches: Vec<Match>,
    pub max_rel_dev: f64,
    pub min_digits: f64,
}

impl Comparison {
    pub fn passed(&self) -> bool {
        self.matches.iter().all(|m| !m.flagged)
    }

    pub fn flagged(&self) -> usize {
        self.matches.iter().filter(|m| m.flagged).count()
    }
}

pub fn digits_of_agreement(rel_dev: f64) -> f64 {
    if rel_dev <= 1e-16 {
        16.0
    } else {
        (-rel_dev.log10()).clamp(0.0, 16.0)
    }
}

/// Matches every reported value to its nearest oracle value.
pub fn compare(reported: &[Complex64], oracle: &PolyEigenvalues, tol: f64) -> Comparison {
    let matches: Vec<Match> = reported
        .iter()
        .map(|&z| {
            let (w, dist) = oracle.nearest(z).unwrap_or((Complex64::new(f64::NAN, f64::NAN), f64::INFINITY));
            let scale = w.norm().max(z.norm());
            let rel_dev = if dist == 0.0 { 0.0 } else { dist / scale };
            Match {
                reported: z,
                oracle: w,
                rel_dev,
                digits: digits_of_agreement(rel_dev),
                flagged: !(rel_dev <= tol),
            }
        })
        .collect();
    let max_rel_dev = matches.iter().map(|m| m.rel_dev).fold(0.0, f64::max);
    let min_digits = matches.iter().map(|m| m.digits).fold(16.0, f64::min);
    Comparison { tol, matches, max_rel_dev, min_digits }
}

impl fmt::Display for Comparison {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "{:>4}  {:>24} {:>24}  {:>24} {:>24}  {:>9}  {:>6}",
            "#", "re", "im", "oracle re", "oracle im", "rel dev", "digits"
        )?;
        for (i, m) in self.matches.iter().enumerate() {
            writeln!(
                f,
                "{:>4}  {:>24.16e} {:>24.16e}  {:>24.16e} {:>24.16e}  {:>9.2e}  {:>6.1}{}",
                i + 1,
                m.reported.re,
                m.reported.im,
                m.oracle.re,
                m.oracle.im,
                m.rel_dev,
                m.digits,
                if m.flagged { "  FLAGGED" } else { "" }
            )?;
        }
        write!(
            f,
            "{} values, max relative deviation {:.3e}, min digits {:.1}, {} flagged (tol {:.0e}): {}",
            self.matches.len(),
            self.max_rel_dev,
            self.min_digits,
            self.flagged(),
            self.tol,
            if self.passed() { "PASS" } else { "FAIL" }
        )
    }
}
