use num_complex::Complex64;
use thiserror::Error;

use crate::krylovschur::EigenResult;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("malformed input: {0}")]
    Format(String),

    #[error("dimension mismatch: {0}")]
    Dimension(String),

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("polynomial is not T-even (relative symmetry defect {defect:e})")]
    NotTEven { defect: f64 },

    #[error("shift {zeta} lies on (or numerically at) the spectrum: pivot {pivot:e} below {threshold:e}")]
    ShiftOnSpectrum {
        zeta: Complex64,
        pivot: f64,
        threshold: f64,
    },

    #[error("matrix is singular to working precision (pivot {pivot:e})")]
    Singular { pivot: f64 },

    #[error("Krylov breakdown: residual {residual:e} relative to {scale:e}")]
    Breakdown { residual: f64, scale: f64 },

    #[error("QZ iteration did not converge within {iterations} sweeps")]
    QzNoConvergence { iterations: usize },

    #[error("dense size {size} exceeds cap {cap}")]
    CapExceeded { size: usize, cap: usize },

    #[error("no convergence after {cycles} cycles ({} K-level values locked)", partial.finite_pairs.len())]
    NoConvergence {
        cycles: usize,
        partial: Box<EigenResult>,
    },
}

impl Error {
    pub(crate) fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }
}
