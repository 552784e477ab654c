pub mod complex_serde;
pub mod densekernels;
pub mod error;
pub mod krylovschur;
pub mod linearize;
pub mod matpoly;
pub mod ratarnoldi;
pub mod scalar;
pub mod structsolve;

pub use error::{Error, Result};
pub use krylovschur::{run, run_observed, run_reverse, CycleTrace, EigenResult, FinitePair, Phase, Selector, ShiftStrategy, SolverConfig, SolverState};
pub use linearize::EvenLinearization;
pub use matpoly::{generate_butterfly, generate_gyroscopic, random_t_even, MatrixPolynomial};
pub use ratarnoldi::RationalKrylovDecomposition;
pub use structsolve::{FactorCache, ShiftClass, ShiftedFactorization};
