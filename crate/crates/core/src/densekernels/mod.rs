//! Small dense kernels: LU, Givens rotations, QZ with reordering, SVD-based
//! nullspace and the companion-pencil reference solver.

pub mod givens;
pub mod lu;
pub mod nullspace;
pub mod oracle;
pub mod qz;

pub use givens::Givens;
pub use lu::{lu_solve, LuFactors};
pub use nullspace::nullspace;
pub use oracle::{dense_polyeig_oracle, PolyEigenvalues};
pub use qz::{qz, qz_eigenvalues, GenEig, GeneralizedSchur};
