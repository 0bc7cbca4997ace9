mod lsqr;
mod monomial;
mod nullspace;
mod sparse;

pub use lsqr::{lstsq_with, min_norm_lstsq, LstsqOutcome, DEFAULT_LSQR_MAX_ITER, DEFAULT_LSQR_TOL};
pub use monomial::SignedPerm;
pub use nullspace::{
    default_tolerance, nullspace_orthonormal, ConstraintSystem, DENSE_NULLSPACE_CAP,
    MAX_STREAMED_COLS,
};
pub use sparse::{kron, kron_capped, SparseOperator, SparseVec, DEFAULT_KRON_CAP};
