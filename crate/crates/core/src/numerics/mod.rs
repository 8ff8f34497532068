//! Deterministic numeric kernels shared by every other module: dense
//! vectors and matrices, seeded splittable randomness, a symmetric
//! eigensolver and a central-difference gradient oracle.

mod diff;
mod linalg;
mod rng;

pub use diff::{finite_diff_grad, DEFAULT_FD_STEP};
pub use linalg::{
    axpy, dot, norm, norm_sq, relative_error, spectral_norm, sym_eigvals, KahanSum, Matrix,
    SYMMETRY_TOL,
};
pub use rng::{dirichlet_sample, gauss_vector, stream_id, Purpose, RngStream};
