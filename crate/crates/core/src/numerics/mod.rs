//! Shared numerical kernels: chi-square distribution functions, dense
//! linear solves, determinants, and the least-squares residual projector
//! used by the test statistic.
//!
//! All operations are pure functions of their inputs; nothing here holds
//! shared mutable state.

mod linalg;
mod special;

pub use linalg::{
    determinant, projection_residual, singular_values, solve_gram, sym_eigenvalues,
    DiagCovariance, GramSolver, Matrix, Vector, GRAM_PIVOT_THRESHOLD,
};
pub use special::{
    chi_square_cdf, chi_square_quantile, chi_square_sf, gamma_p, gamma_q, ln_gamma, MAX_DF,
};
