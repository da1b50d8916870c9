//! Dense linear-algebra kernels.
//!
//! Factorizations and triangular solves take a [`PrecisionLevel`] and round
//! every intermediate result to it. Reductions run left to right in index
//! order so results are reproducible bit for bit.
//!
//! [`PrecisionLevel`]: crate::precision::PrecisionLevel

mod condest;
mod eigen;
mod lu;
mod matrix;
mod stationary;

pub use condest::{condest_1, condest_1_detailed, CondEstimate, MAX_CONDEST_SWEEPS};
pub use eigen::{dominant_left_eigenpair, spectral_norm_est, subdominant_modulus};
pub use lu::{lu_factor, lu_solve, lu_solve_scaled, LuFactors};
pub use matrix::{axpy, dist_1, dot, norm_1, norm_2, norm_inf, DenseMatrix, MatrixView};
pub use stationary::{
    check_row_stochastic, clamp_and_normalize, replacement_system, stationary_oracle, unit_last,
    ROW_SUM_TOL,
};
pub(crate) use stationary::check_replacement_factors;
