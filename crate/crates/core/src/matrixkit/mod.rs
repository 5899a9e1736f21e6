//! Dense linear algebra for the rest of the crate: row-major matrices,
//! orthonormal bases, least-squares and interpolating solvers, symmetric
//! spectra, and a small binary container format.

mod backend;
mod dense;
mod error;
pub mod io;
mod orthonormal;
mod solve;

pub use dense::{Matrix, Vector};
pub use error::{LinalgError, Result};
pub use orthonormal::{
    orthonormalize, projection_residual, OrthonormalBasis, DEFAULT_DROP_TOL, ORTHONORMALITY_TOL,
};
pub use solve::{
    generalized_eigenvalues, least_squares, min_norm_interpolant, min_norm_interpolant_with,
    ordinary_least_squares, singular_values, spd_spectrum, spectral_norm, sqrt_psd,
    symmetric_eigen, DEFAULT_RCOND,
};
