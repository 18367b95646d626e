//! Dense real-matrix kernels: LU solve and determinant, matrix exponential
//! and its Fréchet derivative, SVD and spectral-radius estimation.
//!
//! All matrices here are small (a few tens of rows at most), so everything
//! is dense and single-threaded.

mod expm;
mod lu;
mod mat;
mod radius;
mod svd;

pub use expm::{expm, expm_frechet, THETA_13};
pub use lu::{det, lu_solve, Lu, PIVOT_TOL};
pub(crate) use lu::{lu_in_place, lu_solve_in_place, lu_solve_t_in_place};
pub(crate) use mat::dot;
pub use mat::Mat;
pub use radius::{spectral_radius, SpectralRadius};
pub use svd::{norm2, svd, Svd};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum LinalgError {
    #[error("dimension mismatch: expected {}x{}, got {}x{}", expected.0, expected.1, got.0, got.1)]
    DimensionMismatch {
        expected: (usize, usize),
        got: (usize, usize),
    },
    #[error("matrix must be square, got {rows}x{cols}")]
    NotSquare { rows: usize, cols: usize },
    #[error("data length mismatch: expected {expected}, got {got}")]
    InvalidData { expected: usize, got: usize },
    #[error("matrix contains non-finite entries")]
    NonFinite,
    #[error("matrix is singular")]
    SingularMatrix,
    #[error("overflow in matrix exponential")]
    Overflow,
}
