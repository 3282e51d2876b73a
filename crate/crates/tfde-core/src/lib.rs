//! Numerical kernels for one-dimensional tempered fractional PDEs.
//!
//! * [`tempered_calculus`]: tempered Riemann–Liouville integrals and
//!   derivatives, closed-form actions on truncated powers and hat functions.
//! * [`fem_space`]: meshes, linear/quadratic bases, Toeplitz stiffness
//!   assembly for Galerkin and Petrov–Galerkin discretizations, loads and
//!   error norms.
//! * [`krylov_toeplitz`]: FFT-based Toeplitz matvec, GMRES, dense and banded
//!   LU, condition numbers.
//! * [`wavelet_precond`]: hierarchical-basis wavelet transform and the
//!   diagonally scaled preconditioned operator.
//! * [`mittag_leffler`]: scalar Mittag-Leffler function, CF/PC/DTI contour
//!   rules, matrix-function application, source handling and an L1 baseline.
//!
//! Linear-algebra building blocks are generic over [`Scalar`] (real or
//! complex, any float width); the crate root exposes `f64` aliases.

pub mod error;
pub mod fem_space;
pub mod krylov_toeplitz;
pub mod mittag_leffler;
pub mod quadrature;
pub mod special;
pub mod tempered_calculus;
pub mod wavelet_precond;

pub use error::{Result, TfdeError};
pub use krylov_toeplitz::Scalar;
pub use num_complex::Complex64 as C64;

/// Real Toeplitz operator in double precision.
pub type Toeplitz = krylov_toeplitz::ToeplitzOperator<f64>;

/// 2×2 block Toeplitz operator in double precision.
pub type BlockToeplitz = krylov_toeplitz::BlockToeplitzOperator<f64>;
/// Dense row-major matrix, real.
pub type DenseMatrix = krylov_toeplitz::Dense<f64>;
/// Dense row-major matrix, complex.
pub type DenseMatrixC = krylov_toeplitz::Dense<C64>;
/// Banded matrix, real.
pub type BandMatrix = krylov_toeplitz::Banded<f64>;
