//! Dense Hermitian linear algebra and seeded random sampling.
//!
//! Everything here works on small dense matrices (K at most a few dozen), so
//! the routines favour accuracy and simplicity over asymptotic speed.

mod cholesky;
mod eigen;
mod hermitian;
mod rng;

pub use cholesky::HermitianCholesky;
pub use eigen::{eig_hermitian, psd_project, psd_sqrt, HermitianEigen, PSD_TOLERANCE};
pub use hermitian::{CMatrix, CVector, HermitianMatrix};
pub use rng::RngStream;

pub use num_complex::Complex64;

/// Largest entry-wise modulus of `a - b`.
pub fn max_abs_diff(a: &CMatrix, b: &CMatrix) -> f64 {
    a.iter()
        .zip(b.iter())
        .map(|(x, y)| (x - y).norm())
        .fold(0.0, f64::max)
}
