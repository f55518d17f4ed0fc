//! Over-the-air federated learning with zero-sum spatially correlated
//! perturbations.
//!
//! Users pre-invert their uplink channels and add perturbations drawn from a
//! covariance `R` whose all-ones quadratic form vanishes: the perturbations
//! cancel in the superposed signal at the edge server but not at an
//! eavesdropper whose channel is misaligned. Each round, `R` and the power
//! scaling `eta` are co-designed by a small convex program subject to a
//! per-round differential-privacy budget and per-user power limits.
//!
//! Module map:
//! - [`numerics`]: Hermitian eigen-decomposition, PSD square root, seeded RNG.
//! - [`channel`]: Rician block fading for the server and adversary links.
//! - [`privacy`]: DP radius, budget split, sensitivity and audits.
//! - [`covdesign`]: the covariance / power design program and sampling.
//! - [`airlink`]: transmit, superposition and gradient estimation.
//! - [`learning`]: synthetic ridge-regression task and gradient descent.
//! - [`harness`]: experiment configuration, scheme comparison, CSV output.

#![allow(clippy::neg_cmp_op_on_partial_ord)] // `!(x > 0.0)` also rejects NaN.

pub mod airlink;
pub mod channel;
pub mod covdesign;
pub mod error;
pub mod harness;
pub mod learning;
pub mod numerics;
pub mod privacy;

pub use error::{Error, Result};
pub use numerics::{CMatrix, CVector, Complex64, HermitianMatrix, RngStream};
