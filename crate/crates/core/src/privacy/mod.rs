//! Differential-privacy accounting at the eavesdropper.
//!
//! The adversary sees the gradient aggregate through its own channel plus an
//! effective Gaussian noise of per-symbol variance `m^2`. Per round the
//! consumed ratio is `(Delta / m)^2` with sensitivity
//! `Delta = 2 * gamma * sqrt(eta) * rho_max`; the run is `(eps, delta)`-DP
//! when the accumulated ratio stays strictly below the radius
//! `(sqrt(eps + c^2) - c)^2`, `c = C^{-1}(1/delta)`, `C(x) = sqrt(pi) x e^{x^2}`.

mod accountant;
mod audit;
mod budget;

pub use accountant::{
    analytic_tail_probability, appendix_tail_bound, c_function, c_inverse, check_theorem1, dp_radius,
    effective_noise_variance, sensitivity, DpRoundAccount, Theorem1Check, THEOREM1_SLACK,
};
pub use audit::{monte_carlo_dp_audit, AuditReport, AuditRound, MIN_AUDIT_DRAWS};
pub use budget::{AllocationMode, DpBudget};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Sample-wise gradient bound `gamma` and per-user local gradient bounds `G_k`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GradientBounds {
    pub gamma: f64,
    pub per_user: Vec<f64>,
}

impl GradientBounds {
    pub fn new(gamma: f64, per_user: Vec<f64>) -> Result<Self> {
        if !(gamma > 0.0) || per_user.iter().any(|g| !(*g > 0.0)) {
            return Err(Error::InvalidInput("gradient bounds must be positive".into()));
        }
        Ok(Self { gamma, per_user })
    }

    /// Checks `G_k <= samples_per_user * gamma` (triangle inequality).
    pub fn consistent_with(&self, samples_per_user: usize) -> bool {
        let cap = samples_per_user as f64 * self.gamma;
        self.per_user.iter().all(|&g| g <= cap * (1.0 + 1e-12))
    }
}
