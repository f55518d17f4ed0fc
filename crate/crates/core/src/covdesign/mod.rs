//! Per-round perturbation covariance design.
//!
//! Each round solves
//!
//! ```text
//! minimize  b
//! s.t.      (gamma rho_max)^2 <= (R_t / 4) (rho^T R rho^* + N_a b)
//!           G_k^2 + d R_kk   <= b |h_k|^2 P        for every k
//!           R = V S V^H,  S >= 0
//! ```
//!
//! where `V` spans the zero-sum subspace, then sets `eta = 1/b`. The diagonal
//! baseline drops `V` and keeps `R` diagonal.

mod barrier;
mod cov;
mod dual;
mod p1;
mod sampling;

pub use cov::{lift, reduce_zero_sum, CovMatrix};
pub use p1::{
    solve_p1, solve_p1_uncorrelated, solve_p1_warm, DesignInputs, PlanRecord, PlanResiduals, RoundPlan,
    WarmStart,
};
pub use sampling::sample_perturbations;
