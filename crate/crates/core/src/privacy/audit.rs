use rayon::prelude::*;

use super::accountant::{analytic_tail_probability, effective_noise_variance, sensitivity};
use super::budget::DpBudget;
use crate::error::{Error, Result};
use crate::numerics::{CVector, HermitianMatrix, RngStream};

pub const MIN_AUDIT_DRAWS: usize = 10_000;

const SHARDS: usize = 64;

/// One round of a privacy plan as seen by the adversary.
#[derive(Debug, Clone)]
pub struct AuditRound {
    pub eta: f64,
    pub rho: CVector,
    pub covariance: HermitianMatrix,
    pub n_a: f64,
    pub gamma: f64,
    pub rho_max: f64,
}

impl AuditRound {
    pub fn noise_variance(&self) -> Result<f64> {
        effective_noise_variance(self.eta, &self.rho, &self.covariance, self.n_a)
    }

    pub fn sensitivity(&self) -> f64 {
        sensitivity(self.eta, self.gamma, self.rho_max)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditReport {
    pub draws: usize,
    pub failures: usize,
    pub failure_rate: f64,
    pub tau: f64,
    /// `P(|L| > eps)` under the exact Gaussian law of the loss.
    pub analytic_rate: f64,
    /// Three binomial standard errors around the analytic rate.
    pub three_sigma: f64,
}

/// Monte-Carlo estimate of `P(|L| > eps)` for the worst-case neighbour pair.
///
/// Per round the difference vector `v` has norm `Delta` and points along a
/// fixed unit vector, so `L = sum_t (2 Re{r^H v} + |v|^2) / m^2` only sees the
/// component of `r ~ CN(0, m^2 I)` along that vector; the orthogonal components
/// do not enter and are not drawn. Draws are split over fixed shards with
/// their own derived streams, so the count does not depend on thread count.
pub fn monte_carlo_dp_audit(
    rounds: &[AuditRound],
    budget: &DpBudget,
    rng: &RngStream,
    draws: usize,
) -> Result<AuditReport> {
    if draws < MIN_AUDIT_DRAWS {
        return Err(Error::InvalidInput(format!(
            "audit needs at least {MIN_AUDIT_DRAWS} draws, got {draws}"
        )));
    }
    if rounds.len() > budget.total_rounds() {
        return Err(Error::InvalidInput("more audit rounds than budgeted rounds".into()));
    }
    let mut params = Vec::with_capacity(rounds.len());
    let mut tau = 0.0;
    for r in rounds {
        let m2 = r.noise_variance()?;
        if !(m2 > 0.0) {
            return Err(Error::InvalidInput("effective noise variance must be positive".into()));
        }
        let delta = r.sensitivity();
        tau += delta * delta / m2;
        params.push((delta, m2));
    }
    let eps = budget.epsilon;

    let failures: usize = (0..SHARDS)
        .into_par_iter()
        .map(|shard| {
            let n = draws / SHARDS + usize::from(shard < draws % SHARDS);
            let mut stream = rng.derive(&format!("audit-shard{shard}"));
            let mut count = 0usize;
            for _ in 0..n {
                let mut loss = 0.0;
                for &(delta, m2) in &params {
                    if delta == 0.0 {
                        continue;
                    }
                    // Re{r^H v} = delta * Re{r_1}, Re{r_1} ~ N(0, m^2 / 2)
                    let re = (m2 / 2.0).sqrt() * stream.standard_normal();
                    loss += (2.0 * delta * re + delta * delta) / m2;
                }
                if loss.abs() > eps {
                    count += 1;
                }
            }
            count
        })
        .collect::<Vec<_>>()
        .into_iter()
        .sum();

    let analytic_rate = analytic_tail_probability(tau, eps);
    Ok(AuditReport {
        draws,
        failures,
        failure_rate: failures as f64 / draws as f64,
        tau,
        analytic_rate,
        three_sigma: 3.0 * (analytic_rate * (1.0 - analytic_rate) / draws as f64).sqrt(),
    })
}
