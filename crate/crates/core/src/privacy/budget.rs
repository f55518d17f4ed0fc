use rand_distr::{Distribution, Exp1};
use serde::{Deserialize, Serialize};

use super::accountant::dp_radius;
use crate::error::{Error, Result};
use crate::numerics::RngStream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum AllocationMode {
    #[default]
    Uniform,
    Dirichlet,
}

/// `(epsilon, delta)` target and its static split over `T` rounds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DpBudget {
    pub epsilon: f64,
    pub delta: f64,
    allocation: Vec<f64>,
}

impl DpBudget {
    pub fn new(epsilon: f64, delta: f64, allocation: Vec<f64>) -> Result<Self> {
        if !(epsilon > 0.0) || !epsilon.is_finite() {
            return Err(Error::ConfigError(format!("epsilon must be positive, got {epsilon}")));
        }
        if !(delta > 0.0 && delta < 1.0) {
            return Err(Error::ConfigError(format!("delta must lie in (0, 1), got {delta}")));
        }
        if allocation.is_empty() {
            return Err(Error::ConfigError("allocation needs at least one round".into()));
        }
        if allocation.iter().any(|&p| !(p > 0.0 && p <= 1.0)) {
            return Err(Error::ConfigError("allocation weights must lie in (0, 1]".into()));
        }
        let sum: f64 = allocation.iter().sum();
        if (sum - 1.0).abs() > 1e-12 {
            return Err(Error::ConfigError(format!("allocation sums to {sum}, not 1")));
        }
        Ok(Self {
            epsilon,
            delta,
            allocation,
        })
    }

    pub fn uniform(epsilon: f64, delta: f64, rounds: usize) -> Result<Self> {
        Self::new(epsilon, delta, vec![1.0 / rounds.max(1) as f64; rounds])
    }

    /// Weights drawn from a flat Dirichlet distribution.
    pub fn dirichlet(epsilon: f64, delta: f64, rounds: usize, rng: &mut RngStream) -> Result<Self> {
        let draws: Vec<f64> = (0..rounds)
            .map(|_| {
                let e: f64 = Exp1.sample(rng.inner());
                e.max(f64::MIN_POSITIVE)
            })
            .collect();
        let total: f64 = draws.iter().sum();
        let mut phi: Vec<f64> = draws.iter().map(|e| e / total).collect();
        // push rounding residue into the largest weight
        let resid = 1.0 - phi.iter().sum::<f64>();
        if let Some(max) = phi.iter_mut().max_by(|a, b| a.total_cmp(b)) {
            *max += resid;
        }
        Self::new(epsilon, delta, phi)
    }

    pub fn with_mode(epsilon: f64, delta: f64, rounds: usize, mode: AllocationMode, rng: &mut RngStream) -> Result<Self> {
        match mode {
            AllocationMode::Uniform => Self::uniform(epsilon, delta, rounds),
            AllocationMode::Dirichlet => Self::dirichlet(epsilon, delta, rounds, rng),
        }
    }

    pub fn total_rounds(&self) -> usize {
        self.allocation.len()
    }

    pub fn allocation(&self) -> &[f64] {
        &self.allocation
    }

    pub fn radius(&self) -> f64 {
        dp_radius(self.epsilon, self.delta)
    }

    /// Share of the radius granted to round `t` (1-based).
    pub fn round_radius(&self, t: usize) -> Result<f64> {
        if t == 0 || t > self.allocation.len() {
            return Err(Error::IndexOutOfRange {
                index: t,
                len: self.allocation.len(),
            });
        }
        Ok(self.allocation[t - 1] * self.radius())
    }
}
