use statrs::function::erf::erfc;

use super::budget::DpBudget;
use crate::error::{Error, Result};
use crate::numerics::{CVector, HermitianMatrix};

/// Margin below which a run at the active privacy constraint is still
/// accepted (floating-point noise at equality).
pub const THEOREM1_SLACK: f64 = 1e-9;

const LN_SQRT_PI: f64 = 0.572_364_942_924_700_1;

/// `C(x) = sqrt(pi) * x * exp(x^2)`.
pub fn c_function(x: f64) -> Result<f64> {
    if !(x > 0.0) {
        return Err(Error::DomainError(format!("C(x) requires x > 0, got {x}")));
    }
    Ok(std::f64::consts::PI.sqrt() * x * (x * x).exp())
}

/// Inverse of [`c_function`].
///
/// Works on `ln C(x) = ln sqrt(pi) + ln x + x^2`, which is increasing and
/// never overflows: the bracket `[1e-12, 1]` is grown geometrically, bisected,
/// and the root polished with Newton steps.
pub fn c_inverse(y: f64) -> Result<f64> {
    if !(y > 0.0) || !y.is_finite() {
        return Err(Error::DomainError(format!("C^-1(y) requires finite y > 0, got {y}")));
    }
    let target = y.ln();
    let g = |x: f64| LN_SQRT_PI + x.ln() + x * x - target;

    let mut lo = 1e-12;
    let mut hi = 1.0;
    while g(lo) > 0.0 {
        hi = lo;
        lo *= 1e-3;
        if lo < 1e-300 {
            break;
        }
    }
    while g(hi) < 0.0 {
        lo = hi;
        hi *= 2.0;
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if g(mid) < 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-10 * hi {
            break;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..8 {
        let step = g(x) / (1.0 / x + 2.0 * x);
        let next = x - step;
        if !(next > 0.0) {
            break;
        }
        x = next;
        if step.abs() <= 1e-16 * x {
            break;
        }
    }
    Ok(x)
}

/// `(sqrt(eps + c^2) - c)^2` with `c = C^{-1}(1/delta)`, evaluated in the
/// cancellation-free form `eps^2 / (sqrt(eps + c^2) + c)^2`.
pub fn dp_radius(epsilon: f64, delta: f64) -> f64 {
    let c = c_inverse(1.0 / delta).expect("delta in (0, 1) gives 1/delta > 0");
    let denom = (epsilon + c * c).sqrt() + c;
    (epsilon / denom).powi(2)
}

/// Per-symbol variance of the adversary's effective noise,
/// `eta * rho^T R conj(rho) + n_a`.
pub fn effective_noise_variance(eta: f64, rho: &CVector, r: &HermitianMatrix, n_a: f64) -> Result<f64> {
    if rho.len() != r.dim() {
        return Err(Error::InvalidInput(format!(
            "rho has {} entries, covariance is {}x{}",
            rho.len(),
            r.dim(),
            r.dim()
        )));
    }
    let conj: Vec<_> = rho.iter().map(|z| z.conj()).collect();
    let quad = r.quadratic_form(&conj);
    let scale = r.frobenius_norm() * rho.iter().map(|z| z.norm_sqr()).sum::<f64>();
    if quad < -1e-10 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::NotPsd { min_eigenvalue: quad });
    }
    Ok(eta * quad.max(0.0) + n_a)
}

/// Upper bound `2 * gamma * sqrt(eta) * rho_max` on the change of the
/// adversary's noiseless observation when one sample changes.
pub fn sensitivity(eta: f64, gamma: f64, rho_max: f64) -> f64 {
    2.0 * gamma * eta.sqrt() * rho_max
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DpRoundAccount {
    pub round: usize,
    pub sensitivity: f64,
    pub noise_variance: f64,
    pub consumed: f64,
}

impl DpRoundAccount {
    pub fn new(round: usize, sensitivity: f64, noise_variance: f64) -> Result<Self> {
        if !(noise_variance > 0.0) {
            return Err(Error::InvalidInput(format!(
                "effective noise variance must be positive, got {noise_variance}"
            )));
        }
        Ok(Self {
            round,
            sensitivity,
            noise_variance,
            consumed: sensitivity * sensitivity / noise_variance,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Theorem1Check {
    /// Strict `tau < radius`.
    pub satisfied: bool,
    pub tau: f64,
    pub margin: f64,
}

impl Theorem1Check {
    /// Accepts runs sitting on the constraint up to [`THEOREM1_SLACK`].
    pub fn accepted(&self) -> bool {
        self.margin >= -THEOREM1_SLACK
    }
}

pub fn check_theorem1(accounts: &[DpRoundAccount], budget: &DpBudget) -> Result<Theorem1Check> {
    if accounts.len() > budget.total_rounds() {
        return Err(Error::InvalidInput(format!(
            "{} accounts for a {}-round budget",
            accounts.len(),
            budget.total_rounds()
        )));
    }
    let tau: f64 = accounts.iter().map(|a| a.consumed).sum();
    let radius = budget.radius();
    Ok(Theorem1Check {
        satisfied: tau < radius,
        tau,
        margin: radius - tau,
    })
}

/// `P(|Z| > eps)` for `Z ~ N(tau, 2 tau)`, the distribution of the privacy
/// loss when every round sits at its sensitivity bound.
pub fn analytic_tail_probability(tau: f64, epsilon: f64) -> f64 {
    if tau <= 0.0 {
        return if epsilon < 0.0 { 1.0 } else { 0.0 };
    }
    let s = 2.0 * tau.sqrt();
    0.5 * (erfc((epsilon - tau) / s) + erfc((epsilon + tau) / s))
}

/// The Gaussian-tail upper estimate `exp(-q^2) / (q sqrt(pi)) = 1 / C(q)`
/// with `q = (eps - tau) / (2 sqrt(tau))`; infinite when `tau >= eps`.
pub fn appendix_tail_bound(tau: f64, epsilon: f64) -> f64 {
    let q = (epsilon - tau) / (2.0 * tau.sqrt());
    match c_function(q) {
        Ok(c) => 1.0 / c,
        Err(_) => f64::INFINITY,
    }
}
