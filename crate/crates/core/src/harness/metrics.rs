//! Signal-quality figures seen by the server and the adversary.

use crate::covdesign::CovMatrix;
use crate::error::{Error, Result};
use crate::numerics::CVector;
use crate::privacy::{effective_noise_variance, GradientBounds};

use super::config::Scheme;

fn power_sum(grad_norms: &[f64]) -> f64 {
    grad_norms.iter().map(|g| g * g).sum()
}

fn trace(r: Option<&CovMatrix>) -> f64 {
    r.map_or(0.0, |c| c.diagonal_entries().iter().sum())
}

/// Server SNR. Perturbations cancel under the correlated scheme, so only the
/// uncorrelated scheme pays `eta * tr(R)` in the denominator.
pub fn snr_server(scheme: Scheme, eta: f64, grad_norms: &[f64], r: Option<&CovMatrix>, n0: f64, d: usize) -> f64 {
    let ps = power_sum(grad_norms);
    let extra = match scheme {
        Scheme::Uncorrelated => eta * trace(r),
        Scheme::Nominal | Scheme::Correlated => 0.0,
    };
    eta * ps / (d as f64 * (extra + n0))
}

/// Per-user variant charging only the largest `R_kk`.
pub fn snr_server_alt(scheme: Scheme, eta: f64, grad_norms: &[f64], r: Option<&CovMatrix>, n0: f64, d: usize) -> f64 {
    let ps = power_sum(grad_norms);
    let extra = match (scheme, r) {
        (Scheme::Uncorrelated, Some(c)) => eta * c.diagonal_entries().into_iter().fold(0.0, f64::max),
        _ => 0.0,
    };
    eta * ps / (d as f64 * (extra + n0))
}

/// Adversary SINR `eta P_a / (d m^2)` with `P_a = sum |rho_k|^2 ||grad F_k||^2`.
pub fn sinr_adversary(
    scheme: Scheme,
    eta: f64,
    rho: &CVector,
    grad_norms: &[f64],
    r: Option<&CovMatrix>,
    n_a: f64,
    d: usize,
) -> Result<f64> {
    if rho.len() != grad_norms.len() {
        return Err(Error::InvalidInput("rho and gradient norms differ in length".into()));
    }
    let pa: f64 = rho.iter().zip(grad_norms).map(|(z, g)| z.norm_sqr() * g * g).sum();
    let m2 = match (scheme, r) {
        (Scheme::Nominal, _) | (_, None) => n_a,
        (_, Some(c)) => effective_noise_variance(eta, rho, c.as_hermitian(), n_a)?,
    };
    Ok(eta * pa / (d as f64 * m2))
}

/// `eta_nom = P min |h_k|^2 / G_k^2` and `eta_pert = P min |h_k|^2 / (G_k^2 + d R_kk)`.
pub fn eta_closed_forms(h: &CVector, bounds: &GradientBounds, r: Option<&CovMatrix>, power: f64, d: usize) -> (f64, f64) {
    let diag = r.map(|c| c.diagonal_entries()).unwrap_or_else(|| vec![0.0; h.len()]);
    let mut nom = f64::INFINITY;
    let mut pert = f64::INFINITY;
    for (k, z) in h.iter().enumerate() {
        let g2 = bounds.per_user[k].powi(2);
        nom = nom.min(power * z.norm_sqr() / g2);
        pert = pert.min(power * z.norm_sqr() / (g2 + d as f64 * diag[k]));
    }
    (nom, pert)
}

pub fn to_db(x: f64) -> f64 {
    10.0 * x.log10()
}
