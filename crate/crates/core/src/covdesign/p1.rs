use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::barrier::{BarrierOptions, BarrierProblem, BarrierSolution, ConMat, LinearConstraint};
use super::cov::{lift, reduce_zero_sum, CovMatrix};
use crate::channel::{effective_gains, ChannelState};
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, HermitianMatrix};
use crate::privacy::GradientBounds;

/// Everything the round-`t` design needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignInputs {
    pub round: usize,
    pub channel: ChannelState,
    pub bounds: GradientBounds,
    /// Complex symbols per transmission (`ceil(model_dim / 2)`).
    pub symbols: usize,
    pub power: f64,
    pub round_dp_radius: f64,
    pub adversary_noise: f64,
    pub mu: f64,
    pub l: f64,
}

impl DesignInputs {
    pub fn validate(&self) -> Result<()> {
        let k = self.channel.num_users();
        if k == 0 {
            return Err(Error::InvalidInput("no users".into()));
        }
        if self.bounds.per_user.len() != k {
            return Err(Error::InvalidInput(format!(
                "{} gradient bounds for {k} users",
                self.bounds.per_user.len()
            )));
        }
        if !(self.bounds.gamma > 0.0) || self.bounds.per_user.iter().any(|g| !(*g > 0.0 && g.is_finite())) {
            return Err(Error::InvalidInput("gradient bounds must be positive".into()));
        }
        if self.symbols == 0 {
            return Err(Error::InvalidInput("symbol count must be positive".into()));
        }
        if !(self.power > 0.0) || !(self.round_dp_radius > 0.0) || !(self.adversary_noise >= 0.0) {
            return Err(Error::InvalidInput("power and radius must be positive, N_a non-negative".into()));
        }
        if !(self.mu > 0.0 && self.mu <= self.l) {
            return Err(Error::InvalidInput("rate constants need 0 < mu <= L".into()));
        }
        Ok(())
    }

    /// `(1 - mu/L)^{-t}`, the reporting weight of round `t`.
    pub fn objective_weight(&self) -> f64 {
        (1.0 - self.mu / self.l).powi(-(self.round as i32))
    }

    /// Smallest `b` meeting every power constraint with `R = 0`.
    pub fn nominal_b(&self) -> f64 {
        self.channel
            .h
            .iter()
            .zip(&self.bounds.per_user)
            .map(|(h, g)| g * g / (h.norm_sqr() * self.power))
            .fold(0.0, f64::max)
    }
}

/// Scaled solver iterate kept for warm starts.
#[derive(Debug, Clone, PartialEq)]
pub struct WarmStart {
    x: CMatrix,
    beta: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundPlan {
    pub covariance: CovMatrix,
    pub eta: f64,
    pub b: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub solver_iterations: usize,
    pub power: f64,
    pub symbols: usize,
    warm: Option<WarmStart>,
}

/// Serialized plan: `R` row-major as `[re, im]` pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanRecord {
    pub users: usize,
    pub zero_sum: bool,
    pub covariance: Vec<[f64; 2]>,
    pub eta: f64,
    pub b: f64,
    pub objective: f64,
    pub kkt_residual: f64,
    pub solver_iterations: usize,
    pub power: f64,
    pub symbols: usize,
}

impl RoundPlan {
    /// No perturbation at the given scaling.
    pub fn unperturbed(k: usize, b: f64, power: f64, symbols: usize) -> Self {
        Self {
            covariance: CovMatrix::none(k),
            eta: 1.0 / b,
            b,
            objective: b,
            kkt_residual: 0.0,
            solver_iterations: 0,
            power,
            symbols,
            warm: None,
        }
    }

    pub fn users(&self) -> usize {
        self.covariance.dim()
    }

    pub fn to_record(&self) -> PlanRecord {
        let m = self.covariance.as_hermitian().as_matrix();
        let k = m.nrows();
        let mut cov = Vec::with_capacity(k * k);
        for i in 0..k {
            for j in 0..k {
                cov.push([m[(i, j)].re, m[(i, j)].im]);
            }
        }
        PlanRecord {
            users: k,
            zero_sum: self.covariance.is_zero_sum(),
            covariance: cov,
            eta: self.eta,
            b: self.b,
            objective: self.objective,
            kkt_residual: self.kkt_residual,
            solver_iterations: self.solver_iterations,
            power: self.power,
            symbols: self.symbols,
        }
    }

    pub fn from_record(rec: &PlanRecord) -> Result<Self> {
        let k = rec.users;
        if rec.covariance.len() != k * k || k == 0 {
            return Err(Error::InvalidInput("covariance array does not match user count".into()));
        }
        let m = CMatrix::from_fn(k, k, |i, j| {
            let [re, im] = rec.covariance[i * k + j];
            Complex64::new(re, im)
        });
        let h = HermitianMatrix::new(m)?;
        let covariance = if rec.zero_sum {
            CovMatrix::zero_sum(h)?
        } else {
            CovMatrix::diagonal(&h.diagonal())?
        };
        if !(rec.b > 0.0) || ((rec.eta * rec.b) - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidInput("plan needs b > 0 and eta = 1/b".into()));
        }
        Ok(Self {
            covariance,
            eta: rec.eta,
            b: rec.b,
            objective: rec.objective,
            kkt_residual: rec.kkt_residual,
            solver_iterations: rec.solver_iterations,
            power: rec.power,
            symbols: rec.symbols,
            warm: None,
        })
    }

    /// Constraint violations in original units (positive = violated).
    pub fn residuals(&self, inputs: &DesignInputs) -> Result<PlanResiduals> {
        let gains = effective_gains(&inputs.channel)?;
        let r = self.covariance.as_hermitian();
        let rho_conj: Vec<Complex64> = gains.rho.iter().map(|z| z.conj()).collect();
        let quad = r.quadratic_form(&rho_conj);
        let lhs = (inputs.bounds.gamma * gains.rho_max).powi(2);
        let privacy = lhs - inputs.round_dp_radius / 4.0 * (quad + inputs.adversary_noise * self.b);
        let diag = r.diagonal();
        let d = inputs.symbols as f64;
        let power = (0..r.dim())
            .map(|k| {
                let g = inputs.bounds.per_user[k];
                g * g + d * diag[k] - self.b * inputs.channel.h[k].norm_sqr() * inputs.power
            })
            .fold(f64::NEG_INFINITY, f64::max);
        Ok(PlanResiduals {
            privacy,
            power,
            zero_sum: if self.covariance.is_zero_sum() { self.covariance.null_residual() } else { 0.0 },
        })
    }

    /// Per-user worst-case expected transmit power `eta (G_k^2 + d R_kk) / |h_k|^2`.
    pub fn expected_power(&self, inputs: &DesignInputs) -> Vec<f64> {
        let diag = self.covariance.diagonal_entries();
        let d = self.symbols as f64;
        (0..diag.len())
            .map(|k| {
                let g = inputs.bounds.per_user[k];
                self.eta * (g * g + d * diag[k]) / inputs.channel.h[k].norm_sqr()
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PlanResiduals {
    pub privacy: f64,
    pub power: f64,
    pub zero_sum: f64,
}

impl PlanResiduals {
    pub fn within(&self, tol: f64) -> bool {
        self.privacy <= tol && self.power <= tol && self.zero_sum <= tol
    }
}

/// Correlated design on the zero-sum cone.
pub fn solve_p1(inputs: &DesignInputs) -> Result<RoundPlan> {
    solve(inputs, Structure::ZeroSum, None)
}

/// As [`solve_p1`], starting Newton from the previous round's iterate.
pub fn solve_p1_warm(inputs: &DesignInputs, previous: &RoundPlan) -> Result<RoundPlan> {
    solve(inputs, Structure::ZeroSum, previous.warm.as_ref())
}

/// Diagonal (independent per-user) baseline.
///
/// With `R` diagonal, privacy grows in every `R_kk` while user `k`'s power
/// row caps it at `(b |h_k|^2 P - G_k^2)/d`. At the caps privacy is affine in
/// `b`, so the optimal `b` is the larger of `b_nom` and that affine root. When
/// `b_nom` already has slack, the caps are scaled down uniformly until
/// privacy is tight.
pub fn solve_p1_uncorrelated(inputs: &DesignInputs) -> Result<RoundPlan> {
    inputs.validate()?;
    let k = inputs.channel.num_users();
    let gains = effective_gains(&inputs.channel)?;
    let lhs = (inputs.bounds.gamma * gains.rho_max).powi(2);
    let radius = inputs.round_dp_radius;
    let n_a = inputs.adversary_noise;
    let b_nom = inputs.nominal_b();
    let d = inputs.symbols as f64;
    let p = inputs.power;
    let need = 4.0 * lhs / radius;

    let rho2: Vec<f64> = gains.rho.iter().map(|z| z.norm_sqr()).collect();
    let h2: Vec<f64> = inputs.channel.h.iter().map(|z| z.norm_sqr()).collect();
    let g2: Vec<f64> = inputs.bounds.per_user.iter().map(|g| g * g).collect();
    let slope = (0..k).map(|i| rho2[i] * h2[i] * p / d).sum::<f64>() + n_a;
    let offset = (0..k).map(|i| rho2[i] * g2[i] / d).sum::<f64>();
    if !(slope > 0.0) {
        return Err(Error::InfeasibleInputs("no adversary gain and N_a = 0".into()));
    }
    let b = ((need + offset) / slope).max(b_nom);
    let caps: Vec<f64> = (0..k).map(|i| ((b * h2[i] * p - g2[i]) / d).max(0.0)).collect();
    let at_caps: f64 = (0..k).map(|i| rho2[i] * caps[i]).sum();
    let fill = if at_caps > 0.0 { ((need - n_a * b) / at_caps).clamp(0.0, 1.0) } else { 0.0 };
    let variances: Vec<f64> = caps.iter().map(|c| c * fill).collect();
    Ok(RoundPlan {
        covariance: CovMatrix::diagonal(&variances)?,
        eta: 1.0 / b,
        b,
        objective: inputs.objective_weight() * b,
        kkt_residual: 0.0,
        solver_iterations: 0,
        power: p,
        symbols: inputs.symbols,
        warm: None,
    })
}

/// The uncorrelated program through the generic barrier, as a cross-check
/// of the closed form.
#[cfg(test)]
pub(crate) fn solve_p1_uncorrelated_barrier(inputs: &DesignInputs) -> Result<RoundPlan> {
    solve(inputs, Structure::Diagonal, None)
}

#[derive(Clone, Copy, PartialEq)]
enum Structure {
    ZeroSum,
    #[cfg_attr(not(test), allow(dead_code))]
    Diagonal,
}

fn solve(inputs: &DesignInputs, structure: Structure, warm: Option<&WarmStart>) -> Result<RoundPlan> {
    inputs.validate()?;
    let k = inputs.channel.num_users();
    let gains = effective_gains(&inputs.channel)?;
    let gamma = inputs.bounds.gamma;
    let lhs = (gamma * gains.rho_max).powi(2);
    let radius = inputs.round_dp_radius;
    let n_a = inputs.adversary_noise;
    let b_nom = inputs.nominal_b();
    let weight = inputs.objective_weight();
    let d = inputs.symbols as f64;

    let finish_unperturbed = |b: f64| {
        let mut plan = RoundPlan::unperturbed(k, b, inputs.power, inputs.symbols);
        if structure == Structure::Diagonal {
            plan.covariance = CovMatrix::diagonal(&vec![0.0; k]).expect("zeros are valid");
        }
        plan.objective = weight * b;
        plan
    };

    // channel noise alone protects at the nominal power scaling
    if lhs <= radius / 4.0 * n_a * b_nom {
        return Ok(finish_unperturbed(b_nom));
    }

    if k == 1 && structure == Structure::ZeroSum {
        if !(n_a > 0.0) {
            return Err(Error::InfeasibleInputs("single user with N_a = 0".into()));
        }
        let b = (4.0 * lhs / (radius * n_a)).max(b_nom);
        return Ok(finish_unperturbed(b));
    }

    let h2max = inputs.channel.h.iter().map(|h| h.norm_sqr()).fold(0.0, f64::max);
    let b_scale = b_nom;
    let s_scale = b_nom * h2max * inputs.power / d;
    let priv_w = radius * s_scale / (4.0 * lhs);
    let priv_c = radius * n_a * b_scale / (4.0 * lhs);

    let (n, basis, constraints) = match structure {
        Structure::ZeroSum => {
            let v = reduce_zero_sum(k)?;
            let rho_conj = gains.rho.map(|z| z.conj());
            let w: CVector = v.adjoint() * rho_conj;
            let rho_norm2: f64 = gains.rho.iter().map(|z| z.norm_sqr()).sum();
            if !(n_a > 0.0) && w.norm_squared() <= 1e-20 * rho_norm2 {
                return Err(Error::InfeasibleInputs(
                    "N_a = 0 and the adversary gains are orthogonal to every zero-sum perturbation".into(),
                ));
            }
            let mut cons = vec![LinearConstraint {
                mat: ConMat::RankOne { v: w, weight: priv_w },
                c: priv_c,
                constant: 1.0,
            }];
            for kk in 0..k {
                let a: CVector = v.row(kk).adjoint();
                let weight = -d * s_scale / inputs.bounds.per_user[kk].powi(2);
                cons.push(power_constraint(inputs, kk, ConMat::RankOne { v: a, weight }, b_scale));
            }
            (k - 1, Some(v), cons)
        }
        Structure::Diagonal => {
            let diag: Vec<f64> = gains.rho.iter().map(|z| z.norm_sqr() * priv_w).collect();
            let mut cons = vec![LinearConstraint {
                mat: ConMat::Diag(diag),
                c: priv_c,
                constant: 1.0,
            }];
            for kk in 0..k {
                let mut e = vec![0.0; k];
                e[kk] = -d * s_scale / inputs.bounds.per_user[kk].powi(2);
                cons.push(power_constraint(inputs, kk, ConMat::Diag(e), b_scale));
            }
            (k, None, cons)
        }
    };
    let problem = BarrierProblem {
        n,
        diagonal: structure == Structure::Diagonal,
        constraints,
    };
    let sol = solve_barrier(&problem, warm)?;
    let b = b_scale * sol.beta;
    let s = &sol.x * Complex64::new(s_scale, 0.0);
    let covariance = match &basis {
        Some(v) => CovMatrix::zero_sum(lift(v, &s))?,
        None => CovMatrix::diagonal(&(0..k).map(|i| s[(i, i)].re.max(0.0)).collect::<Vec<_>>())?,
    };
    log::debug!(
        "P1 round {} solved: b = {b:e}, {} Newton steps, kkt {:e}",
        inputs.round,
        sol.newton_steps,
        sol.kkt_residual
    );
    Ok(RoundPlan {
        covariance,
        eta: 1.0 / b,
        b,
        objective: weight * b,
        kkt_residual: sol.kkt_residual,
        solver_iterations: sol.newton_steps,
        power: inputs.power,
        symbols: inputs.symbols,
        warm: Some(WarmStart { x: sol.x, beta: sol.beta }),
    })
}

/// Dual path first; when its certified gap is too loose the primal barrier
/// continues from the dual's last central point, or from scratch.
fn solve_barrier(problem: &BarrierProblem, warm: Option<&WarmStart>) -> Result<BarrierSolution> {
    let dual = problem.solve_dual();
    let start = match &dual {
        Ok((sol, _)) if sol.kkt_residual <= DUAL_ACCEPT => return dual.map(|d| d.0),
        Ok((_, central)) => {
            let s = problem.slacks(&central.x, central.beta);
            s.iter().all(|v| *v > 0.0).then(|| (central.x.clone(), central.beta, Some(central.tau)))
        }
        Err(e) => {
            log::debug!("dual path failed: {e}");
            None
        }
    };
    let (x0, beta0, initial_tau) = start.unwrap_or_else(|| {
        let (x, b) = warm
            .filter(|w| w.x.nrows() == problem.n)
            .and_then(|w| warm_point(problem, w))
            .unwrap_or_else(|| cold_point(problem));
        (x, b, None)
    });
    let opts = BarrierOptions {
        initial_tau,
        ..BarrierOptions::default()
    };
    match (problem.solve(x0, beta0, opts), dual) {
        (Ok(p), Ok((d, _))) => Ok(if d.kkt_residual < p.kkt_residual { d } else { p }),
        (Ok(p), Err(_)) => Ok(p),
        (Err(_), Ok((d, _))) => Ok(d),
        (Err(e), Err(_)) => Err(e),
    }
}

/// Largest certified relative gap accepted from the dual path.
const DUAL_ACCEPT: f64 = 1e-7;

/// `b |h_k|^2 P - G_k^2 - d R_kk >= 0`, divided by `G_k^2`.
fn power_constraint(inputs: &DesignInputs, k: usize, mat: ConMat, b_scale: f64) -> LinearConstraint {
    let g2 = inputs.bounds.per_user[k].powi(2);
    LinearConstraint {
        mat,
        c: b_scale * inputs.channel.h[k].norm_sqr() * inputs.power / g2,
        constant: 1.0,
    }
}

/// Smallest feasible `beta` for fixed `X`, or `None` when some
/// `beta`-free constraint fails.
fn beta_for(problem: &BarrierProblem, x: &CMatrix) -> Option<f64> {
    let mut beta: f64 = 0.0;
    for c in &problem.constraints {
        let rest = c.slack(x, 0.0);
        if c.c > 0.0 {
            beta = beta.max(-rest / c.c);
        } else if !(rest > 0.0) {
            return None;
        }
    }
    Some(beta)
}

fn cold_point(problem: &BarrierProblem) -> (CMatrix, f64) {
    let n = problem.n;
    let eye = CMatrix::identity(n, n);
    // size the identity so the perturbation alone covers twice the privacy need
    let gain = problem.constraints[0].slack(&eye, 0.0) + problem.constraints[0].constant;
    let alpha = if gain > 0.0 { 2.0 / gain } else { 1.0 };
    let x0 = eye * Complex64::new(alpha, 0.0);
    let beta = beta_for(problem, &x0).expect("identity start covers the privacy constraint");
    (x0, 1.5 * beta + 1.0)
}

fn warm_point(problem: &BarrierProblem, w: &WarmStart) -> Option<(CMatrix, f64)> {
    let n = problem.n;
    let tr = (0..n).map(|i| w.x[(i, i)].re).sum::<f64>().max(1e-12);
    let x0 = &w.x + CMatrix::identity(n, n) * Complex64::new(0.05 * tr / n as f64, 0.0);
    let beta = beta_for(problem, &x0)?;
    Some((x0, 1.05 * beta + 1e-3))
}
