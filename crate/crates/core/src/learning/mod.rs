//! Synthetic ridge-regression task trained by (noisy) gradient descent.
//!
//! Each sample contributes `f(w; mu, nu) = 1/2 (w^T mu - nu)^2 + zeta ||w||^2`.
//! Local losses `F_k` sum over a user's samples and the descent objective is
//! `F = (1/K) sum_k F_k`. The Gramian `Xi = U^T U + 2 D_tot zeta I` describes
//! `sum_k F_k`, so the constants that govern `F` itself are `mu/K` and `L/K`.

use std::ops::Range;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numerics::RngStream;
use crate::privacy::GradientBounds;

/// Default radius of the model ball the iterates are projected onto.
pub const DEFAULT_W_BOUND: f64 = 10.0;
/// Standard deviation of the label observation noise.
pub const LABEL_NOISE_STD: f64 = 0.2;
const MIN_DIM: usize = 5;

/// Which smoothness / PL constants drive the step size and the bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BoundScaling {
    /// `mu/K`, `L/K`: constants of the averaged objective `F`.
    #[default]
    Consistent,
    /// Gramian constants `mu`, `L` used as is.
    Literal,
}

impl BoundScaling {
    fn divisor(self, k: usize) -> f64 {
        match self {
            BoundScaling::Consistent => k as f64,
            BoundScaling::Literal => 1.0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct FlTask {
    users: usize,
    samples_per_user: usize,
    zeta: f64,
    data: DMatrix<f64>,
    labels: DVector<f64>,
    mu: f64,
    l: f64,
    w_star: DVector<f64>,
    f_star: f64,
    // Per-user U_k^T U_k, U_k^T nu_k and 1/2 ||nu_k||^2.
    grams: Vec<DMatrix<f64>>,
    cross: Vec<DVector<f64>>,
    label_energy: Vec<f64>,
}

/// Constants of a task, written into run logs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskSnapshot {
    pub users: usize,
    pub samples_per_user: usize,
    pub dim: usize,
    pub zeta: f64,
    pub mu: f64,
    pub l: f64,
    pub w_star: Vec<f64>,
    pub f_star: f64,
}

/// Draws a task with i.i.d. standard normal features and labels
/// `nu = mu_2 + 3 mu_5 + 0.2 z` (one-based feature indices).
pub fn generate_task(k: usize, samples_per_user: usize, d: usize, zeta: f64, rng: &mut RngStream) -> Result<FlTask> {
    generate_task_with_noise(k, samples_per_user, d, zeta, LABEL_NOISE_STD, rng)
}

pub fn generate_task_with_noise(
    k: usize,
    samples_per_user: usize,
    d: usize,
    zeta: f64,
    label_noise_std: f64,
    rng: &mut RngStream,
) -> Result<FlTask> {
    if d < MIN_DIM {
        return Err(Error::DimensionTooSmall(d));
    }
    let total = k * samples_per_user;
    let data = DMatrix::from_fn(total, d, |_, _| rng.standard_normal());
    let labels = DVector::from_fn(total, |i, _| {
        data[(i, 1)] + 3.0 * data[(i, 4)] + label_noise_std * rng.standard_normal()
    });
    FlTask::from_data(k, samples_per_user, data, labels, zeta)
}

impl FlTask {
    /// Builds a task from explicit data; user `k` owns rows `k D .. (k+1) D`.
    pub fn from_data(
        users: usize,
        samples_per_user: usize,
        data: DMatrix<f64>,
        labels: DVector<f64>,
        zeta: f64,
    ) -> Result<FlTask> {
        let total = users * samples_per_user;
        if users == 0 || samples_per_user == 0 {
            return Err(Error::InvalidInput("task needs at least one user and one sample".into()));
        }
        if data.nrows() != total || labels.len() != total {
            return Err(Error::InvalidInput(format!(
                "expected {total} samples, got {} rows and {} labels",
                data.nrows(),
                labels.len()
            )));
        }
        if !(zeta >= 0.0) {
            return Err(Error::InvalidInput("regularizer must be non-negative".into()));
        }
        let d = data.ncols();
        let mut grams = Vec::with_capacity(users);
        let mut cross = Vec::with_capacity(users);
        let mut label_energy = Vec::with_capacity(users);
        for k in 0..users {
            let rows = data.rows(k * samples_per_user, samples_per_user);
            let nu = labels.rows(k * samples_per_user, samples_per_user);
            grams.push(rows.transpose() * rows);
            cross.push(rows.transpose() * nu);
            label_energy.push(0.5 * nu.norm_squared());
        }
        let mut xi = DMatrix::zeros(d, d);
        for g in &grams {
            xi += g;
        }
        for i in 0..d {
            xi[(i, i)] += 2.0 * total as f64 * zeta;
        }
        let eig = SymmetricEigen::new(xi.clone());
        let mu = eig.eigenvalues.min();
        let l = eig.eigenvalues.max();
        if !(mu > 0.0) {
            return Err(Error::InvalidInput(format!("data Gramian is singular (smallest eigenvalue {mu:e})")));
        }
        let rhs = cross.iter().fold(DVector::zeros(d), |acc, c| acc + c);
        let w_star = xi
            .cholesky()
            .ok_or_else(|| Error::InvalidInput("data Gramian is not positive definite".into()))?
            .solve(&rhs);
        let mut task = FlTask {
            users,
            samples_per_user,
            zeta,
            data,
            labels,
            mu,
            l,
            w_star,
            f_star: 0.0,
            grams,
            cross,
            label_energy,
        };
        task.f_star = task.loss(task.w_star.as_slice());
        Ok(task)
    }

    pub fn users(&self) -> usize {
        self.users
    }

    pub fn samples_per_user(&self) -> usize {
        self.samples_per_user
    }

    pub fn dim(&self) -> usize {
        self.data.ncols()
    }

    pub fn zeta(&self) -> f64 {
        self.zeta
    }

    /// Smallest eigenvalue of `Xi`.
    pub fn mu(&self) -> f64 {
        self.mu
    }

    /// Largest eigenvalue of `Xi`.
    pub fn l(&self) -> f64 {
        self.l
    }

    pub fn w_star(&self) -> &[f64] {
        self.w_star.as_slice()
    }

    pub fn f_star(&self) -> f64 {
        self.f_star
    }

    pub fn data(&self) -> &DMatrix<f64> {
        &self.data
    }

    pub fn labels(&self) -> &DVector<f64> {
        &self.labels
    }

    pub fn partition(&self, k: usize) -> Range<usize> {
        k * self.samples_per_user..(k + 1) * self.samples_per_user
    }

    pub fn snapshot(&self) -> TaskSnapshot {
        TaskSnapshot {
            users: self.users,
            samples_per_user: self.samples_per_user,
            dim: self.dim(),
            zeta: self.zeta,
            mu: self.mu,
            l: self.l,
            w_star: self.w_star.iter().copied().collect(),
            f_star: self.f_star,
        }
    }

    fn check_user(&self, k: usize) -> Result<()> {
        if k >= self.users {
            return Err(Error::IndexOutOfRange { index: k + 1, len: self.users });
        }
        Ok(())
    }

    fn check_dim(&self, w: &[f64]) -> Result<()> {
        if w.len() != self.dim() {
            return Err(Error::InvalidInput(format!("model has length {}, expected {}", w.len(), self.dim())));
        }
        Ok(())
    }

    fn local_loss_unchecked(&self, k: usize, w: &DVector<f64>) -> f64 {
        let reg = self.samples_per_user as f64 * self.zeta * w.norm_squared();
        0.5 * w.dot(&(&self.grams[k] * w)) - self.cross[k].dot(w) + self.label_energy[k] + reg
    }

    fn local_gradient_unchecked(&self, k: usize, w: &DVector<f64>) -> DVector<f64> {
        &self.grams[k] * w - &self.cross[k] + w * (2.0 * self.samples_per_user as f64 * self.zeta)
    }

    /// `F_k(w)`, summed over the user's samples.
    pub fn local_loss(&self, k: usize, w: &[f64]) -> Result<f64> {
        self.check_user(k)?;
        self.check_dim(w)?;
        Ok(self.local_loss_unchecked(k, &DVector::from_column_slice(w)))
    }

    /// `F(w) = (1/K) sum_k F_k(w)`.
    pub fn loss(&self, w: &[f64]) -> f64 {
        let w = DVector::from_column_slice(w);
        (0..self.users).map(|k| self.local_loss_unchecked(k, &w)).sum::<f64>() / self.users as f64
    }

    /// `(F(w) - F*) / F*`.
    pub fn normalized_gap(&self, w: &[f64]) -> f64 {
        (self.loss(w) - self.f_star) / self.f_star
    }

    /// `grad F(w) = (1/K) sum_k grad F_k(w)`.
    pub fn global_gradient(&self, w: &[f64]) -> Vec<f64> {
        let w = DVector::from_column_slice(w);
        let mut g = DVector::zeros(self.dim());
        for k in 0..self.users {
            g += self.local_gradient_unchecked(k, &w);
        }
        (g / self.users as f64).iter().copied().collect()
    }

    /// Gradient of `f` at a single sample.
    pub fn sample_gradient(&self, i: usize, w: &[f64]) -> Vec<f64> {
        let mu = self.data.row(i);
        let resid: f64 = mu.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() - self.labels[i];
        mu.iter().zip(w).map(|(m, wi)| resid * m + 2.0 * self.zeta * wi).collect()
    }
}

/// `sum_{i in user k} (mu mu^T w - nu mu + 2 zeta w)`.
pub fn local_gradient(task: &FlTask, k: usize, w: &[f64]) -> Result<Vec<f64>> {
    task.check_user(k)?;
    task.check_dim(w)?;
    Ok(task.local_gradient_unchecked(k, &DVector::from_column_slice(w)).iter().copied().collect())
}

/// `gamma = 2 W max_i (||mu_i||^2 + 2 zeta)` and `G_k = 2 W lambda_max(U_k^T U_k + 2 D zeta I)`.
pub fn gradient_bounds(task: &FlTask, w_bound: f64) -> Result<GradientBounds> {
    if !(w_bound > 0.0) {
        return Err(Error::InvalidInput("model bound must be positive".into()));
    }
    let max_sample = task
        .data
        .row_iter()
        .map(|r| r.norm_squared() + 2.0 * task.zeta)
        .fold(0.0, f64::max);
    let ridge = 2.0 * task.samples_per_user as f64 * task.zeta;
    let per_user = task
        .grams
        .iter()
        .map(|g| 2.0 * w_bound * (SymmetricEigen::new(g.clone()).eigenvalues.max() + ridge))
        .collect();
    GradientBounds::new(2.0 * w_bound * max_sample, per_user)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainState {
    pub round: usize,
    pub w: Vec<f64>,
    pub loss_history: Vec<f64>,
    pub gap_history: Vec<f64>,
    pub w_bound: f64,
    pub scaling: BoundScaling,
}

impl TrainState {
    /// Starts from `w = 0`. Fails when the ball of radius `w_bound` excludes `w*`.
    pub fn new(task: &FlTask, w_bound: f64, scaling: BoundScaling) -> Result<Self> {
        Self::starting_at(task, vec![0.0; task.dim()], w_bound, scaling)
    }

    pub fn starting_at(task: &FlTask, w0: Vec<f64>, w_bound: f64, scaling: BoundScaling) -> Result<Self> {
        task.check_dim(&w0)?;
        let norm = task.w_star.norm();
        if !(w_bound > 0.0) || norm > w_bound {
            return Err(Error::ConfigError(format!(
                "model bound {w_bound} excludes the optimum (||w*|| = {norm})"
            )));
        }
        let w0_norm = w0.iter().map(|x| x * x).sum::<f64>().sqrt();
        if w0_norm > w_bound {
            return Err(Error::ConfigError("initial model lies outside the model bound".into()));
        }
        Ok(Self {
            round: 0,
            w: w0,
            loss_history: Vec::new(),
            gap_history: Vec::new(),
            w_bound,
            scaling,
        })
    }

    /// `1 / L_eff`.
    pub fn step_size(&self, task: &FlTask) -> f64 {
        self.scaling.divisor(task.users) / task.l
    }
}

/// One step `w <- P(w - grad / L_eff)` followed by bookkeeping.
pub fn train_round(state: &TrainState, estimated_gradient: &[f64], task: &FlTask) -> Result<TrainState> {
    task.check_dim(estimated_gradient)?;
    let step = state.step_size(task);
    let mut w: Vec<f64> = state.w.iter().zip(estimated_gradient).map(|(w, g)| w - step * g).collect();
    let norm = w.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > state.w_bound {
        log::debug!("round {}: projecting ||w|| = {norm:.4} onto {}", state.round + 1, state.w_bound);
        let s = state.w_bound / norm;
        w.iter_mut().for_each(|x| *x *= s);
    }
    let mut next = state.clone();
    next.round += 1;
    next.loss_history.push(task.loss(&w));
    next.gap_history.push(task.normalized_gap(&w));
    next.w = w;
    Ok(next)
}

/// Bound on `E[F(w_t) - F*]` for `t = 0..=T`.
///
/// `Consistent` uses the constants of `F` and the estimator noise
/// `E||e||^2 = d N0 / (2 K^2 eta)`, giving a per-round term `d N0 / (4 K L eta)`.
/// `Literal` uses `d N0 / (2 L (K D)^2 eta)`.
pub fn convergence_bound_trajectory(
    task: &FlTask,
    etas: &[f64],
    n0: f64,
    initial_gap: f64,
    scaling: BoundScaling,
) -> Result<Vec<f64>> {
    if etas.iter().any(|e| !(*e > 0.0)) {
        return Err(Error::InvalidInput("power scalings must be positive".into()));
    }
    if !(n0 >= 0.0) {
        return Err(Error::InvalidInput("noise power must be non-negative".into()));
    }
    let (k, d) = (task.users as f64, task.dim() as f64);
    let contraction = 1.0 - task.mu / task.l;
    let coeff = match scaling {
        BoundScaling::Consistent => d / (4.0 * k * task.l),
        BoundScaling::Literal => {
            let kd = k * task.samples_per_user as f64;
            d / (2.0 * task.l * kd * kd)
        }
    };
    let mut out = Vec::with_capacity(etas.len() + 1);
    let mut b = initial_gap;
    out.push(b);
    for eta in etas {
        b = contraction * b + coeff * n0 / eta;
        out.push(b);
    }
    Ok(out)
}

/// Final entry of [`convergence_bound_trajectory`].
pub fn convergence_bound(
    task: &FlTask,
    etas: &[f64],
    n0: f64,
    initial_gap: f64,
    scaling: BoundScaling,
) -> Result<f64> {
    Ok(*convergence_bound_trajectory(task, etas, n0, initial_gap, scaling)?
        .last()
        .expect("trajectory holds the initial gap"))
}

#[cfg(test)]
mod tests;
