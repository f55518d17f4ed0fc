//! Log-barrier interior-point method for
//!
//! ```text
//! minimize beta  s.t.  <A_i, X> + c_i beta - e_i >= 0,  X >= 0 (Hermitian)
//! ```
//!
//! with `<A, X> = Re tr(A X)` and every `A_i` either rank one (`w v v^H`) or
//! diagonal. `X` is handled in a real orthonormal basis of the Hermitian
//! matrices: `n` diagonal units plus, for `i < j`, the symmetric and
//! antisymmetric off-diagonal pairs scaled by `1/sqrt(2)`. A diagonal problem
//! uses the diagonal units only. Newton steps solve the dense Hessian of
//! `tau beta - log det X - sum log s_i` in those coordinates.
//!
//! The dual path in `dual.rs` is much cheaper per step; this primal method
//! finishes the instances where the dual loses precision first.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, HermitianCholesky};

/// Half the squared Newton decrement at which a centring pass stops.
const CENTRING_TOLERANCE: f64 = 1e-12;

/// Newton steps per centring pass before moving on to the next `tau`.
const MAX_CENTRING_STEPS: usize = 100;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

#[derive(Debug, Clone)]
pub(crate) enum ConMat {
    RankOne { v: CVector, weight: f64 },
    Diag(Vec<f64>),
}

impl ConMat {
    /// `Re tr(A X)`.
    pub(crate) fn inner(&self, x: &CMatrix) -> f64 {
        match self {
            ConMat::RankOne { v, weight } => {
                let xv = x * v;
                weight * v.dotc(&xv).re
            }
            ConMat::Diag(d) => d.iter().enumerate().map(|(i, di)| di * x[(i, i)].re).sum(),
        }
    }

    pub(crate) fn to_matrix(&self, n: usize) -> CMatrix {
        match self {
            ConMat::RankOne { v, weight } => (v * v.adjoint()) * Complex64::new(*weight, 0.0),
            ConMat::Diag(d) => CMatrix::from_fn(n, n, |i, j| {
                if i == j {
                    Complex64::new(d[i], 0.0)
                } else {
                    Complex64::new(0.0, 0.0)
                }
            }),
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct LinearConstraint {
    pub mat: ConMat,
    pub c: f64,
    pub constant: f64,
}

impl LinearConstraint {
    pub fn slack(&self, x: &CMatrix, beta: f64) -> f64 {
        self.mat.inner(x) + self.c * beta - self.constant
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct BarrierOptions {
    pub gap_tolerance: f64,
    pub max_newton_steps: usize,
    pub tau_factor: f64,
    /// Barrier weight for a start already on the central path.
    pub initial_tau: Option<f64>,
}

impl Default for BarrierOptions {
    fn default() -> Self {
        Self {
            gap_tolerance: 1e-8,
            max_newton_steps: 10_000,
            tau_factor: 50.0,
            initial_tau: None,
        }
    }
}

#[derive(Debug, Clone)]
pub(crate) struct BarrierSolution {
    pub x: CMatrix,
    pub beta: f64,
    pub newton_steps: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, Copy)]
enum Unit {
    Diag(usize),
    Re(usize, usize),
    Im(usize, usize),
}

/// Real orthonormal coordinates on (a subspace of) the Hermitian matrices.
struct Basis {
    n: usize,
    units: Vec<Unit>,
}

impl Basis {
    fn new(n: usize, diagonal_only: bool) -> Self {
        let mut units: Vec<Unit> = (0..n).map(Unit::Diag).collect();
        if !diagonal_only {
            for i in 0..n {
                for j in i + 1..n {
                    units.push(Unit::Re(i, j));
                    units.push(Unit::Im(i, j));
                }
            }
        }
        Self { n, units }
    }

    fn len(&self) -> usize {
        self.units.len()
    }

    /// `<E_p, H>` for every unit.
    fn coords(&self, h: &CMatrix) -> DVector<f64> {
        let s2 = std::f64::consts::SQRT_2;
        DVector::from_iterator(
            self.len(),
            self.units.iter().map(|u| match *u {
                Unit::Diag(i) => h[(i, i)].re,
                Unit::Re(i, j) => s2 * h[(i, j)].re,
                // E_im has i/sqrt2 at (i, j) and -i/sqrt2 at (j, i)
                Unit::Im(i, j) => s2 * h[(i, j)].im,
            }),
        )
    }

    fn matrix(&self, v: &[f64]) -> CMatrix {
        let mut m = CMatrix::zeros(self.n, self.n);
        for (u, &a) in self.units.iter().zip(v) {
            match *u {
                Unit::Diag(i) => m[(i, i)] += Complex64::new(a, 0.0),
                Unit::Re(i, j) => {
                    m[(i, j)] += Complex64::new(a * FRAC_1_SQRT_2, 0.0);
                    m[(j, i)] += Complex64::new(a * FRAC_1_SQRT_2, 0.0);
                }
                Unit::Im(i, j) => {
                    m[(i, j)] += Complex64::new(0.0, a * FRAC_1_SQRT_2);
                    m[(j, i)] -= Complex64::new(0.0, a * FRAC_1_SQRT_2);
                }
            }
        }
        m
    }

    /// Unit `p` as a sum of `c e_a e_b^T`.
    fn terms(&self, p: usize) -> [(usize, usize, Complex64); 2] {
        let h = Complex64::new(FRAC_1_SQRT_2, 0.0);
        let ih = Complex64::new(0.0, FRAC_1_SQRT_2);
        let zero = Complex64::new(0.0, 0.0);
        match self.units[p] {
            Unit::Diag(i) => [(i, i, Complex64::new(1.0, 0.0)), (i, i, zero)],
            Unit::Re(i, j) => [(i, j, h), (j, i, h)],
            Unit::Im(i, j) => [(i, j, ih), (j, i, -ih)],
        }
    }

    /// Hessian of `-log det X` in these coordinates: `Re tr(Y E_p Y E_q)`,
    /// using `tr(Y e_a e_b^T Y e_c e_d^T) = Y[d, a] Y[b, c]`.
    fn logdet_hessian(&self, y: &CMatrix) -> DMatrix<f64> {
        let k = self.len();
        let terms: Vec<_> = (0..k).map(|p| self.terms(p)).collect();
        let mut h = DMatrix::<f64>::zeros(k, k);
        for p in 0..k {
            for q in 0..=p {
                let mut acc = Complex64::new(0.0, 0.0);
                for &(a, b, cp) in &terms[p] {
                    for &(c, d, cq) in &terms[q] {
                        acc += cp * cq * y[(d, a)] * y[(b, c)];
                    }
                }
                h[(p, q)] = acc.re;
                h[(q, p)] = acc.re;
            }
        }
        h
    }
}

pub(crate) struct BarrierProblem {
    pub n: usize,
    pub diagonal: bool,
    pub constraints: Vec<LinearConstraint>,
}

struct Point {
    x: CMatrix,
    beta: f64,
    slacks: Vec<f64>,
}

impl BarrierProblem {
    pub(crate) fn slacks(&self, x: &CMatrix, beta: f64) -> Vec<f64> {
        self.constraints.iter().map(|c| c.slack(x, beta)).collect()
    }

    pub fn solve(&self, x0: CMatrix, beta0: f64, opts: BarrierOptions) -> Result<BarrierSolution> {
        let slacks = self.slacks(&x0, beta0);
        if slacks.iter().any(|s| !(*s > 0.0)) || HermitianCholesky::new(&x0).is_none() {
            return Err(Error::InvalidInput("barrier start point is not strictly feasible".into()));
        }
        let basis = Basis::new(self.n, self.diagonal);
        let grads: Vec<DVector<f64>> = self
            .constraints
            .iter()
            .map(|c| basis.coords(&c.mat.to_matrix(self.n)))
            .collect();
        let mut pt = Point { x: x0, beta: beta0, slacks };
        // centre the start along beta: tau = sum c_i / s_i zeroes d/dbeta
        let mut tau = opts.initial_tau.unwrap_or_else(|| {
            self.constraints
                .iter()
                .zip(&pt.slacks)
                .map(|(c, s)| c.c / s)
                .sum::<f64>()
                .max(1e-6)
        });
        let mu = (self.constraints.len() + self.n) as f64;
        let mut steps = 0usize;
        loop {
            steps += self.centre(&basis, &grads, &mut pt, tau, opts.max_newton_steps.saturating_sub(steps))?;
            let gap = mu / tau;
            if gap < opts.gap_tolerance * pt.beta.abs().max(1.0) {
                let kkt = self.kkt_residual(&basis, &grads, &pt, tau).max(gap / pt.beta.abs().max(1.0));
                return Ok(BarrierSolution {
                    x: pt.x,
                    beta: pt.beta,
                    newton_steps: steps,
                    kkt_residual: kkt,
                });
            }
            tau *= opts.tau_factor;
        }
    }

    /// Gradient of the barrier function and `X^{-1}`.
    fn gradient(&self, basis: &Basis, grads: &[DVector<f64>], pt: &Point, tau: f64) -> Option<(DVector<f64>, CMatrix)> {
        let y = HermitianCholesky::new(&pt.x)?.inverse();
        let k = basis.len();
        let mut g = DVector::<f64>::zeros(k + 1);
        g.rows_mut(0, k).copy_from(&(-basis.coords(&y)));
        let mut gb = tau;
        for ((c, a), s) in self.constraints.iter().zip(grads).zip(&pt.slacks) {
            g.rows_mut(0, k).axpy(-1.0 / s, a, 1.0);
            gb -= c.c / s;
        }
        g[k] = gb;
        Some((g, y))
    }

    /// Damped Newton on the centring problem; returns the number of steps.
    fn centre(&self, basis: &Basis, grads: &[DVector<f64>], pt: &mut Point, tau: f64, budget: usize) -> Result<usize> {
        let m = self.constraints.len();
        let k = basis.len();
        let mut steps = 0;
        loop {
            if steps >= MAX_CENTRING_STEPS.min(budget) && steps < budget {
                // stalled at rounding level: leave it to the next tau
                return Ok(steps);
            }
            if steps >= budget {
                return Err(Error::SolverNonConvergence {
                    iterations: steps,
                    residual: self.kkt_residual(basis, grads, pt, tau),
                });
            }
            let (g, y) = self.gradient(basis, grads, pt, tau).expect("current point is interior");
            let c: Vec<f64> = self.constraints.iter().map(|c| c.c).collect();
            let h = primal_hessian(basis, grads, &c, &pt.slacks, &y);
            let Some(step) = newton_step(h, &g) else {
                return Err(Error::SolverNonConvergence {
                    iterations: steps,
                    residual: f64::INFINITY,
                });
            };
            let decrement2 = -g.dot(&step);
            steps += 1;
            if !decrement2.is_finite() {
                return Err(Error::SolverNonConvergence {
                    iterations: steps,
                    residual: f64::INFINITY,
                });
            }
            if decrement2 / 2.0 <= CENTRING_TOLERANCE {
                return Ok(steps);
            }
            let dx = basis.matrix(&step.as_slice()[..k]);
            let dbeta = step[k];
            let ds: Vec<f64> = (0..m)
                .map(|i| grads[i].dot(&step.rows(0, k)) + self.constraints[i].c * dbeta)
                .collect();

            let mut t = 1.0f64;
            for i in 0..m {
                if ds[i] < 0.0 {
                    t = t.min(-0.99 * pt.slacks[i] / ds[i]);
                }
            }
            let ld0 = HermitianCholesky::new(&pt.x).expect("current point is interior").log_det();
            let mut accepted = false;
            for _ in 0..60 {
                let x_new = &pt.x + &dx * Complex64::new(t, 0.0);
                let beta_new = pt.beta + t * dbeta;
                // slacks are carried as iterates: recomputing them from X and
                // beta would cancel catastrophically near the boundary
                let s_new: Vec<f64> = pt.slacks.iter().zip(&ds).map(|(a, b)| a + t * b).collect();
                let interior = s_new.iter().all(|v| *v > 0.0);
                if let (true, Some(ch)) = (interior, HermitianCholesky::new(&x_new)) {
                    let df = tau * t * dbeta
                        - (ch.log_det() - ld0)
                        - s_new.iter().zip(&pt.slacks).map(|(a, b)| (a / b).ln()).sum::<f64>();
                    // inside the quadratic region the full Newton step is taken as is
                    if decrement2 < 0.1 || df <= -0.25 * t * decrement2 {
                        pt.x = x_new;
                        pt.beta = beta_new;
                        pt.slacks = s_new;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                // no descent left at machine precision
                return Ok(steps);
            }
        }
    }

    /// Relative stationarity of the Lagrangian at the barrier duals
    /// `lambda_i = 1/(tau s_i)`, `Z = X^{-1}/tau`: the `X` block is measured
    /// against `||Z|| + sum lambda_i ||A_i||`, the `beta` block is absolute.
    fn kkt_residual(&self, basis: &Basis, grads: &[DVector<f64>], pt: &Point, tau: f64) -> f64 {
        let Some((g, y)) = self.gradient(basis, grads, pt, tau) else {
            return f64::INFINITY;
        };
        let k = basis.len();
        let scale = basis.coords(&y).norm() + grads.iter().zip(&pt.slacks).map(|(a, s)| a.norm() / s).sum::<f64>();
        let gx = g.rows(0, k).norm() / scale;
        let gb = (g[k] / tau).abs();
        gx.max(gb)
    }
}

/// Dense Hessian of the primal barrier: the `log det` block on `X` plus
/// `sum_i u_i u_i^T / s_i^2` with `u_i = (a_i, c_i)`.
fn primal_hessian(basis: &Basis, grads: &[DVector<f64>], c: &[f64], slacks: &[f64], y: &CMatrix) -> DMatrix<f64> {
    let k = basis.len();
    let mut h = DMatrix::<f64>::zeros(k + 1, k + 1);
    h.view_mut((0, 0), (k, k)).copy_from(&basis.logdet_hessian(y));
    for (i, g) in grads.iter().enumerate() {
        let mut a = DVector::<f64>::zeros(k + 1);
        a.rows_mut(0, k).copy_from(g);
        a[k] = c[i];
        h.ger(1.0 / (slacks[i] * slacks[i]), &a, &a, 1.0);
    }
    h
}

/// Solves `H step = -g` for symmetric positive definite `H`.
fn newton_step(h: DMatrix<f64>, g: &DVector<f64>) -> Option<DVector<f64>> {
    ScaledCholesky::new(h).map(|f| f.solve(&(-g)))
}

/// Cholesky factor of `D H D` with `D = diag(H)^{-1/2}`, adding a growing
/// ridge when rounding makes the scaled matrix lose definiteness.
pub(crate) struct ScaledCholesky {
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    d: Vec<f64>,
}

impl ScaledCholesky {
    pub fn new(mut h: DMatrix<f64>) -> Option<Self> {
        let n = h.nrows();
        let d: Vec<f64> = (0..n).map(|i| 1.0 / h[(i, i)].max(f64::MIN_POSITIVE).sqrt()).collect();
        for i in 0..n {
            for j in 0..n {
                h[(i, j)] *= d[i] * d[j];
            }
        }
        let mut ridge = 0.0;
        for _ in 0..8 {
            let mut hr = h.clone();
            for i in 0..n {
                hr[(i, i)] += ridge;
            }
            if let Some(chol) = hr.cholesky() {
                return Some(Self { chol, d });
            }
            ridge = if ridge == 0.0 { 1e-14 } else { ridge * 100.0 };
        }
        None
    }

    pub fn solve(&self, b: &DVector<f64>) -> DVector<f64> {
        let n = self.d.len();
        let z = self.chol.solve(&DVector::from_fn(n, |i, _| b[i] * self.d[i]));
        DVector::from_fn(n, |i, _| z[i] * self.d[i])
    }
}
