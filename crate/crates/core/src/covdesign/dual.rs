//! Barrier method on the dual of the P1 program:
//!
//! ```text
//! maximize sum_i lambda_i e_i  s.t.  sum_i lambda_i c_i = 1,  lambda >= 0,
//!          S(lambda) = -sum_i lambda_i A_i >= 0
//! ```
//!
//! The Newton system has one row per constraint, so a step costs a handful of
//! `n x n` products whatever the size of `X`. On the central path
//! `X = S^{-1} / tau` and `beta = kappa / tau` (with `kappa` the multiplier of
//! the normalization) are primal feasible with slacks `1 / (tau lambda_i)`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

use super::barrier::{BarrierProblem, BarrierSolution, ConMat, ScaledCholesky};
use crate::error::{Error, Result};
use crate::numerics::{CMatrix, CVector, HermitianCholesky};

const CENTRING_TOLERANCE: f64 = 1e-8;
const MAX_CENTRING_STEPS: usize = 100;
const TAU_FACTOR: f64 = 20.0;
const GAP_TOLERANCE: f64 = 1e-9;
const MAX_NEWTON_STEPS: usize = 2_000;

fn unit(n: usize, j: usize) -> CVector {
    let mut e = CVector::zeros(n);
    e[j] = Complex64::new(1.0, 0.0);
    e
}

/// Primal point on the central path, `X = S^{-1}/tau` and `beta = kappa/tau`,
/// from which the primal barrier can carry on.
#[derive(Debug, Clone)]
pub(crate) struct CentralPoint {
    pub x: CMatrix,
    pub beta: f64,
    pub tau: f64,
}

struct Dual<'a> {
    problem: &'a BarrierProblem,
    /// Constraint matrices restricted to the structure of `X`.
    mats: Vec<CMatrix>,
    /// Every constraint matrix as `sum_p w_p v_p v_p^H`: the `v_p` as columns
    /// and, per constraint, its `(p, w_p)` terms.
    vecs: CMatrix,
    terms: Vec<Vec<(usize, f64)>>,
}

struct Iterate {
    lambda: Vec<f64>,
    chol: HermitianCholesky,
}

impl Dual<'_> {
    fn s_of(&self, lambda: &[f64]) -> CMatrix {
        let n = self.problem.n;
        let mut s = CMatrix::zeros(n, n);
        for (a, l) in self.mats.iter().zip(lambda) {
            s -= a * Complex64::new(*l, 0.0);
        }
        s
    }

    fn iterate(&self, lambda: Vec<f64>) -> Option<Iterate> {
        if lambda.iter().any(|l| !(*l > 0.0)) {
            return None;
        }
        let chol = HermitianCholesky::new(&self.s_of(&lambda))?;
        Some(Iterate { lambda, chol })
    }

    /// Dual objective at the normalized multipliers: a lower bound on `beta`.
    fn bound(&self, it: &Iterate) -> f64 {
        let cons = &self.problem.constraints;
        let lin: f64 = it.lambda.iter().zip(cons).map(|(l, c)| l * c.constant).sum();
        let norm: f64 = it.lambda.iter().zip(cons).map(|(l, c)| l * c.c).sum();
        lin / norm
    }

    /// Barrier value `-tau sum lambda e - log det S - sum log lambda`.
    fn value(&self, it: &Iterate, tau: f64) -> f64 {
        let lin: f64 = it.lambda.iter().zip(&self.problem.constraints).map(|(l, c)| l * c.constant).sum();
        -tau * lin - it.chol.log_det() - it.lambda.iter().map(|l| l.ln()).sum::<f64>()
    }

    /// Gradient and Hessian, using
    /// `tr(S^-1 v_p v_p^H S^-1 v_q v_q^H) = |v_p^H S^-1 v_q|^2`.
    fn derivatives(&self, it: &Iterate, tau: f64) -> (DVector<f64>, DMatrix<f64>) {
        let m = self.terms.len();
        let gram = self.vecs.adjoint() * it.chol.solve(&self.vecs);
        let mut g = DVector::<f64>::zeros(m);
        let mut h = DMatrix::<f64>::zeros(m, m);
        for i in 0..m {
            let tr: f64 = self.terms[i].iter().map(|&(p, w)| w * gram[(p, p)].re).sum();
            g[i] = -tau * self.problem.constraints[i].constant + tr - 1.0 / it.lambda[i];
            for j in 0..=i {
                let mut t = 0.0;
                for &(p, wp) in &self.terms[i] {
                    for &(q, wq) in &self.terms[j] {
                        t += wp * wq * gram[(p, q)].norm_sqr();
                    }
                }
                h[(i, j)] = t;
                h[(j, i)] = t;
            }
            h[(i, i)] += 1.0 / (it.lambda[i] * it.lambda[i]);
        }
        (g, h)
    }

    /// Feasible-start Newton on `c^T lambda = 1`; returns steps and the
    /// normalization multiplier.
    fn centre(&self, it: &mut Iterate, tau: f64, budget: usize) -> Result<(usize, f64)> {
        let c = DVector::from_iterator(self.mats.len(), self.problem.constraints.iter().map(|c| c.c));
        let mut steps = 0;
        loop {
            let (g, h) = self.derivatives(it, tau);
            let fact = ScaledCholesky::new(h).ok_or(Error::SolverNonConvergence {
                iterations: steps,
                residual: f64::INFINITY,
            })?;
            let hg = fact.solve(&g);
            let hc = fact.solve(&c);
            let chc = c.dot(&hc);
            let kappa = -c.dot(&hg) / chc;
            let step = -(hg + hc * kappa);
            let dec2 = -g.dot(&step);
            if !dec2.is_finite() {
                return Err(Error::SolverNonConvergence {
                    iterations: steps,
                    residual: f64::INFINITY,
                });
            }
            if dec2 < 0.0 {
                // the Newton system is below rounding level
                return Ok((steps, kappa));
            }
            // at the centre, g + kappa c = 0 and the primal beta is kappa / tau
            if dec2 / 2.0 <= CENTRING_TOLERANCE || steps >= MAX_CENTRING_STEPS.min(budget) {
                if steps >= budget {
                    return Err(Error::SolverNonConvergence {
                        iterations: steps,
                        residual: dec2,
                    });
                }
                return Ok((steps, kappa));
            }
            steps += 1;
            let mut t = 1.0f64;
            for (l, dl) in it.lambda.iter().zip(step.iter()) {
                if *dl < 0.0 {
                    t = t.min(-0.99 * l / dl);
                }
            }
            let f0 = self.value(it, tau);
            let mut accepted = false;
            for _ in 0..60 {
                let lambda: Vec<f64> = it.lambda.iter().zip(step.iter()).map(|(l, dl)| l + t * dl).collect();
                if let Some(next) = self.iterate(lambda) {
                    if dec2 < 0.1 || self.value(&next, tau) <= f0 - 0.25 * t * dec2 {
                        *it = next;
                        accepted = true;
                        break;
                    }
                }
                t *= 0.5;
            }
            if !accepted {
                return Ok((steps, kappa));
            }
        }
    }

    /// Strictly feasible multipliers: unit weight on the rows whose matrix
    /// is negative (they build up `S`), a small share on the others.
    fn cold_start(&self) -> Option<Vec<f64>> {
        let m = self.mats.len();
        let cons = &self.problem.constraints;
        let building: Vec<bool> = self.mats.iter().map(|a| a.trace().re < 0.0).collect();
        let mut lambda: Vec<f64> = building.iter().map(|&b| if b { 1.0 } else { 0.0 }).collect();
        let base_inv = HermitianCholesky::new(&self.s_of(&lambda))?.inverse();
        for i in (0..m).filter(|&i| !building[i]) {
            // tr(S^-1 (-lambda_i A_i)) > -1/m per row keeps S positive definite
            let load = (&base_inv * &self.mats[i]).trace().re.max(0.0);
            lambda[i] = if load > 0.0 { 0.5 / (load * m as f64) } else { 1.0 };
        }
        let norm: f64 = lambda.iter().zip(cons).map(|(l, c)| l * c.c).sum();
        if !(norm > 0.0) {
            return None;
        }
        let lambda: Vec<f64> = lambda.into_iter().map(|l| l / norm).collect();
        self.iterate(lambda.clone()).map(|_| lambda)
    }
}

impl BarrierProblem {
    /// Solves the program through its dual. The returned `X` is
    /// `S^{-1}/tau` made exactly feasible (rescaled for `beta`-free rows,
    /// then paired with the smallest feasible `beta`); `kkt_residual` is the
    /// relative gap between that primal value and the dual bound.
    pub(crate) fn solve_dual(&self) -> Result<(BarrierSolution, CentralPoint)> {
        let n = self.n;
        let mats: Vec<CMatrix> = self
            .constraints
            .iter()
            .map(|c| {
                let a = c.mat.to_matrix(n);
                if self.diagonal {
                    CMatrix::from_fn(n, n, |i, j| if i == j { a[(i, i)] } else { Complex64::new(0.0, 0.0) })
                } else {
                    a
                }
            })
            .collect();
        let mut cols: Vec<CVector> = Vec::new();
        let mut terms = Vec::with_capacity(self.constraints.len());
        for c in &self.constraints {
            let mut t = Vec::new();
            match (&c.mat, self.diagonal) {
                (ConMat::RankOne { v, weight }, false) => {
                    t.push((cols.len(), *weight));
                    cols.push(v.clone());
                }
                (ConMat::RankOne { v, weight }, true) => {
                    for j in 0..n {
                        t.push((cols.len(), weight * v[j].norm_sqr()));
                        cols.push(unit(n, j));
                    }
                }
                (ConMat::Diag(d), _) => {
                    for (j, dj) in d.iter().enumerate().filter(|(_, dj)| **dj != 0.0) {
                        t.push((cols.len(), *dj));
                        cols.push(unit(n, j));
                    }
                }
            }
            terms.push(t);
        }
        let vecs = CMatrix::from_columns(&cols);
        let dual = Dual {
            problem: self,
            mats,
            vecs,
            terms,
        };
        let start = dual
            .cold_start()
            .ok_or(Error::InfeasibleInputs("no strictly feasible dual point".into()))?;
        let mut it = dual.iterate(start).expect("start is strictly feasible");
        let mu = (self.constraints.len() + n) as f64;
        let mut tau = mu / dual.bound(&it).abs().max(1.0);
        let mut steps = 0;
        let mut best: Option<(BarrierSolution, CentralPoint)> = None;
        loop {
            let (s, kappa) = dual.centre(&mut it, tau, MAX_NEWTON_STEPS.saturating_sub(steps))?;
            steps += s;
            let candidate = self.primal_from(&dual, &it, tau, kappa, steps);
            let improved = match (&candidate, &best) {
                (Some(c), Some(b)) => c.0.kkt_residual < b.0.kkt_residual,
                (Some(_), None) => true,
                _ => false,
            };
            if improved {
                best = candidate;
            } else if best.is_some() {
                // centring has reached rounding level
                break;
            }
            let beta = kappa / tau;
            if best.as_ref().is_some_and(|b| b.0.kkt_residual <= GAP_TOLERANCE) || mu / tau <= 1e-3 * GAP_TOLERANCE * beta.abs().max(1.0) {
                break;
            }
            // short steps near the end, where centring runs into rounding
            tau *= if mu / tau > 1e-5 * beta.abs().max(1.0) { TAU_FACTOR } else { 4.0 };
        }
        let (mut sol, central) = best.ok_or(Error::SolverNonConvergence {
            iterations: steps,
            residual: f64::INFINITY,
        })?;
        sol.newton_steps = steps;
        Ok((sol, central))
    }

    /// `X = S^{-1}/tau` made exactly feasible, with its gap to the dual bound.
    fn primal_from(
        &self,
        dual: &Dual<'_>,
        it: &Iterate,
        tau: f64,
        kappa: f64,
        steps: usize,
    ) -> Option<(BarrierSolution, CentralPoint)> {
        let sinv = it.chol.inverse();
        let central = (&sinv + sinv.adjoint()) * Complex64::new(0.5 / tau, 0.0);
        let mut x = central.clone();
        let beta = self.repair(&mut x)?;
        let kkt = (beta - dual.bound(it)).abs() / beta.abs().max(1.0);
        Some((
            BarrierSolution {
                x,
                beta,
                newton_steps: steps,
                kkt_residual: kkt,
            },
            CentralPoint {
                x: central,
                beta: kappa / tau,
                tau,
            },
        ))
    }

    /// Scales `X` up until every `beta`-free row holds, then returns the
    /// smallest feasible `beta`.
    fn repair(&self, x: &mut CMatrix) -> Option<f64> {
        for c in self.constraints.iter().filter(|c| c.c <= 0.0) {
            let inner = c.mat.inner(x);
            if inner < c.constant {
                if !(inner > 0.0) {
                    return None;
                }
                *x *= Complex64::new(c.constant / inner * (1.0 + 4.0 * f64::EPSILON), 0.0);
            }
        }
        let mut beta: f64 = 0.0;
        for c in &self.constraints {
            let rest = c.slack(x, 0.0);
            if c.c > 0.0 {
                beta = beta.max(-rest / c.c);
            } else if rest < 0.0 {
                return None;
            }
        }
        Some(beta)
    }
}
