use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::run::{experiment_task, RepetitionContext};
use crate::channel::effective_gains;
use crate::covdesign::{solve_p1, solve_p1_warm, PlanRecord, PlanResiduals, RoundPlan};
use crate::error::{Error, Result};
use crate::learning::gradient_bounds;
use crate::numerics::{CVector, Complex64};
use crate::privacy::{AuditRound, DpBudget};

/// One designed round with what the adversary-side audit needs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DesignedRound {
    pub round: usize,
    pub plan: PlanRecord,
    pub rho: Vec<[f64; 2]>,
    pub rho_max: f64,
    pub gamma: f64,
    pub adversary_noise: f64,
    pub privacy_residual: f64,
    pub power_residual: f64,
}

/// Correlated plans for every round of one repetition.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanFile {
    pub epsilon: f64,
    pub delta: f64,
    pub allocation: Vec<f64>,
    pub seed: u64,
    pub repetition: usize,
    pub rounds: Vec<DesignedRound>,
}

impl PlanFile {
    pub fn budget(&self) -> Result<DpBudget> {
        DpBudget::new(self.epsilon, self.delta, self.allocation.clone())
    }

    pub fn audit_rounds(&self) -> Result<Vec<AuditRound>> {
        self.rounds
            .iter()
            .map(|r| {
                let plan = RoundPlan::from_record(&r.plan)?;
                let rho = CVector::from_iterator(r.rho.len(), r.rho.iter().map(|[re, im]| Complex64::new(*re, *im)));
                Ok(AuditRound {
                    eta: plan.eta,
                    rho,
                    covariance: plan.covariance.as_hermitian().clone(),
                    n_a: r.adversary_noise,
                    gamma: r.gamma,
                    rho_max: r.rho_max,
                })
            })
            .collect()
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        serde_json::from_str(&text).map_err(|e| Error::ConfigError(format!("{}: {e}", path.display())))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }
}

/// Solves the correlated design along repetition `rep`'s channel path with
/// the model held at its initial value.
pub fn design_plans(cfg: &ExperimentConfig, rep: usize) -> Result<PlanFile> {
    cfg.validate()?;
    let task = experiment_task(cfg)?;
    let bounds = gradient_bounds(&task, cfg.w_bound)?;
    let ctx = RepetitionContext::new(cfg, &task, &bounds, rep)?;
    let mut rounds = Vec::with_capacity(cfg.rounds);
    let mut prev: Option<RoundPlan> = None;
    for t in 1..=cfg.rounds {
        let inputs = ctx.design_inputs(cfg, &task, &bounds, t)?;
        let plan = match &prev {
            Some(p) => solve_p1_warm(&inputs, p)?,
            None => solve_p1(&inputs)?,
        };
        let PlanResiduals { privacy, power, .. } = plan.residuals(&inputs)?;
        let gains = effective_gains(&inputs.channel)?;
        rounds.push(DesignedRound {
            round: t,
            plan: plan.to_record(),
            rho: gains.rho.iter().map(|z| [z.re, z.im]).collect(),
            rho_max: gains.rho_max,
            gamma: bounds.gamma,
            adversary_noise: ctx.n_a,
            privacy_residual: privacy,
            power_residual: power,
        });
        prev = Some(plan);
    }
    Ok(PlanFile {
        epsilon: cfg.epsilon,
        delta: cfg.delta,
        allocation: ctx.budget.allocation().to_vec(),
        seed: cfg.seed,
        repetition: rep,
        rounds,
    })
}
