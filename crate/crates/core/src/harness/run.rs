use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{ExperimentConfig, Scheme};
use super::metrics::{eta_closed_forms, sinr_adversary, snr_server, snr_server_alt, to_db};
use crate::airlink::{build_tx, estimate_global_gradient, server_receive_with_noise};
use crate::channel::{advance_round, effective_gains, init_channel, ChannelState};
use crate::covdesign::{sample_perturbations, solve_p1, solve_p1_uncorrelated, solve_p1_warm, DesignInputs, RoundPlan};
use crate::error::{Error, Result};
use crate::learning::{generate_task, gradient_bounds, local_gradient, train_round, FlTask, TaskSnapshot, TrainState};
use crate::numerics::RngStream;
use crate::privacy::{
    check_theorem1, effective_noise_variance, sensitivity, DpBudget, DpRoundAccount, GradientBounds,
};

/// Fraction of repetitions allowed to abort before the run fails.
pub const MAX_ABORT_FRACTION: f64 = 0.05;

/// One `(scheme, repetition, round)` record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RoundMetrics {
    pub scheme: Scheme,
    pub repetition: usize,
    pub round: usize,
    pub eta: f64,
    pub eta_nom: f64,
    pub eta_pert: f64,
    pub snr_server_db: f64,
    pub snr_server_alt_db: f64,
    pub sinr_adv_db: f64,
    /// Adversary SINR of the unperturbed scheme at `eta_nom`, same gradients.
    pub sinr_adv_nominal_db: f64,
    /// Normalized gap after this round's update.
    pub gap: f64,
    pub dp_tau_cumulative: f64,
    pub dp_margin: f64,
    pub power_headroom_min: f64,
    pub solver_iters: usize,
    pub kkt_residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepetitionResult {
    pub repetition: usize,
    pub n0: f64,
    pub n_a: f64,
    pub rows: Vec<RoundMetrics>,
}

impl RepetitionResult {
    pub fn final_gap(&self, scheme: Scheme) -> Option<f64> {
        self.rows.iter().filter(|r| r.scheme == scheme).max_by_key(|r| r.round).map(|r| r.gap)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AbortedRepetition {
    pub repetition: usize,
    pub error: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemeSummary {
    pub scheme: Scheme,
    pub mean_final_gap: f64,
    pub stderr_final_gap: f64,
    pub completed: usize,
    /// Largest `tau / R_dp` over completed repetitions.
    pub max_dp_usage: f64,
    /// Share of rounds whose adversary SINR exceeds the unperturbed reference.
    pub sinr_claim_violation_rate: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentResult {
    pub run_id: String,
    pub config: ExperimentConfig,
    pub task: TaskSnapshot,
    pub repetitions: Vec<RepetitionResult>,
    pub aborted: Vec<AbortedRepetition>,
    pub summaries: Vec<SchemeSummary>,
}

impl ExperimentResult {
    pub fn summary(&self, scheme: Scheme) -> Option<&SchemeSummary> {
        self.summaries.iter().find(|s| s.scheme == scheme)
    }
}

/// Short content hash of the configuration, stable across runs.
pub fn run_id(cfg: &ExperimentConfig) -> String {
    let digest = Sha256::digest(serde_json::to_vec(cfg).expect("config serializes"));
    digest[..6].iter().map(|b| format!("{b:02x}")).collect()
}

pub(crate) fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Worker count from `OTA_SIM_THREADS`, else the available parallelism.
pub fn worker_threads() -> usize {
    std::env::var("OTA_SIM_THREADS")
        .ok()
        .and_then(|v| v.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map_or(1, |n| n.get()))
}

pub fn experiment_task(cfg: &ExperimentConfig) -> Result<FlTask> {
    generate_task(
        cfg.users,
        cfg.samples_per_user,
        cfg.model_dim,
        cfg.zeta,
        &mut RngStream::new(cfg.seed, "task"),
    )
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let task = experiment_task(cfg)?;
    let bounds = gradient_bounds(&task, cfg.w_bound)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(worker_threads())
        .build()
        .map_err(|e| Error::ConfigError(format!("thread pool: {e}")))?;
    let outcomes: Vec<Result<RepetitionResult>> = pool.install(|| {
        (0..cfg.repetitions)
            .into_par_iter()
            .map(|rep| run_repetition(cfg, &task, &bounds, rep))
            .collect()
    });

    let mut repetitions = Vec::new();
    let mut aborted = Vec::new();
    let mut first_error = None;
    for (rep, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(r) => repetitions.push(r),
            Err(e) => {
                log::warn!("repetition {rep} aborted: {e}");
                aborted.push(AbortedRepetition {
                    repetition: rep,
                    error: e.to_string(),
                });
                first_error.get_or_insert(e);
            }
        }
    }
    if aborted.len() as f64 > MAX_ABORT_FRACTION * cfg.repetitions as f64 {
        log::error!("{} of {} repetitions aborted", aborted.len(), cfg.repetitions);
        return Err(first_error.expect("an abort was recorded"));
    }

    let radius = crate::privacy::dp_radius(cfg.epsilon, cfg.delta);
    let summaries = cfg
        .schemes
        .iter()
        .map(|&scheme| {
            let gaps: Vec<f64> = repetitions.iter().filter_map(|r| r.final_gap(scheme)).collect();
            let (mean, stderr) = mean_stderr(&gaps);
            let rows = repetitions.iter().flat_map(|r| r.rows.iter()).filter(|m| m.scheme == scheme);
            let (mut usage, mut violations, mut count) = (0.0f64, 0usize, 0usize);
            for m in rows {
                usage = usage.max(m.dp_tau_cumulative / radius);
                count += 1;
                if m.sinr_adv_db > m.sinr_adv_nominal_db {
                    violations += 1;
                }
            }
            SchemeSummary {
                scheme,
                mean_final_gap: mean,
                stderr_final_gap: stderr,
                completed: gaps.len(),
                max_dp_usage: usage,
                sinr_claim_violation_rate: violations as f64 / count.max(1) as f64,
            }
        })
        .collect();

    Ok(ExperimentResult {
        run_id: run_id(cfg),
        config: cfg.clone(),
        task: task.snapshot(),
        repetitions,
        aborted,
        summaries,
    })
}

/// Channel path, noise calibration and DP budget shared by every scheme of a
/// repetition.
pub struct RepetitionContext {
    pub rng: RngStream,
    pub channels: Vec<ChannelState>,
    pub budget: DpBudget,
    pub n0: f64,
    pub n_a: f64,
}

impl RepetitionContext {
    pub fn new(cfg: &ExperimentConfig, task: &FlTask, bounds: &GradientBounds, rep: usize) -> Result<Self> {
        let rng = RngStream::new(cfg.seed, format!("rep{rep}"));
        let channel_cfg = cfg.channel();
        let channel_rng = rng.derive("channel");
        let mut channels = Vec::with_capacity(cfg.rounds);
        channels.push(init_channel(&channel_cfg, &channel_rng)?);
        for _ in 1..cfg.rounds {
            let next = advance_round(channels.last().expect("non-empty"), &channel_cfg, &channel_rng)?;
            channels.push(next);
        }
        let budget = DpBudget::with_mode(
            cfg.epsilon,
            cfg.delta,
            cfg.rounds,
            cfg.allocation,
            &mut rng.derive("allocation"),
        )?;
        // Nominal SNR at round 1 from w = 0 matches the target.
        let w0 = vec![0.0; task.dim()];
        let mut ps = 0.0;
        for k in 0..task.users() {
            ps += local_gradient(task, k, &w0)?.iter().map(|x| x * x).sum::<f64>();
        }
        let (eta_nom, _) = eta_closed_forms(&channels[0].h, bounds, None, cfg.power, cfg.symbols());
        let n0 = eta_nom * ps / (cfg.model_dim as f64 * cfg.snr_linear());
        Ok(Self {
            rng,
            channels,
            budget,
            n0,
            n_a: cfg.adversary_noise_ratio * n0,
        })
    }

    /// Overrides the server noise power (the adversary noise follows).
    pub fn with_noise(mut self, n0: f64, n_a: f64) -> Self {
        self.n0 = n0;
        self.n_a = n_a;
        self
    }

    pub fn design_inputs(
        &self,
        cfg: &ExperimentConfig,
        task: &FlTask,
        bounds: &GradientBounds,
        t: usize,
    ) -> Result<DesignInputs> {
        Ok(DesignInputs {
            round: t,
            channel: self.channels[t - 1].clone(),
            bounds: bounds.clone(),
            symbols: cfg.symbols(),
            power: cfg.power,
            round_dp_radius: self.budget.round_radius(t)?,
            adversary_noise: self.n_a,
            mu: task.mu(),
            l: task.l(),
        })
    }
}

/// Output of one scheme's trajectory.
pub struct SchemeTrace {
    pub rows: Vec<RoundMetrics>,
    pub state: TrainState,
    pub plans: Vec<RoundPlan>,
}

/// Runs every configured scheme over one repetition.
pub fn run_repetition(cfg: &ExperimentConfig, task: &FlTask, bounds: &GradientBounds, rep: usize) -> Result<RepetitionResult> {
    let ctx = RepetitionContext::new(cfg, task, bounds, rep)?;
    let mut rows = Vec::with_capacity(cfg.schemes.len() * cfg.rounds);
    for &scheme in &cfg.schemes {
        let trace = run_scheme(cfg, task, bounds, &ctx, scheme, rep)?;
        rows.extend(trace.rows);
    }
    Ok(RepetitionResult {
        repetition: rep,
        n0: ctx.n0,
        n_a: ctx.n_a,
        rows,
    })
}

/// One training trajectory under `scheme`. Server noise and perturbation
/// draws use the same streams for every scheme.
pub fn run_scheme(
    cfg: &ExperimentConfig,
    task: &FlTask,
    bounds: &GradientBounds,
    ctx: &RepetitionContext,
    scheme: Scheme,
    rep: usize,
) -> Result<SchemeTrace> {
    let k = cfg.users;
    let d = cfg.model_dim;
    let symbols = cfg.symbols();
    let mut state = TrainState::new(task, cfg.w_bound, cfg.bound_scaling)?;
    let mut plans: Vec<RoundPlan> = Vec::with_capacity(cfg.rounds);
    let mut accounts = Vec::with_capacity(cfg.rounds);
    let mut rows = Vec::with_capacity(cfg.rounds);
    let radius = ctx.budget.radius();

    for t in 1..=cfg.rounds {
        let inputs = ctx.design_inputs(cfg, task, bounds, t)?;
        let channel = &inputs.channel;
        let plan = match scheme {
            Scheme::Nominal => RoundPlan::unperturbed(k, inputs.nominal_b(), cfg.power, symbols),
            Scheme::Uncorrelated => solve_p1_uncorrelated(&inputs)?,
            Scheme::Correlated => match plans.last() {
                Some(prev) => solve_p1_warm(&inputs, prev)?,
                None => solve_p1(&inputs)?,
            },
        };

        let grads = (0..k).map(|u| local_gradient(task, u, &state.w)).collect::<Result<Vec<_>>>()?;
        let norms: Vec<f64> = grads.iter().map(|g| g.iter().map(|x| x * x).sum::<f64>().sqrt()).collect();
        let perturbations = sample_perturbations(&plan, symbols, &mut ctx.rng.derive(&format!("round{t}/perturbation")))?;
        let signals = (0..k)
            .map(|u| build_tx(&plan, u, &grads[u], &perturbations.row(u).transpose(), channel.h[u]))
            .collect::<Result<Vec<_>>>()?;
        let z = ctx
            .rng
            .derive(&format!("round{t}/server_noise"))
            .sample_complex_gaussian(symbols, ctx.n0);
        let rx = server_receive_with_noise(&signals, &channel.h, z, ctx.n0)?;
        let estimate = estimate_global_gradient(&rx, plan.eta, k, d)?;
        state = train_round(&state, &estimate, task)?;

        let gains = effective_gains(channel)?;
        let cov = plan.covariance.as_hermitian();
        let m2 = effective_noise_variance(plan.eta, &gains.rho, cov, ctx.n_a)?;
        accounts.push(DpRoundAccount::new(t, sensitivity(plan.eta, bounds.gamma, gains.rho_max), m2)?);
        let check = check_theorem1(&accounts, &ctx.budget)?;

        let r = (scheme != Scheme::Nominal).then_some(&plan.covariance);
        let (eta_nom, eta_pert) = eta_closed_forms(&channel.h, bounds, r, cfg.power, symbols);
        let headroom = plan
            .expected_power(&inputs)
            .iter()
            .map(|p| (cfg.power - p) / cfg.power)
            .fold(f64::INFINITY, f64::min);
        rows.push(RoundMetrics {
            scheme,
            repetition: rep,
            round: t,
            eta: plan.eta,
            eta_nom,
            eta_pert,
            snr_server_db: to_db(snr_server(scheme, plan.eta, &norms, r, ctx.n0, d)),
            snr_server_alt_db: to_db(snr_server_alt(scheme, plan.eta, &norms, r, ctx.n0, d)),
            sinr_adv_db: to_db(sinr_adversary(scheme, plan.eta, &gains.rho, &norms, r, ctx.n_a, d)?),
            sinr_adv_nominal_db: to_db(sinr_adversary(Scheme::Nominal, eta_nom, &gains.rho, &norms, None, ctx.n_a, d)?),
            gap: *state.gap_history.last().expect("round appended"),
            dp_tau_cumulative: check.tau,
            dp_margin: radius - check.tau,
            power_headroom_min: headroom,
            solver_iters: plan.solver_iterations,
            kkt_residual: plan.kkt_residual,
        });
        plans.push(plan);
    }

    if scheme.is_perturbed() {
        let check = check_theorem1(&accounts, &ctx.budget)?;
        if !check.accepted() {
            return Err(Error::InfeasibleInputs(format!(
                "{scheme} run consumed tau = {:e} of radius {:e}",
                check.tau, radius
            )));
        }
    }
    Ok(SchemeTrace { rows, state, plans })
}
