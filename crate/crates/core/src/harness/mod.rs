//! Experiment orchestration: three-scheme comparison, sweeps and output.
//!
//! Every repetition draws one channel path and one noise calibration that all
//! schemes share, and each scheme reads its perturbation and receiver noise
//! from the same labelled streams.

mod config;
mod metrics;
mod output;
mod plan_file;
mod run;

pub use config::{ExperimentConfig, Scheme};
pub use metrics::{eta_closed_forms, sinr_adversary, snr_server, snr_server_alt, to_db};
pub use output::{
    plot_recipe, sweep, write_metrics_csv, write_run, write_sweep, write_sweep_csv, RunManifest, SweepParam,
    SweepPoint, SweepResult, CSV_COLUMNS,
};
pub use plan_file::{design_plans, DesignedRound, PlanFile};
pub use run::{
    experiment_task, run_experiment, run_id, run_repetition, run_scheme, worker_threads, AbortedRepetition,
    ExperimentResult, RepetitionContext, RepetitionResult, RoundMetrics, SchemeSummary, SchemeTrace,
    MAX_ABORT_FRACTION,
};

#[cfg(test)]
mod tests;
