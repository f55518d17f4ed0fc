use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use otafl_core::covdesign::CovMatrix;
use otafl_core::harness::{
    design_plans, run_experiment, sweep, write_run, write_sweep, ExperimentConfig, PlanFile, SweepParam,
};
use otafl_core::numerics::eig_hermitian;
use otafl_core::privacy::{monte_carlo_dp_audit, MIN_AUDIT_DRAWS};
use otafl_core::{Error, RngStream};

mod selftest;

#[derive(Parser)]
#[command(name = "otafl", version, about = "Over-the-air federated learning with zero-sum perturbations")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct ConfigArgs {
    /// JSON configuration file; defaults are used for missing keys.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repetitions: Option<usize>,
    #[arg(long)]
    epsilon: Option<f64>,
    #[arg(long)]
    snr_db: Option<f64>,
    /// Any other config key, as `key=value`. Repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl ConfigArgs {
    fn resolve(&self) -> Result<ExperimentConfig, Error> {
        let mut cfg = match &self.config {
            Some(p) => ExperimentConfig::load(p)?,
            None => ExperimentConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::ConfigError(format!("expected KEY=VALUE, got '{kv}'")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(s) = self.seed {
            cfg.seed = s;
        }
        if let Some(r) = self.repetitions {
            cfg.repetitions = r;
        }
        if let Some(e) = self.epsilon {
            cfg.epsilon = e;
        }
        if let Some(s) = self.snr_db {
            cfg.snr_db = s;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Subcommand)]
enum Command {
    /// Run one experiment and write metrics.csv and run.json.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value = "results")]
        out: PathBuf,
    },
    /// Sweep epsilon (default 1..=10) at the configured SNR.
    SweepEpsilon {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value = "results/sweep-epsilon")]
        out: PathBuf,
    },
    /// Sweep the target SNR in dB (default 0, 5, ..., 30) at the configured epsilon.
    SweepSnr {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, value_delimiter = ',')]
        values: Option<Vec<f64>>,
        #[arg(long, default_value = "results/sweep-snr")]
        out: PathBuf,
    },
    /// Solve the correlated design for one repetition, or inspect the
    /// equal-variance zero-sum family with --diag.
    Design {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Number of users.
        #[arg(long)]
        k: Option<usize>,
        /// Common diagonal entry of the zero-sum family to check.
        #[arg(long)]
        diag: Option<f64>,
        #[arg(long, default_value_t = 0)]
        repetition: usize,
        /// Where to save the plans for a later audit.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Monte-Carlo privacy audit of a saved plan.
    Audit {
        #[arg(long)]
        plan: PathBuf,
        #[arg(long, default_value_t = 1_000_000)]
        draws: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Fast invariant checks.
    Selftest,
}

fn exit_code(e: &Error) -> u8 {
    match e {
        Error::ConfigError(_) | Error::DimensionTooSmall(_) | Error::Json(_) | Error::Io(_) | Error::InvalidInput(_) => 2,
        Error::SolverNonConvergence { .. } | Error::InfeasibleInputs(_) => 3,
        _ => 1,
    }
}

fn print_matrix(m: &otafl_core::HermitianMatrix) {
    let k = m.dim();
    for i in 0..k {
        let row: Vec<String> = (0..k)
            .map(|j| {
                let z = m.get(i, j);
                if z.im.abs() < 1e-12 * (1.0 + z.re.abs()) {
                    format!("{:>12.6}", z.re)
                } else {
                    format!("{:>10.4}{:+.4}i", z.re, z.im)
                }
            })
            .collect();
        println!("  [{}]", row.join(" "));
    }
}

fn design_family(k: usize, a: f64) -> Result<(), Error> {
    let r = CovMatrix::equicorrelated(k, a)?;
    println!("zero-sum covariances with R_kk = {a} for K = {k}:");
    println!("  R = V S V^H, V an orthonormal basis of the zero-sum subspace, S >= 0 of size {}", k - 1);
    println!("  subject to diag(V S V^H) = {a}");
    let scale = a * k as f64 / (k - 1) as f64;
    println!("equal-correlation member R = {scale} I - {} J:", a / (k - 1) as f64);
    print_matrix(r.as_hermitian());
    let eig = eig_hermitian(r.as_hermitian())?;
    let values: Vec<String> = eig
        .values
        .iter()
        .map(|v| format!("{:.6}", if v.abs() < 1e-12 * scale { 0.0 } else { *v }))
        .collect();
    println!("eigenvalues: {{{}}}", values.join(", "));
    println!("entry sum u^H R u = {:.3e}", r.as_hermitian().entry_sum());
    let psd = eig.min_value() >= -1e-9 * scale;
    println!("feasible: {}", if psd { "yes" } else { "no" });
    if !psd {
        return Err(Error::InfeasibleInputs("family member is not PSD".into()));
    }
    Ok(())
}

fn run_sweep(param: SweepParam, cfg: &ConfigArgs, values: Option<Vec<f64>>, out: &std::path::Path) -> Result<(), Error> {
    let cfg = cfg.resolve()?;
    let values = values.unwrap_or_else(|| param.default_values());
    let result = sweep(&cfg, param, &values)?;
    for p in &result.points {
        let cells: Vec<String> = p
            .summaries
            .iter()
            .map(|s| format!("{} {:.4e}", s.scheme, s.mean_final_gap))
            .collect();
        println!("{} = {:<6} {}", param.key(), p.value, cells.join("  "));
    }
    write_sweep(&result, out)?;
    println!("wrote {}", out.display());
    Ok(())
}

fn run(cli: Cli) -> Result<(), Error> {
    match cli.command {
        Command::Run { cfg, out } => {
            let cfg = cfg.resolve()?;
            let result = run_experiment(&cfg)?;
            let dir = write_run(&result, &out)?;
            for s in &result.summaries {
                println!(
                    "{:<13} final gap {:.6e} +/- {:.2e} ({} reps)",
                    s.scheme, s.mean_final_gap, s.stderr_final_gap, s.completed
                );
            }
            println!("wrote {}", dir.display());
        }
        Command::SweepEpsilon { cfg, values, out } => run_sweep(SweepParam::Epsilon, &cfg, values, &out)?,
        Command::SweepSnr { cfg, values, out } => run_sweep(SweepParam::SnrDb, &cfg, values, &out)?,
        Command::Design {
            cfg,
            k,
            diag,
            repetition,
            out,
        } => {
            if let Some(a) = diag {
                return design_family(k.unwrap_or(3), a);
            }
            let mut cfg = cfg.resolve()?;
            if let Some(k) = k {
                cfg.users = k;
                cfg.validate()?;
            }
            let file = design_plans(&cfg, repetition)?;
            let first = &file.rounds[0];
            let plan = otafl_core::covdesign::RoundPlan::from_record(&first.plan)?;
            println!("round 1 covariance R:");
            print_matrix(plan.covariance.as_hermitian());
            println!("eta = {:.6e}  b = {:.6e}", plan.eta, plan.b);
            println!(
                "residuals: privacy {:.3e}  power {:.3e}  zero-sum {:.3e}  kkt {:.3e}",
                first.privacy_residual,
                first.power_residual,
                plan.covariance.null_residual(),
                plan.kkt_residual
            );
            let worst = file
                .rounds
                .iter()
                .map(|r| r.privacy_residual.max(r.power_residual))
                .fold(f64::NEG_INFINITY, f64::max);
            println!("{} rounds designed, worst constraint residual {worst:.3e}", file.rounds.len());
            if let Some(path) = out {
                file.save(&path)?;
                println!("wrote {}", path.display());
            }
        }
        Command::Audit { plan, draws, seed } => {
            if draws < MIN_AUDIT_DRAWS {
                return Err(Error::ConfigError(format!("--draws must be at least {MIN_AUDIT_DRAWS}")));
            }
            let file = PlanFile::load(&plan)?;
            let budget = file.budget()?;
            let report = monte_carlo_dp_audit(&file.audit_rounds()?, &budget, &RngStream::new(seed, "audit"), draws)?;
            println!("tau = {:.6e}  radius = {:.6e}", report.tau, budget.radius());
            println!(
                "failure rate {:.6e} over {} draws (analytic {:.6e}, delta {})",
                report.failure_rate, report.draws, report.analytic_rate, budget.delta
            );
            let ok = report.failure_rate <= budget.delta + report.three_sigma;
            println!("{}", if ok { "PASS" } else { "FAIL" });
            if !ok {
                return Err(Error::InfeasibleInputs("audit failure rate exceeds delta".into()));
            }
        }
        Command::Selftest => {
            if !selftest::run() {
                return Err(Error::InvalidInput("selftest failed".into()));
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return ExitCode::from(code);
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
