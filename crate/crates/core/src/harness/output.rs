use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Scheme};
use super::run::{mean_stderr, run_experiment, AbortedRepetition, ExperimentResult, RoundMetrics, SchemeSummary};
use crate::error::{Error, Result};
use crate::learning::TaskSnapshot;

/// Column order of `metrics.csv`.
pub const CSV_COLUMNS: [&str; 13] = [
    "run_id",
    "scheme",
    "repetition",
    "round",
    "eta",
    "snr_server_db",
    "snr_server_alt_db",
    "sinr_adv_db",
    "gap",
    "dp_tau_cumulative",
    "dp_margin",
    "power_headroom_min",
    "solver_iters",
];

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::InvalidInput(format!("csv: {other:?}")),
    }
}

fn numeric(m: &RoundMetrics) -> [f64; 9] {
    [
        m.eta,
        m.snr_server_db,
        m.snr_server_alt_db,
        m.sinr_adv_db,
        m.gap,
        m.dp_tau_cumulative,
        m.dp_margin,
        m.power_headroom_min,
        m.solver_iters as f64,
    ]
}

/// Per-repetition rows followed by `mean` and `stderr` rows per scheme and round.
pub fn write_metrics_csv<W: std::io::Write>(result: &ExperimentResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_COLUMNS).map_err(csv_error)?;
    let id = result.run_id.as_str();
    for scheme in &result.config.schemes {
        for rep in &result.repetitions {
            for m in rep.rows.iter().filter(|m| m.scheme == *scheme) {
                let mut rec = vec![id.to_string(), scheme.to_string(), m.repetition.to_string(), m.round.to_string()];
                rec.extend(numeric(m)[..8].iter().map(|x| x.to_string()));
                rec.push(m.solver_iters.to_string());
                w.write_record(&rec).map_err(csv_error)?;
            }
        }
        for round in 1..=result.config.rounds {
            let cols: Vec<[f64; 9]> = result
                .repetitions
                .iter()
                .flat_map(|r| r.rows.iter())
                .filter(|m| m.scheme == *scheme && m.round == round)
                .map(numeric)
                .collect();
            let stats: Vec<(f64, f64)> = (0..9)
                .map(|c| mean_stderr(&cols.iter().map(|row| row[c]).collect::<Vec<_>>()))
                .collect();
            for (label, pick) in [("mean", 0usize), ("stderr", 1)] {
                let mut rec = vec![id.to_string(), scheme.to_string(), label.to_string(), round.to_string()];
                rec.extend(stats.iter().map(|s| if pick == 0 { s.0 } else { s.1 }.to_string()));
                w.write_record(&rec).map_err(csv_error)?;
            }
        }
    }
    w.flush()?;
    Ok(())
}

/// Replay manifest written next to the metrics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub run_id: String,
    pub version: String,
    pub config: ExperimentConfig,
    /// Streams are `SHA-256(seed || label)`; see `rng_labels`.
    pub seed: u64,
    pub rng_labels: Vec<String>,
    pub task: TaskSnapshot,
    pub summaries: Vec<SchemeSummary>,
    pub aborted: Vec<AbortedRepetition>,
}

impl RunManifest {
    pub fn new(result: &ExperimentResult) -> Self {
        Self {
            run_id: result.run_id.clone(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config: result.config.clone(),
            seed: result.config.seed,
            rng_labels: vec![
                "task".into(),
                "rep{r}/channel/{server,adversary}/round{t}/attempt{a}".into(),
                "rep{r}/allocation".into(),
                "rep{r}/round{t}/perturbation".into(),
                "rep{r}/round{t}/server_noise".into(),
            ],
            task: result.task.clone(),
            summaries: result.summaries.clone(),
            aborted: result.aborted.clone(),
        }
    }
}

/// Writes `<dir>/<run_id>/metrics.csv` and `run.json`; returns the run directory.
pub fn write_run(result: &ExperimentResult, dir: &Path) -> Result<PathBuf> {
    let run_dir = dir.join(&result.run_id);
    std::fs::create_dir_all(&run_dir)?;
    let file = std::fs::File::create(run_dir.join("metrics.csv"))?;
    write_metrics_csv(result, std::io::BufWriter::new(file))?;
    let manifest = serde_json::to_string_pretty(&RunManifest::new(result))?;
    std::fs::write(run_dir.join("run.json"), manifest + "\n")?;
    Ok(run_dir)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepParam {
    Epsilon,
    SnrDb,
}

impl SweepParam {
    pub fn key(self) -> &'static str {
        match self {
            SweepParam::Epsilon => "epsilon",
            SweepParam::SnrDb => "snr_db",
        }
    }

    /// `epsilon = 1..=10` or `snr_db = 0, 5, ..., 30`.
    pub fn default_values(self) -> Vec<f64> {
        match self {
            SweepParam::Epsilon => (1..=10).map(f64::from).collect(),
            SweepParam::SnrDb => (0..=6).map(|i| 5.0 * i as f64).collect(),
        }
    }

    fn apply(self, cfg: &mut ExperimentConfig, value: f64) {
        match self {
            SweepParam::Epsilon => cfg.epsilon = value,
            SweepParam::SnrDb => cfg.snr_db = value,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepPoint {
    pub value: f64,
    pub run_id: String,
    pub summaries: Vec<SchemeSummary>,
    pub aborted: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepResult {
    pub param: SweepParam,
    pub base: ExperimentConfig,
    pub points: Vec<SweepPoint>,
}

impl SweepResult {
    /// Mean final gap of `scheme` at each sweep value.
    pub fn curve(&self, scheme: Scheme) -> Vec<(f64, f64)> {
        self.points
            .iter()
            .filter_map(|p| {
                p.summaries
                    .iter()
                    .find(|s| s.scheme == scheme)
                    .map(|s| (p.value, s.mean_final_gap))
            })
            .collect()
    }
}

pub fn sweep(base: &ExperimentConfig, param: SweepParam, values: &[f64]) -> Result<SweepResult> {
    let mut points = Vec::with_capacity(values.len());
    for &v in values {
        let mut cfg = base.clone();
        param.apply(&mut cfg, v);
        log::info!("sweep {} = {v}", param.key());
        let result = run_experiment(&cfg)?;
        points.push(SweepPoint {
            value: v,
            run_id: result.run_id,
            summaries: result.summaries,
            aborted: result.aborted.len(),
        });
    }
    Ok(SweepResult {
        param,
        base: base.clone(),
        points,
    })
}

pub fn write_sweep_csv<W: std::io::Write>(sweep: &SweepResult, out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["param", "value", "run_id", "scheme", "mean_gap", "stderr_gap", "completed", "aborted"])
        .map_err(csv_error)?;
    for p in &sweep.points {
        for s in &p.summaries {
            w.write_record([
                sweep.param.key().to_string(),
                p.value.to_string(),
                p.run_id.clone(),
                s.scheme.to_string(),
                s.mean_final_gap.to_string(),
                s.stderr_final_gap.to_string(),
                s.completed.to_string(),
                p.aborted.to_string(),
            ])
            .map_err(csv_error)?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn plot_recipe(param: SweepParam) -> String {
    let x = param.key();
    format!(
        "# Plot recipe for sweep.csv\n\
         x: column 'value' ({x})\n\
         y: column 'mean_gap' (normalized optimality gap), log scale\n\
         error bars: column 'stderr_gap'\n\
         series: one line per value of column 'scheme' (nominal, uncorrelated, correlated)\n"
    )
}

/// Writes `sweep.csv`, `sweep.json` and `plot_recipe.txt` into `dir`.
pub fn write_sweep(sweep: &SweepResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir)?;
    let file = std::fs::File::create(dir.join("sweep.csv"))?;
    write_sweep_csv(sweep, std::io::BufWriter::new(file))?;
    std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(sweep)? + "\n")?;
    std::fs::write(dir.join("plot_recipe.txt"), plot_recipe(sweep.param))?;
    Ok(())
}
