use super::*;
use crate::airlink::build_tx;
use crate::covdesign::{sample_perturbations, solve_p1, solve_p1_uncorrelated};
use crate::error::Error;
use crate::learning::{gradient_bounds, local_gradient};
use crate::numerics::RngStream;

fn small() -> ExperimentConfig {
    ExperimentConfig {
        users: 4,
        samples_per_user: 50,
        model_dim: 6,
        rounds: 6,
        repetitions: 3,
        seed: 11,
        ..Default::default()
    }
}

#[test]
fn defaults_and_json() {
    let cfg = ExperimentConfig::default();
    assert_eq!((cfg.users, cfg.samples_per_user, cfg.model_dim, cfg.rounds), (10, 1000, 10, 30));
    assert_eq!((cfg.zeta, cfg.delta, cfg.kappa_server, cfg.kappa_adversary, cfg.theta), (0.5e-4, 0.01, 5.0, 0.0, 0.0));
    assert_eq!(cfg.repetitions, 100);
    let back = ExperimentConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(back, cfg);
    let partial = ExperimentConfig::from_json(r#"{"users": 3, "schemes": ["correlated"]}"#).unwrap();
    assert_eq!(partial.users, 3);
    assert_eq!(partial.schemes, vec![Scheme::Correlated]);
    assert!(matches!(ExperimentConfig::from_json(r#"{"userz": 3}"#), Err(Error::ConfigError(_))));
    assert!(matches!(ExperimentConfig::from_json(r#"{"delta": 2.0}"#), Err(Error::ConfigError(_))));
}

#[test]
fn set_overrides_keys() {
    let mut cfg = ExperimentConfig::default();
    cfg.set("seed", "7").unwrap();
    cfg.set("epsilon", "2.5").unwrap();
    cfg.set("schemes", "nominal,correlated").unwrap();
    cfg.set("allocation", "dirichlet").unwrap();
    assert_eq!(cfg.seed, 7);
    assert_eq!(cfg.epsilon, 2.5);
    assert_eq!(cfg.schemes, vec![Scheme::Nominal, Scheme::Correlated]);
    assert!(cfg.set("nope", "1").is_err());
    assert!(cfg.set("users", "abc").is_err());
    assert!(cfg.set("users", "0").is_err());
    assert_eq!(cfg.users, 10);
}

#[test]
fn same_seed_gives_identical_csv() {
    let cfg = ExperimentConfig {
        repetitions: 1,
        ..small()
    };
    let render = || {
        let mut buf = Vec::new();
        write_metrics_csv(&run_experiment(&cfg).unwrap(), &mut buf).unwrap();
        buf
    };
    let a = render();
    assert_eq!(a, render());
    let text = String::from_utf8(a).unwrap();
    assert_eq!(text.lines().next().unwrap(), CSV_COLUMNS.join(","));
    // 3 schemes x 6 rounds, plus mean and stderr rows.
    assert_eq!(text.lines().count(), 1 + 3 * 6 + 3 * 6 * 2);
}

#[test]
fn round_invariants() {
    let cfg = small();
    let result = run_experiment(&cfg).unwrap();
    assert!(result.aborted.is_empty());
    let radius = crate::privacy::dp_radius(cfg.epsilon, cfg.delta);
    for rep in &result.repetitions {
        for m in &rep.rows {
            for x in [m.eta, m.snr_server_db, m.sinr_adv_db, m.gap, m.dp_tau_cumulative] {
                assert!(x.is_finite());
            }
            assert!(m.eta_pert <= m.eta_nom * (1.0 + 1e-12));
            assert!(m.power_headroom_min >= -1e-6, "{m:?}");
            if m.scheme.is_perturbed() {
                assert!(m.dp_tau_cumulative <= radius * (1.0 + 1e-9));
            }
        }
        // Correlated SNR equals the unperturbed formula at its own eta.
        for m in rep.rows.iter().filter(|m| m.scheme == Scheme::Correlated) {
            assert_eq!(m.snr_server_db, m.snr_server_alt_db);
        }
    }
    for s in &result.summaries {
        assert_eq!(s.completed, cfg.repetitions);
        assert!(s.mean_final_gap.is_finite());
    }
    assert!(result.summary(Scheme::Correlated).unwrap().max_dp_usage <= 1.0 + 1e-9);
}

#[test]
fn nominal_budget_is_only_monitored() {
    // The unperturbed scheme may overspend the budget; that is reported, not an abort.
    let cfg = ExperimentConfig {
        epsilon: 0.05,
        schemes: vec![Scheme::Nominal],
        ..small()
    };
    let result = run_experiment(&cfg).unwrap();
    assert!(result.summary(Scheme::Nominal).unwrap().max_dp_usage > 1.0);
}

#[test]
fn calibrated_noise_hits_target_snr() {
    let cfg = small();
    let task = experiment_task(&cfg).unwrap();
    let bounds = gradient_bounds(&task, cfg.w_bound).unwrap();
    let ctx = RepetitionContext::new(&cfg, &task, &bounds, 0).unwrap();
    let trace = run_scheme(&cfg, &task, &bounds, &ctx, Scheme::Nominal, 0).unwrap();
    assert!((trace.rows[0].snr_server_db - cfg.snr_db).abs() < 1e-9);
    assert_eq!(ctx.n_a, cfg.adversary_noise_ratio * ctx.n0);
}

#[test]
fn realized_power_within_budget() {
    let cfg = small();
    let task = experiment_task(&cfg).unwrap();
    let bounds = gradient_bounds(&task, cfg.w_bound).unwrap();
    let ctx = RepetitionContext::new(&cfg, &task, &bounds, 1).unwrap();
    let inputs = ctx.design_inputs(&cfg, &task, &bounds, 1).unwrap();
    let w = vec![0.0; cfg.model_dim];
    let grads: Vec<Vec<f64>> = (0..cfg.users).map(|k| local_gradient(&task, k, &w).unwrap()).collect();
    for plan in [solve_p1(&inputs).unwrap(), solve_p1_uncorrelated(&inputs).unwrap()] {
        let draws = 4000;
        let mut mean = vec![0.0; cfg.users];
        let mut rng = RngStream::new(3, "power");
        for _ in 0..draws {
            let n = sample_perturbations(&plan, cfg.symbols(), &mut rng).unwrap();
            for k in 0..cfg.users {
                let tx = build_tx(&plan, k, &grads[k], &n.row(k).transpose(), inputs.channel.h[k]).unwrap();
                mean[k] += tx.symbols.norm_squared() / draws as f64;
            }
        }
        for p in mean {
            assert!(p <= cfg.power * 1.02, "{p}");
        }
    }
}

#[test]
fn too_many_aborts_fail_the_run() {
    // A model ball that excludes w* aborts every repetition.
    let cfg = ExperimentConfig {
        w_bound: 0.01,
        ..small()
    };
    assert!(matches!(run_experiment(&cfg), Err(Error::ConfigError(_))));
}

#[test]
fn run_files_written() {
    let cfg = ExperimentConfig {
        repetitions: 1,
        rounds: 2,
        ..small()
    };
    let dir = tempfile::tempdir().unwrap();
    let result = run_experiment(&cfg).unwrap();
    let run_dir = write_run(&result, dir.path()).unwrap();
    assert!(run_dir.join("metrics.csv").exists());
    let manifest: RunManifest =
        serde_json::from_str(&std::fs::read_to_string(run_dir.join("run.json")).unwrap()).unwrap();
    assert_eq!(manifest.config, cfg);
    assert_eq!(manifest.run_id, run_id(&cfg));
}

#[test]
fn sweep_outputs() {
    let cfg = ExperimentConfig {
        repetitions: 2,
        rounds: 3,
        ..small()
    };
    let s = sweep(&cfg, SweepParam::Epsilon, &[1.0, 4.0]).unwrap();
    assert_eq!(s.points.len(), 2);
    assert_eq!(s.curve(Scheme::Correlated).len(), 2);
    let dir = tempfile::tempdir().unwrap();
    write_sweep(&s, dir.path()).unwrap();
    let csv = std::fs::read_to_string(dir.path().join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 3);
    assert!(dir.path().join("plot_recipe.txt").exists());
    assert_eq!(SweepParam::SnrDb.default_values(), vec![0.0, 5.0, 10.0, 15.0, 20.0, 25.0, 30.0]);
}

#[test]
fn designed_plans_pass_audit() {
    let cfg = small();
    let file = design_plans(&cfg, 0).unwrap();
    assert_eq!(file.rounds.len(), cfg.rounds);
    for r in &file.rounds {
        assert!(r.privacy_residual <= 1e-8 && r.power_residual <= 1e-8, "{r:?}");
    }
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("plan.json");
    file.save(&path).unwrap();
    let back = PlanFile::load(&path).unwrap();
    assert_eq!(back, file);
    let report = crate::privacy::monte_carlo_dp_audit(
        &back.audit_rounds().unwrap(),
        &back.budget().unwrap(),
        &RngStream::new(1, "audit"),
        200_000,
    )
    .unwrap();
    assert!(report.tau < back.budget().unwrap().radius() * (1.0 + 1e-9));
    assert!(report.failure_rate <= cfg.delta + report.three_sigma, "{report:?}");
}
