//! Quick invariant checks; each prints one PASS/FAIL line.

use otafl_core::covdesign::{lift, reduce_zero_sum, sample_perturbations, CovMatrix, RoundPlan};
use otafl_core::harness::{run_experiment, write_metrics_csv, ExperimentConfig};
use otafl_core::learning::generate_task;
use otafl_core::numerics::eig_hermitian;
use otafl_core::privacy::{c_function, c_inverse, dp_radius};
use otafl_core::{CMatrix, Complex64, RngStream};

type Check = fn() -> Result<(), String>;

fn zero_sum_cancellation() -> Result<(), String> {
    let mut rng = RngStream::new(1, "selftest/zero-sum");
    for trial in 0..100 {
        let k = 2 + trial % 10;
        let v = reduce_zero_sum(k).map_err(|e| e.to_string())?;
        let a = CMatrix::from_fn(k - 1, k - 1, |_, _| rng.complex_gaussian(1.0));
        let s = &a * a.adjoint();
        let cov = CovMatrix::zero_sum(lift(&v, &s)).map_err(|e| e.to_string())?;
        let mut plan = RoundPlan::unperturbed(k, 1.0, 1.0, 8);
        plan.covariance = cov;
        let n = sample_perturbations(&plan, 8, &mut rng).map_err(|e| e.to_string())?;
        let tol = 1e-9 * n.norm();
        for col in n.column_iter() {
            let sum: Complex64 = col.iter().sum();
            if sum.norm() > tol {
                return Err(format!("K = {k}: column sum {:.3e}", sum.norm()));
            }
        }
    }
    Ok(())
}

fn c_inverse_round_trip() -> Result<(), String> {
    for i in 0..50 {
        let y = 1.5 * 10f64.powf(i as f64 / 10.0);
        let x = c_inverse(y).map_err(|e| e.to_string())?;
        let back = c_function(x).map_err(|e| e.to_string())?;
        if (back - y).abs() > 1e-9 * y {
            return Err(format!("C(C^-1({y})) = {back}"));
        }
    }
    Ok(())
}

fn radius_formula() -> Result<(), String> {
    let c = c_inverse(100.0).map_err(|e| e.to_string())?;
    let expected = ((5.0 + c * c).sqrt() - c).powi(2);
    let got = dp_radius(5.0, 0.01);
    if (got - expected).abs() > 1e-12 * expected {
        return Err(format!("radius {got} vs {expected}"));
    }
    Ok(())
}

fn equicorrelated_instance() -> Result<(), String> {
    let r = CovMatrix::equicorrelated(3, 4.0).map_err(|e| e.to_string())?;
    let eig = eig_hermitian(r.as_hermitian()).map_err(|e| e.to_string())?;
    let mut v = eig.values.clone();
    v.sort_by(f64::total_cmp);
    if v[0].abs() > 1e-12 || (v[1] - 6.0).abs() > 1e-12 || (v[2] - 6.0).abs() > 1e-12 {
        return Err(format!("eigenvalues {v:?}"));
    }
    Ok(())
}

fn optimum_is_stationary() -> Result<(), String> {
    let task = generate_task(4, 100, 6, 1e-3, &mut RngStream::new(2, "selftest/task")).map_err(|e| e.to_string())?;
    let g = task.global_gradient(task.w_star());
    let n = g.iter().map(|x| x * x).sum::<f64>().sqrt();
    if n > 1e-8 * task.l() {
        return Err(format!("||grad F(w*)|| = {n:.3e}"));
    }
    Ok(())
}

fn deterministic_run() -> Result<(), String> {
    let cfg = ExperimentConfig {
        users: 4,
        samples_per_user: 50,
        model_dim: 6,
        rounds: 4,
        repetitions: 2,
        seed: 5,
        ..Default::default()
    };
    let render = || -> Result<Vec<u8>, String> {
        let result = run_experiment(&cfg).map_err(|e| e.to_string())?;
        let mut buf = Vec::new();
        write_metrics_csv(&result, &mut buf).map_err(|e| e.to_string())?;
        Ok(buf)
    };
    if render()? != render()? {
        return Err("CSV differs between identical runs".into());
    }
    Ok(())
}

pub fn run() -> bool {
    let checks: [(&str, Check); 6] = [
        ("zero-sum cancellation", zero_sum_cancellation),
        ("c_inverse round trip", c_inverse_round_trip),
        ("dp radius formula", radius_formula),
        ("equal-variance zero-sum instance", equicorrelated_instance),
        ("ridge optimum stationary", optimum_is_stationary),
        ("deterministic run", deterministic_run),
    ];
    let mut ok = true;
    for (name, check) in checks {
        match check() {
            Ok(()) => println!("PASS {name}"),
            Err(why) => {
                ok = false;
                println!("FAIL {name}: {why}");
            }
        }
    }
    ok
}
