use super::*;

fn default_task(seed: u64) -> FlTask {
    generate_task(10, 1000, 10, 0.5e-4, &mut RngStream::new(seed, "task")).unwrap()
}

fn small_task(seed: u64) -> FlTask {
    generate_task(4, 50, 6, 1e-3, &mut RngStream::new(seed, "small")).unwrap()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

#[test]
fn rejects_small_dimension() {
    let err = generate_task(2, 10, 4, 1e-3, &mut RngStream::new(0, "t")).unwrap_err();
    assert!(matches!(err, Error::DimensionTooSmall(4)));
}

#[test]
fn default_task_constants() {
    let task = default_task(1);
    assert!(task.mu() > 0.0 && task.l().is_finite() && task.mu() <= task.l());
    assert_eq!(task.data().nrows(), 10_000);
    // Gradient of the averaged objective vanishes at w*.
    let g = task.global_gradient(task.w_star());
    let scale = task.cross.iter().fold(DVector::zeros(10), |a, c| a + c).norm();
    assert!(norm(&g) * task.users() as f64 <= 1e-8 * scale, "{}", norm(&g));
    assert!(task.f_star() > 0.0);
}

#[test]
fn single_sample_gradient_by_hand() {
    let mut data = DMatrix::zeros(1, 5);
    data[(0, 0)] = 1.0;
    let task = FlTask::from_data(1, 1, data, DVector::zeros(1), 0.0);
    // Xi = e1 e1^T is singular, so construction must refuse it.
    assert!(task.is_err());
    let mut data = DMatrix::zeros(1, 5);
    data[(0, 0)] = 1.0;
    let task = FlTask::from_data(1, 1, data, DVector::zeros(1), 1e-300).unwrap();
    let g = local_gradient(&task, 0, &[1.0, 0.0, 0.0, 0.0, 0.0]).unwrap();
    assert!((g[0] - 1.0).abs() < 1e-12 && g[1..].iter().all(|x| x.abs() < 1e-12));
}

#[test]
fn local_gradient_matches_sample_sum_and_finite_differences() {
    let task = small_task(2);
    let mut rng = RngStream::new(3, "w");
    let w: Vec<f64> = (0..task.dim()).map(|_| rng.standard_normal()).collect();
    for k in 0..task.users() {
        let g = local_gradient(&task, k, &w).unwrap();
        let mut direct = vec![0.0; task.dim()];
        for i in task.partition(k) {
            for (a, b) in direct.iter_mut().zip(task.sample_gradient(i, &w)) {
                *a += b;
            }
        }
        for (a, b) in g.iter().zip(&direct) {
            assert!((a - b).abs() <= 1e-10 * (1.0 + b.abs()));
        }
        let h = 1e-5;
        for i in 0..task.dim() {
            let mut wp = w.clone();
            let mut wm = w.clone();
            wp[i] += h;
            wm[i] -= h;
            let fd = (task.local_loss(k, &wp).unwrap() - task.local_loss(k, &wm).unwrap()) / (2.0 * h);
            assert!((fd - g[i]).abs() <= 1e-6 * g[i].abs().max(1.0), "{fd} vs {}", g[i]);
        }
    }
    assert!(matches!(local_gradient(&task, 4, &w), Err(Error::IndexOutOfRange { .. })));
}

#[test]
fn noise_free_labels_recover_pattern() {
    let zeta = 0.5e-4;
    let task = generate_task_with_noise(10, 1000, 10, zeta, 0.0, &mut RngStream::new(4, "clean")).unwrap();
    let w = task.w_star();
    for (i, wi) in w.iter().enumerate() {
        let target = match i {
            1 => 1.0,
            4 => 3.0,
            _ => 0.0,
        };
        // Ridge shrinkage is about 2 D_tot zeta / lambda(U^T U) ~ 1e-4 relative.
        assert!((wi - target).abs() < 1e-3, "w[{i}] = {wi}");
    }
    // Only the regularizer remains, up to the shrinkage residual.
    let reg = task.samples_per_user() as f64 * zeta * norm(w).powi(2);
    assert!((task.f_star() - reg).abs() < 1e-2 * reg, "{} vs {reg}", task.f_star());
}

#[test]
fn permuting_samples_keeps_constants() {
    let task = small_task(5);
    let n = task.data().nrows();
    let perm: Vec<usize> = (0..n).rev().collect();
    let data = DMatrix::from_fn(n, task.dim(), |i, j| task.data()[(perm[i], j)]);
    let labels = DVector::from_fn(n, |i, _| task.labels()[perm[i]]);
    let other = FlTask::from_data(task.users(), task.samples_per_user(), data, labels, task.zeta()).unwrap();
    assert!((other.mu() - task.mu()).abs() < 1e-9 * task.mu());
    assert!((other.l() - task.l()).abs() < 1e-9 * task.l());
    for (a, b) in other.w_star().iter().zip(task.w_star()) {
        assert!((a - b).abs() < 1e-9);
    }
}

#[test]
fn pl_and_smoothness_of_averaged_objective() {
    let task = small_task(6);
    let k = task.users() as f64;
    let (mu_eff, l_eff) = (task.mu() / k, task.l() / k);
    let mut rng = RngStream::new(7, "pairs");
    for _ in 0..1000 {
        let w: Vec<f64> = (0..task.dim()).map(|_| 3.0 * rng.standard_normal()).collect();
        let v: Vec<f64> = (0..task.dim()).map(|_| 3.0 * rng.standard_normal()).collect();
        let gw = task.global_gradient(&w);
        let gv = task.global_gradient(&v);
        let diff: Vec<f64> = gw.iter().zip(&gv).map(|(a, b)| a - b).collect();
        let dist: Vec<f64> = w.iter().zip(&v).map(|(a, b)| a - b).collect();
        assert!(norm(&diff) <= l_eff * norm(&dist) * (1.0 + 1e-10));
        let gap = task.loss(&w) - task.f_star();
        assert!(norm(&gw).powi(2) >= 2.0 * mu_eff * gap * (1.0 - 1e-10));
    }
}

#[test]
fn gradient_bounds_hold_along_trajectory() {
    let task = small_task(8);
    let bounds = gradient_bounds(&task, DEFAULT_W_BOUND).unwrap();
    assert!(bounds.consistent_with(task.samples_per_user()));
    let mut state = TrainState::new(&task, DEFAULT_W_BOUND, BoundScaling::Consistent).unwrap();
    let mut rng = RngStream::new(9, "noise");
    for _ in 0..30 {
        for i in 0..task.data().nrows() {
            assert!(norm(&task.sample_gradient(i, &state.w)) <= bounds.gamma);
        }
        for k in 0..task.users() {
            assert!(norm(&local_gradient(&task, k, &state.w).unwrap()) <= bounds.per_user[k]);
        }
        let g: Vec<f64> = task
            .global_gradient(&state.w)
            .iter()
            .map(|g| g + 5.0 * rng.standard_normal())
            .collect();
        state = train_round(&state, &g, &task).unwrap();
        assert!(norm(&state.w) <= DEFAULT_W_BOUND * (1.0 + 1e-12));
    }
    assert_eq!(state.loss_history.len(), 30);
    assert_eq!(state.gap_history.len(), 30);
}

#[test]
fn exact_gradient_descent_contracts_geometrically() {
    let task = default_task(10);
    let mut state = TrainState::new(&task, DEFAULT_W_BOUND, BoundScaling::Consistent).unwrap();
    let gap0 = task.loss(&state.w) - task.f_star();
    let bound = convergence_bound_trajectory(&task, &[1.0; 30], 0.0, gap0, BoundScaling::Consistent).unwrap();
    for t in 1..=30 {
        let g = task.global_gradient(&state.w);
        state = train_round(&state, &g, &task).unwrap();
        let gap = state.loss_history[t - 1] - task.f_star();
        assert!(gap <= bound[t] * (1.0 + 1e-9) + 1e-12, "t={t}: {gap} > {}", bound[t]);
        let rate = (1.0 - task.mu() / task.l()).powi(t as i32);
        assert!((bound[t] - rate * gap0).abs() <= 1e-12 * gap0);
    }
}

#[test]
fn zero_gradient_leaves_model() {
    let task = small_task(11);
    let state = TrainState::starting_at(&task, vec![0.5; 6], DEFAULT_W_BOUND, BoundScaling::Consistent).unwrap();
    let next = train_round(&state, &[0.0; 6], &task).unwrap();
    assert_eq!(next.w, state.w);
    assert_eq!(next.round, 1);
}

#[test]
fn one_step_on_single_sample_task() {
    // mu = 2 e1, nu = 1, zeta = 1/2: Xi = mu mu^T + I has L = 5 and the step
    // from zero lands at 2/5 e1, which is also w*.
    let mut data = DMatrix::zeros(1, 5);
    data[(0, 0)] = 2.0;
    let task = FlTask::from_data(1, 1, data, DVector::from_element(1, 1.0), 0.5).unwrap();
    assert!((task.l() - 5.0).abs() < 1e-12 && (task.mu() - 1.0).abs() < 1e-12);
    let state = TrainState::new(&task, DEFAULT_W_BOUND, BoundScaling::Consistent).unwrap();
    let g = task.global_gradient(&state.w);
    let next = train_round(&state, &g, &task).unwrap();
    assert!((next.w[0] - 0.4).abs() < 1e-15);
    assert!(next.w[1..].iter().all(|x| *x == 0.0));
    assert!((task.w_star()[0] - 0.4).abs() < 1e-15);
}

#[test]
fn projection_and_bound_checks() {
    let task = small_task(12);
    let err = TrainState::new(&task, 0.5, BoundScaling::Consistent).unwrap_err();
    assert!(matches!(err, Error::ConfigError(_)));
    let state = TrainState::new(&task, 4.0, BoundScaling::Consistent).unwrap();
    let next = train_round(&state, &[-1e6; 6], &task).unwrap();
    assert!((norm(&next.w) - 4.0).abs() < 1e-12);
}

#[test]
fn bound_single_round_substitution() {
    let task = small_task(13);
    let (d, k, dd) = (6.0, 4.0, 50.0);
    let (gap0, n0) = (2.5, 0.3);
    let c = 1.0 - task.mu() / task.l();
    let lit = convergence_bound(&task, &[1.0], n0, gap0, BoundScaling::Literal).unwrap();
    let expected = gap0 * c + d * n0 / (2.0 * task.l() * (k * dd) * (k * dd));
    assert!((lit - expected).abs() < 1e-14 * expected);
    let cons = convergence_bound(&task, &[1.0], n0, gap0, BoundScaling::Consistent).unwrap();
    let expected = gap0 * c + d * n0 / (4.0 * k * task.l());
    assert!((cons - expected).abs() < 1e-14 * expected);
    assert!(convergence_bound(&task, &[1.0, 0.0], n0, gap0, BoundScaling::Consistent).is_err());
}

#[test]
fn bound_matches_explicit_sum() {
    let task = small_task(14);
    let etas = [0.5, 2.0, 1.0, 0.25];
    let (gap0, n0) = (1.0, 0.1);
    let c = 1.0 - task.mu() / task.l();
    let t = etas.len() as i32;
    let sum: f64 = etas
        .iter()
        .enumerate()
        .map(|(i, e)| c.powi(t - (i as i32 + 1)) * n0 / e)
        .sum();
    let expected = c.powi(t) * gap0 + 6.0 / (4.0 * 4.0 * task.l()) * sum;
    let got = convergence_bound(&task, &etas, n0, gap0, BoundScaling::Consistent).unwrap();
    assert!((got - expected).abs() < 1e-13 * expected);
}

#[test]
fn noisy_descent_stays_under_consistent_bound() {
    // Gaussian estimator noise with the variance the air interface produces.
    let task = small_task(15);
    let (n0, eta, rounds, reps) = (50.0, 0.8, 20, 500);
    let k = task.users() as f64;
    let sd = (n0 / (2.0 * k * k * eta)).sqrt();
    let mut mean_gap = vec![0.0; rounds];
    let mut rng = RngStream::new(16, "mc");
    for _ in 0..reps {
        let mut state = TrainState::new(&task, DEFAULT_W_BOUND, BoundScaling::Consistent).unwrap();
        for t in 0..rounds {
            let g: Vec<f64> = task
                .global_gradient(&state.w)
                .iter()
                .map(|g| g + sd * rng.standard_normal())
                .collect();
            state = train_round(&state, &g, &task).unwrap();
            mean_gap[t] += (state.loss_history[t] - task.f_star()) / reps as f64;
        }
    }
    let gap0 = task.loss(&vec![0.0; 6]) - task.f_star();
    let bound =
        convergence_bound_trajectory(&task, &vec![eta; rounds], n0, gap0, BoundScaling::Consistent).unwrap();
    for t in 0..rounds {
        assert!(mean_gap[t] <= bound[t + 1], "t={}: {} > {}", t + 1, mean_gap[t], bound[t + 1]);
    }
}

#[test]
fn snapshot_round_trips() {
    let task = small_task(17);
    let snap = task.snapshot();
    let json = serde_json::to_string(&snap).unwrap();
    let back: TaskSnapshot = serde_json::from_str(&json).unwrap();
    assert_eq!(snap, back);
}
