use otafl_core::channel::{init_channel, ChannelConfig};
use otafl_core::covdesign::{
    lift, reduce_zero_sum, sample_perturbations, solve_p1, solve_p1_uncorrelated, CovMatrix, DesignInputs, RoundPlan,
};
use otafl_core::learning::{convergence_bound_trajectory, generate_task, BoundScaling};
use otafl_core::privacy::{c_function, c_inverse, dp_radius, GradientBounds};
use otafl_core::{CMatrix, Complex64, RngStream};
use proptest::prelude::*;

fn inputs(seed: u64, k: usize, n_a: f64, epsilon: f64) -> DesignInputs {
    let cfg = ChannelConfig {
        num_users: k,
        ..ChannelConfig::default()
    };
    let rng = RngStream::new(seed, "invariants");
    let channel = init_channel(&cfg, &rng.derive("channel")).unwrap();
    let mut r = rng.derive("bounds");
    DesignInputs {
        round: 1,
        channel,
        bounds: GradientBounds::new(5.0, (0..k).map(|_| 10.0 + 90.0 * r.uniform()).collect()).unwrap(),
        symbols: 5,
        power: 1.0,
        round_dp_radius: dp_radius(epsilon, 0.01) / 30.0,
        adversary_noise: n_a,
        mu: 0.1,
        l: 1.0,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn zero_sum_draws_cancel(seed in any::<u64>(), k in 2usize..12, d in 1usize..20) {
        let mut rng = RngStream::new(seed, "draws");
        let v = reduce_zero_sum(k).unwrap();
        let g = CMatrix::from_fn(k - 1, k - 1, |_, _| rng.complex_gaussian(1.0));
        let mut plan = RoundPlan::unperturbed(k, 1.0, 1.0, d);
        plan.covariance = CovMatrix::zero_sum(lift(&v, &(&g * g.adjoint()))).unwrap();
        let n = sample_perturbations(&plan, d, &mut rng).unwrap();
        for col in n.column_iter() {
            let s: Complex64 = col.iter().sum();
            prop_assert!(s.norm() <= 1e-9 * n.norm());
        }
    }

    #[test]
    fn c_inverse_round_trips(x in 0.01f64..4.0) {
        let back = c_inverse(c_function(x).unwrap()).unwrap();
        prop_assert!((back - x).abs() <= 1e-9 * x);
    }

    #[test]
    fn designs_are_feasible_and_above_nominal(
        seed in 0u64..10_000,
        k in 2usize..8,
        log_na in -4.0f64..0.0,
        epsilon in 0.5f64..10.0,
    ) {
        let inp = inputs(seed, k, 10f64.powf(log_na), epsilon);
        for plan in [solve_p1(&inp).unwrap(), solve_p1_uncorrelated(&inp).unwrap()] {
            prop_assert!(plan.b >= inp.nominal_b() * (1.0 - 1e-9));
            prop_assert!(plan.eta <= 1.0 / inp.nominal_b() * (1.0 + 1e-9));
            let res = plan.residuals(&inp).unwrap();
            let scale = plan.b * inp.channel.h.iter().map(|h| h.norm_sqr()).fold(0.0, f64::max);
            prop_assert!(res.privacy <= 1e-8 * 4.0 * inp.bounds.gamma.powi(2));
            prop_assert!(res.power <= 1e-8 * scale);
        }
    }

    #[test]
    fn bound_grows_with_noise(n0 in 0.0f64..1.0, extra in 1e-6f64..1.0, gap0 in 0.0f64..10.0) {
        let task = generate_task(3, 20, 5, 1e-3, &mut RngStream::new(4, "task")).unwrap();
        let etas = [0.5, 1.0, 2.0, 0.1];
        let lo = convergence_bound_trajectory(&task, &etas, n0, gap0, BoundScaling::Consistent).unwrap();
        let hi = convergence_bound_trajectory(&task, &etas, n0 + extra, gap0, BoundScaling::Consistent).unwrap();
        prop_assert_eq!(lo[0], hi[0]);
        for (a, b) in lo.iter().zip(&hi).skip(1) {
            prop_assert!(b > a);
        }
    }
}
