mod common;

use nalgebra::DVector;
use proptest::prelude::*;
use rand::Rng;
use tadsim_core::consistency::{closed_form, solve_node, theta, NodeGains, OptimizerSettings};
use tadsim_core::model::{build_matrices, Interaction, Radius, ReducedState};
use tadsim_core::riccati::{solve, TimeGrid};
use tadsim_core::visibility::snapshot;

#[test]
fn gradients_match_central_differences_on_many_instances() {
    let mut rng = common::rng(7);
    let mut worst = 0.0f64;
    let mut count = 0;
    for n in 1..=3 {
        for mode in [Interaction::I1, Interaction::I2] {
            for _ in 0..20 {
                worst = worst.max(common::gradient_mismatch(&mut rng, n, mode));
                count += 1;
            }
        }
    }
    assert!(count >= 100);
    assert!(worst <= 1e-5, "{worst}");
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn gradient_matches_finite_differences(seed in any::<u64>(), n in 1usize..=3, zs in any::<bool>()) {
        let mut rng = common::rng(seed);
        let mode = if zs { Interaction::I2 } else { Interaction::I1 };
        let err = common::gradient_mismatch(&mut rng, n, mode);
        prop_assert!(err <= 1e-5, "relative error {}", err);
    }

    #[test]
    fn optimizer_is_monotone_and_nonnegative(seed in any::<u64>(), n in 1usize..=3, zs in any::<bool>()) {
        let mut rng = common::rng(seed);
        let mode = if zs { Interaction::I2 } else { Interaction::I1 };
        let mut cfg = common::random_config(&mut rng, n, mode);
        cfg.horizon = 1.0;
        let mats = build_matrices(&cfg).unwrap();
        let sol = solve(&mats, TimeGrid::from_config(&cfg));
        prop_assume!(sol.is_ok());
        let sol = sol.unwrap();
        let z = ReducedState::from_roster(&cfg.initial_positions).unwrap();
        let snap = snapshot(&z, &cfg);
        let value = sol.node(0);
        let start = NodeGains {
            k_d: (0..n).map(|_| common::random_matrix(&mut rng, 2, cfg.dim(), 1.0)).collect(),
            k_tau: zs.then(|| common::random_matrix(&mut rng, 2, cfg.dim(), 1.0)),
        };
        let theta0 = theta(&mats, value, &start, &snap, &cfg.gamma_weights).unwrap();
        prop_assert!(theta0 >= 0.0);
        let mut prev = theta0;
        for iters in [1, 2, 5, 20] {
            let settings = OptimizerSettings { max_iters: iters, ..OptimizerSettings::default() };
            let (_, diag) = solve_node(&mats, value, &snap, &cfg.gamma_weights, &start, &settings, 0.0).unwrap();
            prop_assert!(diag.theta >= 0.0);
            prop_assert!(diag.theta <= prev * (1.0 + 1e-12) + 1e-15, "{} > {}", diag.theta, prev);
            prev = diag.theta;
        }
    }

    #[test]
    fn full_visibility_gives_exact_consistency(seed in any::<u64>(), n in 1usize..=3, zs in any::<bool>()) {
        let mut rng = common::rng(seed);
        let mode = if zs { Interaction::I2 } else { Interaction::I1 };
        let mut cfg = common::random_config(&mut rng, n, mode);
        cfg.horizon = 1.0;
        cfg.defender_visibility_radii = vec![Radius::Unbounded; n];
        cfg.target_visibility_radius = Radius::Unbounded;
        let mats = build_matrices(&cfg).unwrap();
        let sol = solve(&mats, TimeGrid::from_config(&cfg));
        prop_assume!(sol.is_ok());
        let sol = sol.unwrap();
        let z = DVector::from_fn(cfg.dim(), |_, _| rng.random_range(-3.0..3.0));
        let snap = snapshot(&ReducedState(z.clone()), &cfg);
        let value = sol.node(50);
        let (gains, diag) = solve_node(
            &mats, value, &snap, &cfg.gamma_weights,
            &NodeGains::zeros(&mats, mode), &OptimizerSettings::default(), 0.5,
        ).unwrap();
        prop_assert!(diag.fast_path);
        prop_assert!(diag.theta <= 1e-12);
        prop_assert_eq!(&gains, &closed_form(&mats, value, &snap).unwrap());
        let (ud, ut, _) = common::oracle_fne(&mats, value, &z);
        let gated = snap.stacked_gated(&gains.k_d) * &z;
        prop_assert!((gated - ud).amax() <= 1e-9);
        if zs {
            let u_tau = gains.k_tau.as_ref().unwrap() * snap.info_tau.as_ref().unwrap() * &z;
            prop_assert!((u_tau - ut).amax() <= 1e-9);
        }
    }
}
