mod common;

use proptest::prelude::*;
use tadsim_core::model::{build_matrices, Interaction};
use tadsim_core::riccati::{solve, TimeGrid};
use tadsim_core::scenarios;

#[test]
fn shipped_configs_are_self_consistent() {
    for name in scenarios::names() {
        let cfg = scenarios::by_name(name).unwrap();
        let r = common::riccati_report(&cfg);
        assert!(r.terminal_exact, "{name}");
        assert_eq!(r.asymmetry, 0.0, "{name}");
        assert!(r.halving_rel <= 1e-6, "{name}: {}", r.halving_rel);
        assert!(r.residual_is_second_order(), "{name}: {r:?}");
    }
}

#[test]
fn suicidal_blocks_match_the_scalar_system() {
    let (cross, scalar, oracle) = common::suicidal_structure(&scenarios::i1_suicidal());
    assert!(cross <= 1e-8, "{cross}");
    assert!(scalar <= 1e-8, "{scalar}");
    assert!(oracle <= 1e-7, "{oracle}");
}

#[test]
fn non_suicidal_attacker_couples_the_blocks() {
    let cfg = scenarios::i1_nonsuicidal();
    let m = build_matrices(&cfg).unwrap();
    let sol = solve(&m, TimeGrid::from_config(&cfg)).unwrap();
    let (_, _, pa) = sol.node(0).nzs().unwrap();
    assert!(pa.view((0, 0), (6, 6)).norm() > 1e-3);
}

#[test]
fn zero_sum_target_block_sign() {
    let m = build_matrices(&scenarios::i2_complete()).unwrap();
    let q = &m.zero_sum.as_ref().unwrap().q;
    let t = q.view((6, 6), (2, 2)).clone_owned();
    assert!(t.symmetric_eigenvalues().iter().all(|&v| v > 0.0));
    for i in 0..3 {
        let d = q.view((2 * i, 2 * i), (2, 2)).clone_owned();
        assert!(d.symmetric_eigenvalues().iter().all(|&v| v < 0.0));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn random_games_satisfy_the_equations(seed in any::<u64>(), n in 1usize..=3, zs in any::<bool>()) {
        let mut rng = common::rng(seed);
        let mode = if zs { Interaction::I2 } else { Interaction::I1 };
        let mut cfg = common::random_config(&mut rng, n, mode);
        cfg.horizon = 1.0;
        cfg.step = 0.01;
        let mats = build_matrices(&cfg).unwrap();
        prop_assume!(solve(&mats, TimeGrid::from_config(&cfg)).is_ok());
        let r = common::riccati_report(&cfg);
        prop_assert!(r.terminal_exact);
        prop_assert_eq!(r.asymmetry, 0.0);
        prop_assert!(r.residual_is_second_order(), "{:?}", r);
        prop_assert!(r.halving_rel <= 1e-6, "halving {}", r.halving_rel);
    }

    #[test]
    fn suicidal_structure_holds_for_random_weights(seed in any::<u64>(), n in 1usize..=3) {
        let mut rng = common::rng(seed);
        let mut cfg = common::random_config(&mut rng, n, Interaction::I1);
        cfg.lambda = 0;
        cfg.horizon = 2.0;
        let (cross, scalar, oracle) = common::suicidal_structure(&cfg);
        prop_assert!(cross <= 1e-8);
        prop_assert!(scalar <= 1e-8);
        prop_assert!(oracle <= 1e-7);
    }
}
