mod common;

use std::sync::OnceLock;

use common::{completed_squares, cost_array, Equilibrium};
use tadsim_core::model::{Interaction, ScenarioConfig};
use tadsim_core::scenarios;

fn i1() -> &'static Equilibrium {
    static EQ: OnceLock<Equilibrium> = OnceLock::new();
    EQ.get_or_init(|| Equilibrium::new(&scenarios::i1_nonsuicidal()))
}

fn i2() -> &'static Equilibrium {
    static EQ: OnceLock<Equilibrium> = OnceLock::new();
    EQ.get_or_init(|| Equilibrium::new(&scenarios::i2_zeta_tau_2_5()))
}

/// `max |J - V| / (1 + |V|)` over the indices of an undeviated replay.
fn value_gap(eq: &Equilibrium) -> f64 {
    let log = eq.replay(Vec::new());
    let lhs = cost_array(eq.adapted_costs(&log));
    eq.game
        .sol
        .node(0)
        .matrices()
        .into_iter()
        .zip(lhs)
        .map(|(p, j)| {
            let v = 0.5 * log.z[0].dot(&(p * &log.z[0]));
            (j - v).abs() / (1.0 + v.abs())
        })
        .fold(0.0, f64::max)
}

fn with_step(cfg: ScenarioConfig, step: f64) -> ScenarioConfig {
    ScenarioConfig { step, ..cfg }
}

fn identity_gap(eq: &Equilibrium, seed: u64, cases: usize) -> f64 {
    let mut rng = common::rng(seed);
    let players = if eq.game.cfg.interaction == Interaction::I1 { 3 } else { 1 };
    let mut worst = 0.0f64;
    for _ in 0..cases {
        let devs = (0..3).map(|who| eq.random_deviation(&mut rng, who)).collect();
        let log = eq.replay(devs);
        let lhs = cost_array(eq.adapted_costs(&log));
        let rhs = completed_squares(&eq.game, &log);
        for p in 0..players {
            worst = worst.max((lhs[p] - rhs[p]).abs() / (1.0 + rhs[p].abs()));
        }
    }
    worst
}

/// Worst signed improvement a unilateral deviation achieves, relative to
/// `1 + |J|`; negative means no deviation helped.
fn best_improvement(eq: &Equilibrium, seed: u64, cases: usize) -> f64 {
    let mut rng = common::rng(seed);
    let base = cost_array(eq.adapted_costs(&eq.replay(Vec::new())));
    let mut worst = f64::NEG_INFINITY;
    for c in 0..cases {
        let who = c % 3;
        let log = eq.replay(vec![eq.random_deviation(&mut rng, who)]);
        let j = cost_array(eq.adapted_costs(&log));
        let gain = match eq.game.cfg.interaction {
            // every player minimizes its own index
            Interaction::I1 => base[who] - j[who],
            // the attacker minimizes J, the defenders and the target maximize it
            Interaction::I2 if who == 2 => base[0] - j[0],
            Interaction::I2 => j[0] - base[0],
        };
        let own = if eq.game.cfg.interaction == Interaction::I1 { who } else { 0 };
        worst = worst.max(gain / (1.0 + base[own].abs()));
    }
    worst
}

#[test]
fn zero_sum_equilibrium_cost_equals_value() {
    let gap = value_gap(i2());
    assert!(gap <= 1e-3, "{gap}");
}

// Controls are held over each step, so the realized I1 costs differ from the
// continuous-time values by O(step); at the shipped step the defender and
// attacker gaps exceed 1e-3 (1 + |V|).
#[test]
#[ignore = "sample-and-hold feedback leaves an O(step) gap in I1 at step 0.005"]
fn equilibrium_cost_equals_value() {
    let gap = value_gap(i1());
    assert!(gap <= 1e-3, "{gap}");
}

#[test]
fn equilibrium_cost_gap_is_first_order_in_the_step() {
    let coarse = value_gap(&Equilibrium::new(&with_step(scenarios::i1_nonsuicidal(), 0.01)));
    let fine = value_gap(i1());
    let ratio = coarse / fine;
    assert!((1.7..2.3).contains(&ratio), "{coarse} / {fine}");
}

#[test]
fn completed_squares_hold_on_random_trajectories() {
    for (eq, seed) in [(i1(), 11), (i2(), 12)] {
        let gap = identity_gap(eq, seed, 20);
        assert!(gap <= 1e-3, "{:?}: {gap}", eq.game.cfg.interaction);
    }
}

#[test]
fn unilateral_deviations_do_not_pay() {
    for (eq, seed) in [(i1(), 21), (i2(), 22)] {
        let gain = best_improvement(eq, seed, 100);
        assert!(gain <= 0.0, "{:?}: {gain}", eq.game.cfg.interaction);
    }
}
