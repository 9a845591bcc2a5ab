#![allow(dead_code)]

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use tadsim_core::consistency::{grad_theta, theta, NodeGains};
use tadsim_core::model::{build_matrices, GameMatrices, Interaction, PlayerId, Radius, ReducedState, ScenarioConfig};
use tadsim_core::riccati::{solve, RiccatiValue, TimeGrid};
use tadsim_core::simulator::{
    simulate, ControlPolicy, ControlRecord, NodeContext, PolicyOutput, PreparedGame, Profile, ScheduledPolicy,
    SimOptions, TrajectoryLog,
};
use tadsim_core::strategies::{objective_eval, Costs, IndexKind};
use tadsim_core::visibility::{snapshot, VisibilitySnapshot};
use tadsim_core::OptimizerSettings;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn s_of(b: &DMatrix<f64>, r: &DMatrix<f64>) -> DMatrix<f64> {
    b * r.clone().try_inverse().unwrap() * b.transpose()
}

/// Riccati right-hand sides written out from the model matrices.
pub fn oracle_rhs(m: &GameMatrices, v: &RiccatiValue) -> Vec<DMatrix<f64>> {
    let sd = s_of(&m.b_d, &m.r_d);
    let st = s_of(&m.b_tau, &m.r_tau);
    let sa = s_of(&m.b_a, &m.r_a);
    match v {
        RiccatiValue::NonZeroSum { p_d, p_tau, p_a } => {
            let mix = &sd * p_d + &st * p_tau + &sa * p_a;
            let ps = [(p_d, &sd, &m.q_d), (p_tau, &st, &m.q_tau), (p_a, &sa, &m.q_a)];
            (0..3)
                .map(|i| {
                    let (pi, _, qi) = ps[i];
                    let mut out = pi * &mix - qi;
                    for (j, (pj, sj, _)) in ps.iter().enumerate() {
                        if j != i {
                            out += *pj * *sj * pi;
                        }
                    }
                    out
                })
                .collect()
        }
        RiccatiValue::ZeroSum { p } => {
            let zs = m.zero_sum.as_ref().unwrap();
            let sdt = &sd + &st;
            vec![-&zs.q + p * (&sa - &sdt) * p]
        }
    }
}

pub fn terminal_weights(m: &GameMatrices) -> Vec<DMatrix<f64>> {
    match &m.zero_sum {
        Some(zs) => vec![zs.f.clone()],
        None => vec![m.f_d.clone(), m.f_tau.clone(), m.f_a.clone()],
    }
}

#[derive(Debug, Clone)]
pub struct RiccatiReport {
    pub halving_rel: f64,
    pub terminal_exact: bool,
    pub asymmetry: f64,
    /// Largest interior residual as a fraction of `10 h^2 (1 + |P|)`.
    pub residual_ratio: f64,
    /// The same ratio on the halved grid.
    pub residual_ratio_half: f64,
    pub seconds: f64,
}

fn residual_ratio(mats: &GameMatrices, sol: &tadsim_core::riccati::RiccatiSolution) -> f64 {
    let h = sol.grid.step;
    let mut worst = 0.0f64;
    for k in 1..sol.grid.steps {
        let rhs = oracle_rhs(mats, sol.node(k));
        let (prev, here, next) = (sol.node(k - 1).matrices(), sol.node(k).matrices(), sol.node(k + 1).matrices());
        for i in 0..rhs.len() {
            let fd = (next[i] - prev[i]) / (2.0 * h);
            let tol = 10.0 * h * h * (1.0 + here[i].norm());
            worst = worst.max((fd - &rhs[i]).norm() / tol);
        }
    }
    worst
}

pub fn riccati_report(cfg: &ScenarioConfig) -> RiccatiReport {
    let mats = build_matrices(cfg).unwrap();
    let grid = TimeGrid::from_config(cfg);
    let start = Instant::now();
    let sol = solve(&mats, grid).unwrap();
    let seconds = start.elapsed().as_secs_f64();
    let fine = solve(&mats, grid.halved()).unwrap();

    let mut halving_rel = 0.0f64;
    for (a, b) in sol.node(0).matrices().into_iter().zip(fine.node(0).matrices()) {
        halving_rel = halving_rel.max((a - b).norm() / b.norm().max(f64::MIN_POSITIVE));
    }
    let terminal_exact = sol
        .node(grid.steps)
        .matrices()
        .into_iter()
        .zip(terminal_weights(&mats))
        .all(|(p, f)| *p == f);
    let mut asymmetry = 0.0f64;
    for v in sol.nodes() {
        for p in v.matrices() {
            asymmetry = asymmetry.max((p - p.transpose()).norm());
        }
    }
    RiccatiReport {
        halving_rel,
        terminal_exact,
        asymmetry,
        residual_ratio: residual_ratio(&mats, &sol),
        residual_ratio_half: residual_ratio(&mats, &fine),
        seconds,
    }
}

/// `(cross, scalar, oracle)` errors of the suicidal-attacker block structure.
pub fn suicidal_structure(cfg: &ScenarioConfig) -> (f64, f64, f64) {
    let mats = build_matrices(cfg).unwrap();
    let grid = TimeGrid::from_config(cfg);
    let sol = solve(&mats, grid).unwrap();
    let red = tadsim_core::riccati::solve_suicidal_reduced(cfg, grid).unwrap();
    let n2 = 2 * cfg.n;
    let (mut cross, mut scalar, mut oracle) = (0.0f64, 0.0f64, 0.0f64);
    for k in 0..grid.len() {
        let (_, pt, pa) = sol.node(k).nzs().unwrap();
        let kk = red.node(k);
        for (p, diag) in [(pt, kk[0]), (pa, kk[3])] {
            let b11 = p.view((0, 0), (n2, n2)).norm();
            let b12 = p.view((0, n2), (n2, 2)).norm();
            cross = cross.max(b11 + b12);
            let b22 = p.view((n2, n2), (2, 2)).clone_owned();
            let c = 0.5 * (b22[(0, 0)] + b22[(1, 1)]);
            scalar = scalar.max((&b22 - DMatrix::identity(2, 2) * c).amax());
            oracle = oracle.max((&b22 - DMatrix::identity(2, 2) * diag).amax());
        }
    }
    (cross, scalar, oracle)
}

pub fn random_symmetric(rng: &mut ChaCha8Rng, dim: usize, scale: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-scale..scale));
    (&a + a.transpose()) * 0.5
}

pub fn random_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize, scale: f64) -> DMatrix<f64> {
    DMatrix::from_fn(r, c, |_, _| rng.random_range(-scale..scale))
}

/// A random game with `n` defenders: positions, penalties and radii.
pub fn random_config(rng: &mut ChaCha8Rng, n: usize, mode: Interaction) -> ScenarioConfig {
    let mut cfg = match mode {
        Interaction::I1 => tadsim_core::scenarios::i1_nonsuicidal(),
        Interaction::I2 => tadsim_core::scenarios::i2_zeta_tau_2_5(),
    };
    cfg.n = n;
    cfg.initial_positions = (0..n + 2)
        .map(|_| [rng.random_range(-3.0..3.0), rng.random_range(-3.0..3.0)])
        .collect();
    cfg.defender_capture_radii = vec![0.05; n];
    cfg.defender_visibility_radii = (0..n).map(|_| Radius::Finite(rng.random_range(0.5..5.0))).collect();
    cfg.target_visibility_radius = Radius::Finite(rng.random_range(0.5..5.0));
    cfg.weights = (0..=n)
        .map(|_| tadsim_core::PairWeights {
            f_pa: rng.random_range(0.2..2.0),
            f_ap: rng.random_range(0.2..2.0),
            q_pa: rng.random_range(0.2..2.0),
            q_ap: rng.random_range(0.2..2.0),
        })
        .collect();
    cfg.control_penalties = (0..n + 2).map(|_| rng.random_range(0.5..2.0)).collect();
    cfg.gamma_weights = (0..if mode == Interaction::I1 { 4 } else { 3 })
        .map(|_| rng.random_range(0.1..1.0))
        .collect();
    cfg
}

/// Largest relative mismatch between the analytic gradient and central
/// differences of the error function over one random instance.
pub fn gradient_mismatch(rng: &mut ChaCha8Rng, n: usize, mode: Interaction) -> f64 {
    let cfg = random_config(rng, n, mode);
    let mats = build_matrices(&cfg).unwrap();
    let dim = cfg.dim();
    let value = match mode {
        Interaction::I1 => RiccatiValue::NonZeroSum {
            p_d: random_symmetric(rng, dim, 2.0),
            p_tau: random_symmetric(rng, dim, 2.0),
            p_a: random_symmetric(rng, dim, 2.0),
        },
        Interaction::I2 => RiccatiValue::ZeroSum {
            p: random_symmetric(rng, dim, 2.0),
        },
    };
    let z = ReducedState(DVector::from_fn(dim, |_, _| rng.random_range(-3.0..3.0)));
    let snap = snapshot(&z, &cfg);
    let gains = NodeGains {
        k_d: (0..n).map(|_| random_matrix(rng, 2, dim, 1.0)).collect(),
        k_tau: (mode == Interaction::I2).then(|| random_matrix(rng, 2, dim, 1.0)),
    };
    let g = grad_theta(&mats, &value, &gains, &snap, &cfg.gamma_weights).unwrap();
    let f = |k: &NodeGains| theta(&mats, &value, k, &snap, &cfg.gamma_weights).unwrap();

    let blocks = n + usize::from(mode == Interaction::I2);
    let mut diff2 = 0.0;
    let mut norm2 = 0.0;
    for b in 0..blocks {
        for r in 0..2 {
            for c in 0..dim {
                let mut dir = NodeGains::zeros(&mats, mode);
                let h = 1e-5;
                let (analytic, unit) = if b < n {
                    (g.k_d[b][(r, c)], &mut dir.k_d[b])
                } else {
                    (g.k_tau.as_ref().unwrap()[(r, c)], dir.k_tau.as_mut().unwrap())
                };
                unit[(r, c)] = 1.0;
                let fd = (f(&gains.axpy(h, &dir)) - f(&gains.axpy(-h, &dir))) / (2.0 * h);
                diff2 += (fd - analytic).powi(2);
                norm2 += analytic * analytic;
            }
        }
    }
    if norm2 == 0.0 {
        return diff2.sqrt();
    }
    (diff2 / norm2).sqrt()
}

/// Smooth bump supported on `[t0, t1]`.
#[derive(Debug, Clone, Copy)]
pub struct Bump {
    pub t0: f64,
    pub t1: f64,
    pub amplitude: f64,
}

impl Bump {
    pub fn random(rng: &mut ChaCha8Rng, horizon: f64) -> Self {
        let t0 = rng.random_range(0.0..horizon * 0.8);
        let t1 = (t0 + rng.random_range(0.2..horizon * 0.5)).min(horizon);
        Bump {
            t0,
            t1,
            amplitude: rng.random_range(0.2..1.0),
        }
    }

    pub fn at(&self, t: f64) -> f64 {
        if t < self.t0 || t > self.t1 {
            return 0.0;
        }
        let s = (std::f64::consts::PI * (t - self.t0) / (self.t1 - self.t0)).sin();
        self.amplitude * s * s
    }
}

/// How one player's control departs from the replayed equilibrium.
#[derive(Debug, Clone)]
pub enum Deviation {
    /// Extra gain `M_i` on each defender's gated state, `b(t) M_i I_i z`.
    Defenders(Vec<DMatrix<f64>>, Bump),
    /// `b(t) M I_tau z` for a constrained target, `b(t) v` otherwise.
    TargetGated(DMatrix<f64>, Bump),
    Target(DVector<f64>, Bump),
    Attacker(DVector<f64>, Bump),
}

pub struct DeviatingPolicy {
    pub base: ScheduledPolicy,
    pub deviations: Vec<Deviation>,
}

impl ControlPolicy for DeviatingPolicy {
    fn act(&mut self, ctx: &NodeContext<'_>) -> tadsim_core::Result<PolicyOutput> {
        let mut out = self.base.act(ctx)?;
        let gate = self.base.gating[ctx.k].clone();
        let u = &mut out.controls;
        for d in &self.deviations {
            match d {
                Deviation::Defenders(m, b) => u.u_d += gate.stacked_gated(m) * ctx.z * b.at(ctx.t),
                Deviation::TargetGated(m, b) => {
                    u.u_tau += m * gate.info_tau.as_ref().unwrap() * ctx.z * b.at(ctx.t)
                }
                Deviation::Target(v, b) => u.u_tau += v * b.at(ctx.t),
                Deviation::Attacker(v, b) => u.u_a += v * b.at(ctx.t),
            }
        }
        Ok(out)
    }
}

/// A limited-observation equilibrium run over the whole horizon, with the
/// game kept for replays.
pub struct Equilibrium {
    pub game: PreparedGame,
    pub log: TrajectoryLog,
}

impl Equilibrium {
    pub fn new(cfg: &ScenarioConfig) -> Self {
        let game = PreparedGame::new(cfg).unwrap();
        let log = game
            .run(
                Profile::Limited,
                &OptimizerSettings::default(),
                SimOptions {
                    stop_on_termination: false,
                },
            )
            .unwrap();
        Equilibrium { game, log }
    }

    pub fn replay(&self, deviations: Vec<Deviation>) -> TrajectoryLog {
        let mut policy = DeviatingPolicy {
            base: ScheduledPolicy {
                gains: self.log.gains.clone(),
                gating: self.log.gating.clone(),
            },
            deviations,
        };
        simulate(
            &self.game.cfg,
            &self.game.mats,
            &self.game.sol,
            &mut policy,
            SimOptions {
                stop_on_termination: false,
            },
        )
        .unwrap()
    }

    pub fn adapted_costs(&self, log: &TrajectoryLog) -> Costs {
        objective_eval(&self.game.mats, &self.game.sol, log, IndexKind::Adapted).unwrap()
    }

    pub fn random_deviation(&self, rng: &mut ChaCha8Rng, who: usize) -> Deviation {
        let cfg = &self.game.cfg;
        let dim = cfg.dim();
        let bump = Bump::random(rng, cfg.horizon);
        let v = DVector::from_fn(2, |_, _| rng.random_range(-1.0..1.0));
        match (who, cfg.interaction) {
            (0, _) => Deviation::Defenders((0..cfg.n).map(|_| random_matrix(rng, 2, dim, 0.5)).collect(), bump),
            (1, Interaction::I1) => Deviation::Target(v, bump),
            (1, Interaction::I2) => Deviation::TargetGated(random_matrix(rng, 2, dim, 0.5), bump),
            _ => Deviation::Attacker(v, bump),
        }
    }
}

fn quad(z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    z.dot(&(m * z))
}

fn fne(b: &DMatrix<f64>, r: &DMatrix<f64>, p: &DMatrix<f64>, z: &DVector<f64>) -> DVector<f64> {
    -(r.clone().try_inverse().unwrap() * b.transpose() * p * z)
}

/// Right-hand sides of the completed-square identities along a logged run:
/// `[J_d, J_tau, J_a]` in I1 and `[J, 0, 0]` in I2.
pub fn completed_squares(game: &PreparedGame, log: &TrajectoryLog) -> [f64; 3] {
    let m = &game.mats;
    let sol = &game.sol;
    let h = sol.grid.step;
    let z0 = &log.z[0];
    let mut acc = [0.0f64; 3];
    for k in 0..log.controls.len() {
        let u: &ControlRecord = &log.controls[k];
        let gains = &log.gains[k];
        let gate: &VisibilitySnapshot = &log.gating[k];
        for end in [k, k + 1] {
            let z = &log.z[end];
            let ud_ad = gate.stacked_gated(&gains.k_d) * z;
            let terms = match sol.node(end) {
                RiccatiValue::NonZeroSum { p_d, p_tau, p_a } => {
                    let dd = &u.u_d - &ud_ad;
                    let dt = &u.u_tau - fne(&m.b_tau, &m.r_tau, p_tau, z);
                    let da = &u.u_a - fne(&m.b_a, &m.r_a, p_a, z);
                    let cross = |p: &DMatrix<f64>, b: &DMatrix<f64>, d: &DVector<f64>| 2.0 * z.dot(&(p * b * d));
                    [
                        cross(p_d, &m.b_tau, &dt) + quad(&dd, &m.r_d) + cross(p_d, &m.b_a, &da),
                        quad(&dt, &m.r_tau) + cross(p_tau, &m.b_d, &dd) + cross(p_tau, &m.b_a, &da),
                        cross(p_a, &m.b_tau, &dt) + cross(p_a, &m.b_d, &dd) + quad(&da, &m.r_a),
                    ]
                }
                RiccatiValue::ZeroSum { p } => {
                    let ut_ad = gains.k_tau.as_ref().unwrap() * gate.info_tau.as_ref().unwrap() * z;
                    let da = &u.u_a - fne(&m.b_a, &m.r_a, p, z);
                    let dd = &u.u_d - &ud_ad;
                    let dt = &u.u_tau - &ut_ad;
                    [
                        quad(&da, &m.r_a) - quad(&dd, &m.r_d) - quad(&dt, &m.r_tau),
                        0.0,
                        0.0,
                    ]
                }
            };
            for (a, v) in acc.iter_mut().zip(terms) {
                *a += 0.5 * h * v;
            }
        }
    }
    let values: Vec<f64> = sol.node(0).matrices().into_iter().map(|p| 0.5 * quad(z0, p)).collect();
    match sol.mode {
        Interaction::I1 => [
            values[0] + 0.5 * acc[0],
            values[1] + 0.5 * acc[1],
            values[2] + 0.5 * acc[2],
        ],
        Interaction::I2 => [values[0] + 0.5 * acc[0], 0.0, 0.0],
    }
}

pub fn cost_array(c: Costs) -> [f64; 3] {
    match c {
        Costs::I1 { j_d, j_tau, j_a } => [j_d, j_tau, j_a],
        Costs::I2 { j } => [j, 0.0, 0.0],
    }
}

/// Full-information controls written out from the Riccati matrices.
pub fn oracle_fne(m: &GameMatrices, v: &RiccatiValue, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>, DVector<f64>) {
    match v {
        RiccatiValue::NonZeroSum { p_d, p_tau, p_a } => (
            fne(&m.b_d, &m.r_d, p_d, z),
            fne(&m.b_tau, &m.r_tau, p_tau, z),
            fne(&m.b_a, &m.r_a, p_a, z),
        ),
        RiccatiValue::ZeroSum { p } => (
            -fne(&m.b_d, &m.r_d, p, z),
            -fne(&m.b_tau, &m.r_tau, p, z),
            fne(&m.b_a, &m.r_a, p, z),
        ),
    }
}

/// Worst `(theta, control gap)` over the full-visibility nodes of a limited
/// run at or after `from`, and the number of such nodes.
pub fn full_visibility_consistency(log: &TrajectoryLog, game: &PreparedGame, from: f64) -> (f64, f64, usize) {
    let (mut worst_theta, mut worst_gap, mut count) = (0.0f64, 0.0f64, 0);
    let i2 = game.cfg.interaction == Interaction::I2;
    for (k, u) in log.controls.iter().enumerate() {
        let gate = &log.gating[k];
        if !gate.info_all_invertible() || log.times[k] < from - 1e-9 {
            continue;
        }
        count += 1;
        worst_theta = worst_theta.max(log.diagnostics[k].theta);
        let (ud, ut, _) = oracle_fne(&game.mats, game.sol.node(k), &log.z[k]);
        worst_gap = worst_gap.max((&u.u_d - ud).amax());
        if i2 {
            worst_gap = worst_gap.max((&u.u_tau - ut).amax());
        }
    }
    (worst_theta, worst_gap, count)
}

/// The four-defender geometry of the worked example.
pub fn example_one() -> (ScenarioConfig, ReducedState) {
    let cfg = ScenarioConfig::from_json(
        r#"{
            "initial_positions": {"d1": [1, 0], "d2": [2, 0], "d3": [2, 1.5], "d4": [3, 1.5], "tau": [4, 1.5], "a": [0, 0]},
            "capture_radii": {"d1": 0.05, "d2": 0.05, "d3": 0.05, "d4": 0.05, "a": 0.05},
            "visibility_radii": {"d1": 1.2, "d2": 2.2, "d3": 0.1, "d4": 1.2}
        }"#,
    )
    .unwrap();
    let z = ReducedState::from_roster(&cfg.initial_positions).unwrap();
    (cfg, z)
}

pub fn mat(rows: &[&[f64]]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), rows[0].len(), |r, c| rows[r][c])
}

pub fn first_out_edge(log: &TrajectoryLog, p: PlayerId) -> Option<f64> {
    log.snapshots.iter().zip(&log.times).find(|(s, _)| s.has_out_edge(p)).map(|(_, &t)| t)
}

impl RiccatiReport {
    /// The finite-difference residual shrinks like `h^2`: a first-order error
    /// would double the ratio on the halved grid. Also true when already
    /// inside the tolerance.
    pub fn residual_is_second_order(&self) -> bool {
        self.residual_ratio <= 1.0 || (self.residual_ratio_half / self.residual_ratio - 1.0).abs() <= 0.25
    }
}
