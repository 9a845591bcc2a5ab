//! Closed-loop simulation, termination, and paired comparisons.

use std::io::Write;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::consistency::{solve_node, NodeDiagnostics, NodeGains, OptimizerSettings};
use crate::error::{Error, Result};
use crate::model::{build_matrices, GameMatrices, Interaction, PlayerId, Radius, ReducedState, ScenarioConfig};
use crate::riccati::{csv_err, solve, RiccatiSolution, RiccatiValue, TimeGrid};
use crate::strategies::{adapted_control_with, fne_control_with, Group};
use crate::visibility::{snapshot, transitions, TransitionEvent, VisibilitySnapshot};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Profile {
    /// Every player uses its full-information equilibrium strategy.
    Complete,
    /// Constrained players use consistent network-adapted strategies.
    Limited,
}

impl std::str::FromStr for Profile {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "complete" | "complete_observations" => Ok(Profile::Complete),
            "limited" | "limited_observations" => Ok(Profile::Limited),
            _ => Err(Error::config("profile", format!("unknown profile `{s}` (complete or limited)"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "player")]
pub enum TerminationKind {
    Interception(PlayerId),
    Capture,
    HorizonExpired,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TerminationRecord {
    #[serde(flatten)]
    pub kind: TerminationKind,
    pub time: f64,
    /// Node index of `time`.
    pub node: usize,
    /// Separation that triggered the criterion (`None` when the horizon ran out).
    pub distance: Option<f64>,
}

/// Controls applied on `[t_k, t_{k+1})`.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlRecord {
    /// Stacked defender controls, `2n` entries.
    pub u_d: DVector<f64>,
    pub u_tau: DVector<f64>,
    pub u_a: DVector<f64>,
}

impl ControlRecord {
    pub fn of(&self, p: PlayerId) -> [f64; 2] {
        let v = match p {
            PlayerId::Defender(i) => self.u_d.rows(2 * (i - 1), 2).clone_owned(),
            PlayerId::Target => self.u_tau.clone(),
            PlayerId::Attacker => self.u_a.clone(),
        };
        [v[0], v[1]]
    }
}

/// What a strategy profile sees at a grid node.
pub struct NodeContext<'a> {
    pub k: usize,
    pub t: f64,
    pub cfg: &'a ScenarioConfig,
    pub mats: &'a GameMatrices,
    pub value: &'a RiccatiValue,
    pub z: &'a DVector<f64>,
    pub snapshot: &'a VisibilitySnapshot,
}

/// Output of a strategy profile at a node.
pub struct PolicyOutput {
    pub controls: ControlRecord,
    /// Gains and gating snapshot behind adapted controls, if any.
    pub adapted: Option<(NodeGains, VisibilitySnapshot)>,
    pub diagnostics: Option<NodeDiagnostics>,
}

/// A feedback strategy profile for all players.
pub trait ControlPolicy {
    fn act(&mut self, ctx: &NodeContext<'_>) -> Result<PolicyOutput>;
}

/// Full-information equilibrium for everyone.
pub struct CompletePolicy;

impl ControlPolicy for CompletePolicy {
    fn act(&mut self, ctx: &NodeContext<'_>) -> Result<PolicyOutput> {
        let u = |g| fne_control_with(ctx.mats, ctx.value, g, ctx.z);
        Ok(PolicyOutput {
            controls: ControlRecord {
                u_d: u(Group::Defenders),
                u_tau: u(Group::Target),
                u_a: u(Group::Attacker),
            },
            adapted: None,
            diagnostics: None,
        })
    }
}

/// Consistent network-adapted gains computed online from the realized
/// network, warm-started from the previous node.
pub struct LimitedPolicy {
    pub settings: OptimizerSettings,
    warm: Option<NodeGains>,
}

impl LimitedPolicy {
    pub fn new(settings: OptimizerSettings) -> Self {
        LimitedPolicy { settings, warm: None }
    }
}

impl ControlPolicy for LimitedPolicy {
    fn act(&mut self, ctx: &NodeContext<'_>) -> Result<PolicyOutput> {
        let mode = ctx.cfg.interaction;
        let zero = NodeGains::zeros(ctx.mats, mode);
        let start = match (&self.warm, self.settings.warm_start) {
            (Some(w), true) => w,
            _ => &zero,
        };
        let (gains, diag) = solve_node(
            ctx.mats,
            ctx.value,
            ctx.snapshot,
            &ctx.cfg.gamma_weights,
            start,
            &self.settings,
            ctx.t,
        )?;
        let adapted = adapted_control_with(&gains, ctx.snapshot, ctx.z);
        let fne = |g| fne_control_with(ctx.mats, ctx.value, g, ctx.z);
        let u_tau = match mode {
            Interaction::I1 => fne(Group::Target),
            Interaction::I2 => adapted.u_tau.clone().expect("target gains in I2"),
        };
        self.warm = Some(gains.clone());
        Ok(PolicyOutput {
            controls: ControlRecord {
                u_d: adapted.u_d,
                u_tau,
                u_a: fne(Group::Attacker),
            },
            adapted: Some((gains, ctx.snapshot.clone())),
            diagnostics: Some(diag),
        })
    }
}

/// Replays fixed gains and gating matrices node by node; the unconstrained
/// players keep their equilibrium feedback.
pub struct ScheduledPolicy {
    pub gains: Vec<NodeGains>,
    pub gating: Vec<VisibilitySnapshot>,
}

impl ControlPolicy for ScheduledPolicy {
    fn act(&mut self, ctx: &NodeContext<'_>) -> Result<PolicyOutput> {
        let (gains, gate) = match (self.gains.get(ctx.k), self.gating.get(ctx.k)) {
            (Some(g), Some(s)) => (g, s),
            _ => {
                return Err(Error::GridMismatch(format!("no scheduled gains at node {}", ctx.k)));
            }
        };
        let adapted = adapted_control_with(gains, gate, ctx.z);
        let fne = |g| fne_control_with(ctx.mats, ctx.value, g, ctx.z);
        let u_tau = match ctx.cfg.interaction {
            Interaction::I1 => fne(Group::Target),
            Interaction::I2 => adapted.u_tau.clone().expect("target gains in I2"),
        };
        Ok(PolicyOutput {
            controls: ControlRecord {
                u_d: adapted.u_d,
                u_tau,
                u_a: fne(Group::Attacker),
            },
            adapted: Some((gains.clone(), gate.clone())),
            diagnostics: None,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimOptions {
    /// Stop at the first node meeting a termination criterion. When false the
    /// record still holds the first such node but integration runs to T.
    pub stop_on_termination: bool,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions {
            stop_on_termination: true,
        }
    }
}

/// Everything recorded during one run.
#[derive(Debug, Clone)]
pub struct TrajectoryLog {
    pub grid: TimeGrid,
    pub interaction: Interaction,
    pub profile: Option<Profile>,
    pub n: usize,
    pub times: Vec<f64>,
    /// Absolute positions in roster order per node.
    pub positions: Vec<Vec<[f64; 2]>>,
    pub z: Vec<DVector<f64>>,
    /// One record per interval; `controls.len() == z.len() - 1`.
    pub controls: Vec<ControlRecord>,
    /// Realized network at every logged node.
    pub snapshots: Vec<VisibilitySnapshot>,
    /// Gains and gating networks behind adapted controls, per interval.
    pub gains: Vec<NodeGains>,
    pub gating: Vec<VisibilitySnapshot>,
    pub diagnostics: Vec<NodeDiagnostics>,
    pub events: Vec<TransitionEvent>,
    pub termination: TerminationRecord,
    /// Strategy label per player group.
    pub labels: StrategyLabels,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StrategyLabels {
    pub defenders: String,
    pub target: String,
    pub attacker: String,
}

impl StrategyLabels {
    fn for_run(profile: Option<Profile>, mode: Interaction) -> Self {
        let (d, t) = match (profile, mode) {
            (Some(Profile::Complete), _) => ("fne", "fne"),
            (Some(Profile::Limited), Interaction::I1) => ("c-nafne", "fne"),
            (Some(Profile::Limited), Interaction::I2) => ("c-nafne", "c-nafne"),
            (None, _) => ("custom", "custom"),
        };
        StrategyLabels {
            defenders: d.into(),
            target: t.into(),
            attacker: if profile.is_some() { "fne" } else { "custom" }.into(),
        }
    }
}

fn check_termination(cfg: &ScenarioConfig, z: &ReducedState) -> Option<(TerminationKind, f64)> {
    // Interceptions are checked first, in defender order.
    for i in 1..=cfg.n {
        let d = z.displacement(PlayerId::Defender(i));
        let dist = d[0].hypot(d[1]);
        if dist <= cfg.defender_capture_radii[i - 1] {
            return Some((TerminationKind::Interception(PlayerId::Defender(i)), dist));
        }
    }
    let t = z.displacement(PlayerId::Target);
    let dist = t[0].hypot(t[1]);
    (dist <= cfg.attacker_capture_radius).then_some((TerminationKind::Capture, dist))
}

/// Forward simulation of an arbitrary profile on a solved game.
pub fn simulate(
    cfg: &ScenarioConfig,
    mats: &GameMatrices,
    sol: &RiccatiSolution,
    policy: &mut dyn ControlPolicy,
    options: SimOptions,
) -> Result<TrajectoryLog> {
    let grid = sol.grid;
    if grid.steps != cfg.steps() || grid.step != cfg.step {
        return Err(Error::GridMismatch("Riccati grid differs from the scenario grid".into()));
    }
    let mut z = ReducedState::from_roster(&cfg.initial_positions)?;
    let mut xa = cfg.position(PlayerId::Attacker);

    let mut log = TrajectoryLog {
        grid,
        interaction: cfg.interaction,
        profile: None,
        n: cfg.n,
        times: Vec::new(),
        positions: Vec::new(),
        z: Vec::new(),
        controls: Vec::new(),
        snapshots: Vec::new(),
        gains: Vec::new(),
        gating: Vec::new(),
        diagnostics: Vec::new(),
        events: Vec::new(),
        termination: TerminationRecord {
            kind: TerminationKind::HorizonExpired,
            time: grid.horizon(),
            node: grid.steps,
            distance: None,
        },
        labels: StrategyLabels::for_run(None, cfg.interaction),
    };
    let mut terminated = false;

    for k in 0..=grid.steps {
        let t = grid.time(k);
        let snap = snapshot(&z, cfg);
        log.times.push(t);
        log.positions.push(z.to_roster(xa));
        log.z.push(z.0.clone());
        log.snapshots.push(snap);

        if !terminated {
            if let Some((kind, distance)) = check_termination(cfg, &z) {
                terminated = true;
                log.termination = TerminationRecord {
                    kind,
                    time: t,
                    node: k,
                    distance: Some(distance),
                };
                if options.stop_on_termination {
                    break;
                }
            }
        }
        if k == grid.steps {
            break;
        }

        let ctx = NodeContext {
            k,
            t,
            cfg,
            mats,
            value: sol.node(k),
            z: &z.0,
            snapshot: log.snapshots.last().expect("snapshot"),
        };
        let out = policy.act(&ctx)?;
        if let Some((gains, gate)) = out.adapted {
            log.gains.push(gains);
            log.gating.push(gate);
        }
        if let Some(d) = out.diagnostics {
            log.diagnostics.push(d);
        }
        let u = out.controls;
        // With the controls held over the step every Runge-Kutta stage sees
        // the same derivative, so the step is exact.
        let zdot = &mats.b_d * &u.u_d + &mats.b_tau * &u.u_tau + &mats.b_a * &u.u_a;
        z.0 += zdot * grid.step;
        xa[0] += grid.step * u.u_a[0];
        xa[1] += grid.step * u.u_a[1];
        log.controls.push(u);
    }

    log.events = transitions(&log.times, &log.snapshots);
    Ok(log)
}

/// A solved game ready to simulate.
pub struct PreparedGame {
    pub cfg: ScenarioConfig,
    pub mats: GameMatrices,
    pub sol: RiccatiSolution,
}

impl PreparedGame {
    pub fn new(cfg: &ScenarioConfig) -> Result<Self> {
        let mats = build_matrices(cfg)?;
        let sol = solve(&mats, TimeGrid::from_config(cfg))?;
        Ok(PreparedGame {
            cfg: cfg.clone(),
            mats,
            sol,
        })
    }

    pub fn run(&self, profile: Profile, settings: &OptimizerSettings, options: SimOptions) -> Result<TrajectoryLog> {
        let mut log = match profile {
            Profile::Complete => simulate(&self.cfg, &self.mats, &self.sol, &mut CompletePolicy, options)?,
            Profile::Limited => simulate(
                &self.cfg,
                &self.mats,
                &self.sol,
                &mut LimitedPolicy::new(settings.clone()),
                options,
            )?,
        };
        log.profile = Some(profile);
        log.labels = StrategyLabels::for_run(Some(profile), self.cfg.interaction);
        Ok(log)
    }
}

/// Runs a scenario under a strategy profile with default optimizer settings.
pub fn run(cfg: &ScenarioConfig, profile: Profile) -> Result<TrajectoryLog> {
    run_with(cfg, profile, &OptimizerSettings::default())
}

pub fn run_with(cfg: &ScenarioConfig, profile: Profile, settings: &OptimizerSettings) -> Result<TrajectoryLog> {
    PreparedGame::new(cfg)?.run(profile, settings, SimOptions::default())
}

fn cross(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[1] - a[1] * b[0]
}

/// Straight-line and observation-independence measurements for a suicidal
/// attacker.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SuicidalReport {
    pub complete: TerminationRecord,
    pub limited: TerminationRecord,
    /// `max |z_tau(0) x z_tau(t)|` over both runs.
    pub max_cross: f64,
    /// `max |z_tau(0) x (X_a(t) - X_a(0))|` over both runs.
    pub max_attacker_cross: f64,
    /// Bound `1e-6 (1 + |z_tau(0)|^2)` for both cross measures.
    pub cross_tolerance: f64,
    /// Largest attacker/target position difference between the runs over
    /// their common nodes.
    pub max_state_deviation: f64,
    pub max_control_deviation: f64,
    pub common_nodes: usize,
}

pub fn run_suicidal_check(cfg: &ScenarioConfig, settings: &OptimizerSettings) -> Result<SuicidalReport> {
    if cfg.lambda != 0 {
        return Err(Error::config("lambda", "the straight-line check needs lambda = 0"));
    }
    let game = PreparedGame::new(cfg)?;
    let complete = game.run(Profile::Complete, settings, SimOptions::default())?;
    let limited = game.run(Profile::Limited, settings, SimOptions::default())?;
    let n = cfg.n;
    let (it, ia) = (n, n + 1);
    let zt0 = [complete.z[0][2 * n], complete.z[0][2 * n + 1]];
    let xa0 = cfg.position(PlayerId::Attacker);

    let mut max_cross = 0.0f64;
    let mut max_attacker_cross = 0.0f64;
    for log in [&complete, &limited] {
        for (z, pos) in log.z.iter().zip(&log.positions) {
            max_cross = max_cross.max(cross(zt0, [z[2 * n], z[2 * n + 1]]).abs());
            let da = [pos[ia][0] - xa0[0], pos[ia][1] - xa0[1]];
            max_attacker_cross = max_attacker_cross.max(cross(zt0, da).abs());
        }
    }

    let common = complete.positions.len().min(limited.positions.len());
    let mut max_state_deviation = 0.0f64;
    for k in 0..common {
        for p in [it, ia] {
            let (a, b) = (complete.positions[k][p], limited.positions[k][p]);
            max_state_deviation = max_state_deviation.max((a[0] - b[0]).abs()).max((a[1] - b[1]).abs());
        }
    }
    let mut max_control_deviation = 0.0f64;
    for (a, b) in complete.controls.iter().zip(&limited.controls) {
        max_control_deviation = max_control_deviation
            .max((&a.u_tau - &b.u_tau).amax())
            .max((&a.u_a - &b.u_a).amax());
    }

    Ok(SuicidalReport {
        complete: complete.termination,
        limited: limited.termination,
        max_cross,
        max_attacker_cross,
        cross_tolerance: 1e-6 * (1.0 + zt0[0] * zt0[0] + zt0[1] * zt0[1]),
        max_state_deviation,
        max_control_deviation,
        common_nodes: common,
    })
}

/// Result of two limited-observation runs differing in one radius.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DelayReport {
    pub player: PlayerId,
    pub radius_a: Radius,
    pub radius_b: Radius,
    /// First node time with an outgoing edge from `player` (`None`: never).
    pub first_edge_a: Option<f64>,
    pub first_edge_b: Option<f64>,
    /// First node at which the team controls differ (`None`: never over the
    /// common nodes).
    pub first_divergence: Option<f64>,
    /// Team controls are bit-identical before `min(first_edge_a, first_edge_b)`.
    pub identical_before_first_edge: bool,
    pub termination_a: TerminationRecord,
    pub termination_b: TerminationRecord,
}

fn first_out_edge(log: &TrajectoryLog, p: PlayerId) -> Option<f64> {
    log.snapshots
        .iter()
        .zip(&log.times)
        .find(|(s, _)| s.has_out_edge(p))
        .map(|(_, &t)| t)
}

fn team_controls_equal(mode: Interaction, a: &ControlRecord, b: &ControlRecord) -> bool {
    let same = |x: &DVector<f64>, y: &DVector<f64>| x.iter().zip(y.iter()).all(|(u, v)| u.to_bits() == v.to_bits());
    same(&a.u_d, &b.u_d) && (mode == Interaction::I1 || same(&a.u_tau, &b.u_tau))
}

/// Runs the scenario twice, once with `player`'s radius replaced by
/// `alternative`, and compares the team controls.
pub fn run_paired_delay(
    cfg: &ScenarioConfig,
    player: PlayerId,
    alternative: Radius,
    settings: &OptimizerSettings,
) -> Result<(DelayReport, TrajectoryLog, TrajectoryLog)> {
    let radius_a = cfg
        .visibility_radius(player)
        .ok_or_else(|| Error::Unconstrained(player.to_string()))?;
    let other = cfg.with_visibility_radius(player, alternative)?;
    let (log_a, log_b) = rayon::join(
        || run_with(cfg, Profile::Limited, settings),
        || run_with(&other, Profile::Limited, settings),
    );
    let (log_a, log_b) = (log_a?, log_b?);

    let first_edge_a = first_out_edge(&log_a, player);
    let first_edge_b = first_out_edge(&log_b, player);
    let first_divergence = log_a
        .controls
        .iter()
        .zip(&log_b.controls)
        .position(|(a, b)| !team_controls_equal(cfg.interaction, a, b))
        .map(|k| log_a.times[k]);
    let bound = match (first_edge_a, first_edge_b) {
        (Some(a), Some(b)) => a.min(b),
        (Some(a), None) | (None, Some(a)) => a,
        (None, None) => f64::INFINITY,
    };
    let identical_before_first_edge = first_divergence.is_none_or(|t| t >= bound);

    let report = DelayReport {
        player,
        radius_a,
        radius_b: alternative,
        first_edge_a,
        first_edge_b,
        first_divergence,
        identical_before_first_edge,
        termination_a: log_a.termination,
        termination_b: log_b.termination,
    };
    Ok((report, log_a, log_b))
}

impl TrajectoryLog {
    /// Time of the last logged node.
    pub fn end_time(&self) -> f64 {
        *self.times.last().expect("at least one node")
    }

    /// One row per node: time, positions, controls (blank at the last
    /// node), and a termination flag.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let roster: Vec<PlayerId> = PlayerId::roster(self.n).collect();
        let mut header = vec!["t".to_string()];
        for p in &roster {
            header.push(format!("x_{p}"));
            header.push(format!("y_{p}"));
        }
        for p in &roster {
            header.push(format!("ux_{p}"));
            header.push(format!("uy_{p}"));
        }
        header.push("terminated".into());
        w.write_record(&header).map_err(csv_err)?;

        let last = self.times.len() - 1;
        let ended = self.termination.kind != TerminationKind::HorizonExpired;
        for k in 0..=last {
            let mut row = vec![self.times[k].to_string()];
            for pos in &self.positions[k] {
                row.push(pos[0].to_string());
                row.push(pos[1].to_string());
            }
            for p in &roster {
                match self.controls.get(k) {
                    Some(u) => {
                        let v = u.of(*p);
                        row.push(v[0].to_string());
                        row.push(v[1].to_string());
                    }
                    None => {
                        row.push(String::new());
                        row.push(String::new());
                    }
                }
            }
            let flag = ended && k == self.termination.node;
            row.push(u8::from(flag).to_string());
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }

    /// JSON sidecar: config echo, events, termination and diagnostics.
    pub fn sidecar(&self, cfg: &ScenarioConfig) -> serde_json::Value {
        serde_json::json!({
            "config": cfg,
            "profile": self.profile,
            "strategies": self.labels,
            "termination": self.termination,
            "events": self.events,
            "diagnostics": self.diagnostics,
        })
    }

    /// Per-node optimizer diagnostics as CSV.
    pub fn write_diagnostics_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        for d in &self.diagnostics {
            w.serialize(d).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}
