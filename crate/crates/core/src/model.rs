//! Players, scenario configuration, and the constant matrices of the game.
//!
//! Every stacked vector and block matrix uses the roster order
//! `d_1, ..., d_n, tau`, with the attacker as the origin of the reduced
//! coordinates `z_p = X_p - X_a`.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};

/// Identity of a player. Defender indices are 1-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum PlayerId {
    Defender(usize),
    Target,
    Attacker,
}

impl PlayerId {
    /// Position of the player in the roster `d_1..d_n, tau, a`.
    pub fn roster_index(self, n: usize) -> usize {
        match self {
            PlayerId::Defender(i) => i - 1,
            PlayerId::Target => n,
            PlayerId::Attacker => n + 1,
        }
    }

    pub fn from_roster_index(index: usize, n: usize) -> Self {
        match index {
            i if i < n => PlayerId::Defender(i + 1),
            i if i == n => PlayerId::Target,
            _ => PlayerId::Attacker,
        }
    }

    /// All players of an `n`-defender game in roster order.
    pub fn roster(n: usize) -> impl Iterator<Item = PlayerId> {
        (0..n + 2).map(move |i| PlayerId::from_roster_index(i, n))
    }

    pub fn is_defender(self) -> bool {
        matches!(self, PlayerId::Defender(_))
    }
}

impl fmt::Display for PlayerId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            PlayerId::Defender(i) => write!(f, "d{i}"),
            PlayerId::Target => f.write_str("tau"),
            PlayerId::Attacker => f.write_str("a"),
        }
    }
}

impl FromStr for PlayerId {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "tau" | "target" => Ok(PlayerId::Target),
            "a" | "attacker" => Ok(PlayerId::Attacker),
            _ => s
                .strip_prefix('d')
                .and_then(|rest| rest.parse::<usize>().ok())
                .filter(|&i| i >= 1)
                .map(PlayerId::Defender)
                .ok_or_else(|| Error::config(s, "unknown player id (expected d<i>, tau or a)")),
        }
    }
}

impl Serialize for PlayerId {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for PlayerId {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Interaction {
    /// Defenders constrained; target and attacker see everything.
    I1,
    /// Defenders and target form a constrained team against the attacker.
    I2,
}

/// Observation radius. `Unbounded` is kept distinct from any finite value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Radius {
    Finite(f64),
    Unbounded,
}

impl Radius {
    pub fn covers(self, distance: f64) -> bool {
        match self {
            Radius::Finite(r) => distance <= r,
            Radius::Unbounded => true,
        }
    }

    pub fn finite(self) -> Option<f64> {
        match self {
            Radius::Finite(r) => Some(r),
            Radius::Unbounded => None,
        }
    }
}

impl Serialize for Radius {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Radius::Finite(r) => s.serialize_f64(*r),
            Radius::Unbounded => s.serialize_str("inf"),
        }
    }
}

impl<'de> Deserialize<'de> for Radius {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Num(f64),
            Str(String),
        }
        match Repr::deserialize(d)? {
            Repr::Num(r) => Ok(Radius::Finite(r)),
            Repr::Str(s) if matches!(s.as_str(), "inf" | "infinity" | "unbounded") => {
                Ok(Radius::Unbounded)
            }
            Repr::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number or \"inf\", got \"{s}\""
            ))),
        }
    }
}

/// Pairwise weights between a non-attacker player `p` and the attacker.
///
/// `f_pa`, `q_pa` weigh the distance in `p`'s own objective; `f_ap`, `q_ap`
/// weigh it in the attacker's objective.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PairWeights {
    #[serde(default = "one")]
    pub f_pa: f64,
    #[serde(default = "one")]
    pub f_ap: f64,
    #[serde(default = "one")]
    pub q_pa: f64,
    #[serde(default = "one")]
    pub q_ap: f64,
}

fn one() -> f64 {
    1.0
}

impl Default for PairWeights {
    fn default() -> Self {
        PairWeights {
            f_pa: 1.0,
            f_ap: 1.0,
            q_pa: 1.0,
            q_ap: 1.0,
        }
    }
}

pub const DEFAULT_STEP: f64 = 0.005;
pub const DEFAULT_HORIZON: f64 = 6.0;

/// A complete, validated problem instance.
///
/// Construct through [`ScenarioConfig::from_json`] or deserialization; both
/// apply defaults and validate, so downstream code may assume validity.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawConfig", into = "RawConfig")]
pub struct ScenarioConfig {
    pub interaction: Interaction,
    pub n: usize,
    /// Roster order, length `n + 2`.
    pub initial_positions: Vec<[f64; 2]>,
    pub defender_capture_radii: Vec<f64>,
    pub attacker_capture_radius: f64,
    pub defender_visibility_radii: Vec<Radius>,
    pub target_visibility_radius: Radius,
    /// `d_1..d_n, tau`.
    pub weights: Vec<PairWeights>,
    /// Roster order, length `n + 2`.
    pub control_penalties: Vec<f64>,
    pub lambda: u8,
    pub horizon: f64,
    pub step: f64,
    pub gamma_weights: Vec<f64>,
}

/// Serialized form of [`ScenarioConfig`].
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    interaction: Option<Interaction>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    n: Option<usize>,
    initial_positions: BTreeMap<PlayerId, [f64; 2]>,
    capture_radii: BTreeMap<PlayerId, f64>,
    visibility_radii: BTreeMap<PlayerId, Radius>,
    #[serde(default)]
    weights: BTreeMap<PlayerId, PairWeights>,
    #[serde(default)]
    control_penalties: BTreeMap<PlayerId, f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    lambda: Option<u8>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    step: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    gamma_weights: Option<Vec<f64>>,
}

impl TryFrom<RawConfig> for ScenarioConfig {
    type Error = Error;

    fn try_from(raw: RawConfig) -> Result<Self> {
        let interaction = raw.interaction.unwrap_or(Interaction::I1);
        let inferred = raw
            .initial_positions
            .keys()
            .filter(|p| p.is_defender())
            .count();
        let n = raw.n.unwrap_or(inferred);
        if n == 0 {
            return Err(Error::config("n", "at least one defender is required"));
        }

        let check_keys = |field: &str, keys: &mut dyn Iterator<Item = &PlayerId>, allowed: &dyn Fn(PlayerId) -> bool| -> Result<()> {
            for &p in keys {
                let in_roster = match p {
                    PlayerId::Defender(i) => i <= n,
                    _ => true,
                };
                if !in_roster || !allowed(p) {
                    return Err(Error::config(format!("{field}.{p}"), "player not allowed here"));
                }
            }
            Ok(())
        };

        check_keys("initial_positions", &mut raw.initial_positions.keys(), &|_| true)?;
        let mut initial_positions = Vec::with_capacity(n + 2);
        for p in PlayerId::roster(n) {
            let pos = raw
                .initial_positions
                .get(&p)
                .ok_or_else(|| Error::config(format!("initial_positions.{p}"), "missing player"))?;
            if !pos.iter().all(|c| c.is_finite()) {
                return Err(Error::config(format!("initial_positions.{p}"), "non-finite coordinate"));
            }
            initial_positions.push(*pos);
        }

        check_keys("capture_radii", &mut raw.capture_radii.keys(), &|p| p != PlayerId::Target)?;
        let capture = |p: PlayerId| -> Result<f64> {
            let path = format!("capture_radii.{p}");
            let r = *raw
                .capture_radii
                .get(&p)
                .ok_or_else(|| Error::config(&path, "missing capture radius"))?;
            positive(&path, r)
        };
        let defender_capture_radii = (1..=n)
            .map(|i| capture(PlayerId::Defender(i)))
            .collect::<Result<Vec<_>>>()?;
        let attacker_capture_radius = capture(PlayerId::Attacker)?;

        check_keys("visibility_radii", &mut raw.visibility_radii.keys(), &|p| p != PlayerId::Attacker)?;
        let radius = |p: PlayerId, r: Radius| -> Result<Radius> {
            match r {
                Radius::Finite(v) => positive(&format!("visibility_radii.{p}"), v).map(Radius::Finite),
                Radius::Unbounded => Ok(r),
            }
        };
        let mut defender_visibility_radii = Vec::with_capacity(n);
        for i in 1..=n {
            let p = PlayerId::Defender(i);
            let path = format!("visibility_radii.{p}");
            let r = *raw
                .visibility_radii
                .get(&p)
                .ok_or_else(|| Error::config(&path, "missing visibility radius"))?;
            let r = radius(p, r)?;
            if let Radius::Finite(z) = r {
                if defender_capture_radii[i - 1] >= z {
                    return Err(Error::config(
                        path,
                        format!(
                            "capture radius {} must be smaller than visibility radius {z}",
                            defender_capture_radii[i - 1]
                        ),
                    ));
                }
            }
            defender_visibility_radii.push(r);
        }
        let target_visibility_radius = match raw.visibility_radii.get(&PlayerId::Target) {
            Some(&r) => radius(PlayerId::Target, r)?,
            None => Radius::Unbounded,
        };

        check_keys("weights", &mut raw.weights.keys(), &|p| p != PlayerId::Attacker)?;
        let mut weights = Vec::with_capacity(n + 1);
        for p in PlayerId::roster(n).take(n + 1) {
            let w = raw.weights.get(&p).copied().unwrap_or_default();
            for (name, v) in [("f_pa", w.f_pa), ("f_ap", w.f_ap), ("q_pa", w.q_pa), ("q_ap", w.q_ap)] {
                positive(&format!("weights.{p}.{name}"), v)?;
            }
            weights.push(w);
        }

        check_keys("control_penalties", &mut raw.control_penalties.keys(), &|_| true)?;
        let control_penalties = PlayerId::roster(n)
            .map(|p| {
                let r = raw.control_penalties.get(&p).copied().unwrap_or(1.0);
                positive(&format!("control_penalties.{p}"), r)
            })
            .collect::<Result<Vec<_>>>()?;

        let lambda = raw.lambda.unwrap_or(1);
        if lambda > 1 {
            return Err(Error::config("lambda", "must be 0 or 1"));
        }
        if interaction == Interaction::I2 && lambda != 1 {
            return Err(Error::config("lambda", "interaction I2 requires a non-suicidal attacker (lambda = 1)"));
        }

        let horizon = positive("horizon", raw.horizon.unwrap_or(DEFAULT_HORIZON))?;
        let step = positive("step", raw.step.unwrap_or(DEFAULT_STEP))?;
        let ratio = horizon / step;
        if (ratio - ratio.round()).abs() > 1e-9 * ratio.max(1.0) {
            return Err(Error::config("step", format!("horizon {horizon} is not an integer multiple of step {step}")));
        }
        if ratio.round() < 2.0 {
            return Err(Error::config("step", "the time grid needs at least two intervals"));
        }

        let expected = match interaction {
            Interaction::I1 => 4,
            Interaction::I2 => 3,
        };
        let gamma_weights = raw
            .gamma_weights
            .unwrap_or_else(|| vec![1.0 / expected as f64; expected]);
        if gamma_weights.len() != expected {
            return Err(Error::config(
                "gamma_weights",
                format!("{interaction:?} needs {expected} weights, got {}", gamma_weights.len()),
            ));
        }
        for (i, g) in gamma_weights.iter().enumerate() {
            if !(0.0..=1.0).contains(g) {
                return Err(Error::config(format!("gamma_weights[{i}]"), "must lie in [0, 1]"));
            }
        }

        Ok(ScenarioConfig {
            interaction,
            n,
            initial_positions,
            defender_capture_radii,
            attacker_capture_radius,
            defender_visibility_radii,
            target_visibility_radius,
            weights,
            control_penalties,
            lambda,
            horizon,
            step,
            gamma_weights,
        })
    }
}

fn positive(path: &str, v: f64) -> Result<f64> {
    if v.is_finite() && v > 0.0 {
        Ok(v)
    } else {
        Err(Error::config(path, format!("must be a positive finite number, got {v}")))
    }
}

impl From<ScenarioConfig> for RawConfig {
    fn from(cfg: ScenarioConfig) -> Self {
        let n = cfg.n;
        let roster = || PlayerId::roster(n);
        let mut capture_radii: BTreeMap<_, _> = (1..=n)
            .map(|i| (PlayerId::Defender(i), cfg.defender_capture_radii[i - 1]))
            .collect();
        capture_radii.insert(PlayerId::Attacker, cfg.attacker_capture_radius);
        let mut visibility_radii: BTreeMap<_, _> = (1..=n)
            .map(|i| (PlayerId::Defender(i), cfg.defender_visibility_radii[i - 1]))
            .collect();
        visibility_radii.insert(PlayerId::Target, cfg.target_visibility_radius);
        RawConfig {
            interaction: Some(cfg.interaction),
            n: Some(n),
            initial_positions: roster().zip(cfg.initial_positions.iter().copied()).collect(),
            capture_radii,
            visibility_radii,
            weights: roster().zip(cfg.weights.iter().copied()).collect(),
            control_penalties: roster().zip(cfg.control_penalties.iter().copied()).collect(),
            lambda: Some(cfg.lambda),
            horizon: Some(cfg.horizon),
            step: Some(cfg.step),
            gamma_weights: Some(cfg.gamma_weights),
        }
    }
}

impl ScenarioConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    /// The effective configuration, all defaults written out.
    pub fn to_json_value(&self) -> serde_json::Value {
        serde_json::to_value(self).expect("config serializes")
    }

    /// Dimension of the reduced state, `2(n + 1)`.
    pub fn dim(&self) -> usize {
        2 * (self.n + 1)
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }

    pub fn position(&self, p: PlayerId) -> [f64; 2] {
        self.initial_positions[p.roster_index(self.n)]
    }

    pub fn control_penalty(&self, p: PlayerId) -> f64 {
        self.control_penalties[p.roster_index(self.n)]
    }

    /// Observation radius of a visibility-constrained player; `None` for
    /// players that see everything in this interaction.
    pub fn visibility_radius(&self, p: PlayerId) -> Option<Radius> {
        match p {
            PlayerId::Defender(i) => self.defender_visibility_radii.get(i - 1).copied(),
            PlayerId::Target if self.interaction == Interaction::I2 => {
                Some(self.target_visibility_radius)
            }
            _ => None,
        }
    }

    pub fn is_constrained(&self, p: PlayerId) -> bool {
        self.visibility_radius(p).is_some()
    }

    /// Copy with one player's visibility radius replaced.
    pub fn with_visibility_radius(&self, p: PlayerId, r: Radius) -> Result<Self> {
        let mut raw = RawConfig::from(self.clone());
        raw.visibility_radii.insert(p, r);
        ScenarioConfig::try_from(raw)
    }
}

/// Constant matrices of the game in reduced coordinates.
#[derive(Debug, Clone)]
pub struct GameMatrices {
    pub n: usize,
    pub b_d: DMatrix<f64>,
    pub b_tau: DMatrix<f64>,
    pub b_a: DMatrix<f64>,
    pub f_d: DMatrix<f64>,
    pub f_tau: DMatrix<f64>,
    pub f_a: DMatrix<f64>,
    pub q_d: DMatrix<f64>,
    pub q_tau: DMatrix<f64>,
    pub q_a: DMatrix<f64>,
    pub r_d: DMatrix<f64>,
    pub r_tau: DMatrix<f64>,
    pub r_a: DMatrix<f64>,
    pub r_d_inv: DMatrix<f64>,
    pub r_tau_inv: DMatrix<f64>,
    pub r_a_inv: DMatrix<f64>,
    /// `B_p R_p^{-1} B_p'`.
    pub s_d: DMatrix<f64>,
    pub s_tau: DMatrix<f64>,
    pub s_a: DMatrix<f64>,
    /// Aggregates of the zero-sum game, present for interaction I2.
    pub zero_sum: Option<ZeroSumMatrices>,
}

#[derive(Debug, Clone)]
pub struct ZeroSumMatrices {
    pub f: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub r_dtau: DMatrix<f64>,
    pub r_dtau_inv: DMatrix<f64>,
    pub b_dtau: DMatrix<f64>,
    pub s_dtau: DMatrix<f64>,
}

/// `diag(values) (x) I_2`.
pub(crate) fn diag2(values: &[f64]) -> DMatrix<f64> {
    DMatrix::from_diagonal(&DVector::from_iterator(
        2 * values.len(),
        values.iter().flat_map(|&v| [v, v]),
    ))
}

impl GameMatrices {
    pub fn dim(&self) -> usize {
        2 * (self.n + 1)
    }
}

/// Builds every constant matrix of the game from the scalar parameters.
pub fn build_matrices(cfg: &ScenarioConfig) -> Result<GameMatrices> {
    let n = cfg.n;
    let dim = 2 * (n + 1);
    // The config type validates on construction, but public fields can be
    // edited afterwards.
    for (i, w) in cfg.weights.iter().enumerate() {
        let p = PlayerId::from_roster_index(i, n);
        for (name, v) in [("f_pa", w.f_pa), ("f_ap", w.f_ap), ("q_pa", w.q_pa), ("q_ap", w.q_ap)] {
            positive(&format!("weights.{p}.{name}"), v)?;
        }
    }
    for (i, &r) in cfg.control_penalties.iter().enumerate() {
        positive(&format!("control_penalties.{}", PlayerId::from_roster_index(i, n)), r)?;
    }
    for i in 0..n {
        if let Radius::Finite(z) = cfg.defender_visibility_radii[i] {
            if cfg.defender_capture_radii[i] >= z {
                return Err(Error::config(
                    format!("visibility_radii.d{}", i + 1),
                    "capture radius must be smaller than visibility radius",
                ));
            }
        }
    }
    if cfg.weights.len() != n + 1 || cfg.control_penalties.len() != n + 2 {
        return Err(Error::Dimension {
            expected: n + 2,
            actual: cfg.control_penalties.len(),
        });
    }

    let lambda = cfg.lambda as f64;
    let w = &cfg.weights;
    let tau = &w[n];

    let mut b_d = DMatrix::zeros(dim, 2 * n);
    b_d.view_mut((0, 0), (2 * n, 2 * n)).fill_with_identity();
    let mut b_tau = DMatrix::zeros(dim, 2);
    b_tau.view_mut((2 * n, 0), (2, 2)).fill_with_identity();
    let b_a = DMatrix::from_fn(dim, 2, |r, c| if r % 2 == c { -1.0 } else { 0.0 });

    let defenders = |f: &dyn Fn(&PairWeights) -> f64| w[..n].iter().map(f).collect::<Vec<_>>();
    let with_tail = |mut v: Vec<f64>, last: f64| {
        v.push(last);
        v
    };

    let f_d = diag2(&with_tail(defenders(&|p| p.f_pa), 0.0));
    let q_d = diag2(&with_tail(defenders(&|p| p.q_pa), 0.0));
    let f_tau = diag2(&with_tail(vec![0.0; n], -tau.f_pa));
    let q_tau = diag2(&with_tail(vec![0.0; n], -tau.q_pa));
    let f_a = diag2(&with_tail(defenders(&|p| -lambda * p.f_ap), tau.f_ap));
    let q_a = diag2(&with_tail(defenders(&|p| -lambda * p.q_ap), tau.q_ap));

    let r = &cfg.control_penalties;
    let r_d = diag2(&r[..n]);
    let r_tau = diag2(&r[n..n + 1]);
    let r_a = diag2(&r[n + 1..n + 2]);
    let inv = |m: &DMatrix<f64>| DMatrix::from_diagonal(&m.diagonal().map(|v| 1.0 / v));
    let (r_d_inv, r_tau_inv, r_a_inv) = (inv(&r_d), inv(&r_tau), inv(&r_a));

    let s = |b: &DMatrix<f64>, r_inv: &DMatrix<f64>| b * r_inv * b.transpose();
    let s_d = s(&b_d, &r_d_inv);
    let s_tau = s(&b_tau, &r_tau_inv);
    let s_a = s(&b_a, &r_a_inv);

    let zero_sum = (cfg.interaction == Interaction::I2).then(|| {
        let f = diag2(&with_tail(defenders(&|p| -p.f_ap), tau.f_ap));
        let q = diag2(&with_tail(defenders(&|p| -p.q_ap), tau.q_ap));
        let r_dtau = diag2(&r[..n + 1]);
        let r_dtau_inv = inv(&r_dtau);
        let mut b_dtau = DMatrix::zeros(dim, dim);
        b_dtau.columns_mut(0, 2 * n).copy_from(&b_d);
        b_dtau.columns_mut(2 * n, 2).copy_from(&b_tau);
        let s_dtau = &s_d + &s_tau;
        ZeroSumMatrices {
            f,
            q,
            r_dtau,
            r_dtau_inv,
            b_dtau,
            s_dtau,
        }
    });

    Ok(GameMatrices {
        n,
        b_d,
        b_tau,
        b_a,
        f_d,
        f_tau,
        f_a,
        q_d,
        q_tau,
        q_a,
        r_d,
        r_tau,
        r_a,
        r_d_inv,
        r_tau_inv,
        r_a_inv,
        s_d,
        s_tau,
        s_a,
        zero_sum,
    })
}

/// Stacked displacements `z = col(z_{d_1}, ..., z_{d_n}, z_tau)` relative to
/// the attacker.
#[derive(Debug, Clone, PartialEq)]
pub struct ReducedState(pub DVector<f64>);

impl ReducedState {
    pub fn n(&self) -> usize {
        self.0.len() / 2 - 1
    }

    /// Displacement of a player from the attacker (zero for the attacker).
    pub fn displacement(&self, p: PlayerId) -> [f64; 2] {
        match p {
            PlayerId::Attacker => [0.0, 0.0],
            _ => {
                let k = 2 * p.roster_index(self.n());
                [self.0[k], self.0[k + 1]]
            }
        }
    }

    /// Reduced state from roster-ordered absolute positions (length `n + 2`).
    pub fn from_roster(positions: &[[f64; 2]]) -> Result<Self> {
        if positions.len() < 3 {
            return Err(Error::Dimension {
                expected: 3,
                actual: positions.len(),
            });
        }
        let a = positions[positions.len() - 1];
        let body = &positions[..positions.len() - 1];
        Ok(ReducedState(DVector::from_iterator(
            2 * body.len(),
            body.iter().flat_map(|p| [p[0] - a[0], p[1] - a[1]]),
        )))
    }

    /// Absolute positions in roster order given the attacker's position.
    pub fn to_roster(&self, attacker: [f64; 2]) -> Vec<[f64; 2]> {
        let mut out: Vec<[f64; 2]> = self
            .0
            .as_slice()
            .chunks_exact(2)
            .map(|c| [c[0] + attacker[0], c[1] + attacker[1]])
            .collect();
        out.push(attacker);
        out
    }
}

/// Reduced state of an `n`-defender game from a full position map.
pub fn to_reduced(n: usize, positions: &BTreeMap<PlayerId, [f64; 2]>) -> Result<ReducedState> {
    let roster = PlayerId::roster(n)
        .map(|p| {
            positions
                .get(&p)
                .copied()
                .ok_or_else(|| Error::config(format!("positions.{p}"), "missing player"))
        })
        .collect::<Result<Vec<_>>>()?;
    ReducedState::from_roster(&roster)
}

/// Inverse of [`to_reduced`] anchored at the attacker's position.
pub fn from_reduced(
    z: &ReducedState,
    n: usize,
    attacker: [f64; 2],
) -> Result<BTreeMap<PlayerId, [f64; 2]>> {
    if z.0.len() != 2 * (n + 1) {
        return Err(Error::Dimension {
            expected: 2 * (n + 1),
            actual: z.0.len(),
        });
    }
    Ok(PlayerId::roster(n).zip(z.to_roster(attacker)).collect())
}
