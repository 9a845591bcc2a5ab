//! The shipped experiment configurations and their expected outcomes.

use serde::{Deserialize, Serialize};

use crate::consistency::OptimizerSettings;
use crate::error::{Error, Result};
use crate::model::{PlayerId, ScenarioConfig};
use crate::simulator::{run_with, Profile, TerminationKind, TerminationRecord, TrajectoryLog};

const SOURCES: [(&str, &str); 6] = [
    ("i1_nonsuicidal", include_str!("../scenarios/i1_nonsuicidal.json")),
    ("i1_suicidal", include_str!("../scenarios/i1_suicidal.json")),
    ("i2_complete", include_str!("../scenarios/i2_complete.json")),
    ("i2_zeta_tau_10", include_str!("../scenarios/i2_zeta_tau_10.json")),
    ("i2_zeta_tau_2_5", include_str!("../scenarios/i2_zeta_tau_2_5.json")),
    ("i2_zeta_d3_0_6", include_str!("../scenarios/i2_zeta_d3_0_6.json")),
];

const MANIFEST: &str = include_str!("../scenarios/expected.json");

/// Names of the shipped scenarios.
pub fn names() -> impl Iterator<Item = &'static str> {
    SOURCES.iter().map(|(n, _)| *n)
}

/// Raw JSON text of a shipped scenario.
pub fn source(name: &str) -> Option<&'static str> {
    SOURCES.iter().find(|(n, _)| *n == name).map(|(_, s)| *s)
}

pub fn by_name(name: &str) -> Result<ScenarioConfig> {
    let text = source(name).ok_or_else(|| Error::config("scenario", format!("unknown scenario `{name}`")))?;
    ScenarioConfig::from_json(text)
}

fn shipped(name: &str) -> ScenarioConfig {
    by_name(name).expect("shipped scenario is valid")
}

pub fn i1_nonsuicidal() -> ScenarioConfig {
    shipped("i1_nonsuicidal")
}

pub fn i1_suicidal() -> ScenarioConfig {
    shipped("i1_suicidal")
}

pub fn i2_complete() -> ScenarioConfig {
    shipped("i2_complete")
}

pub fn i2_zeta_tau_10() -> ScenarioConfig {
    shipped("i2_zeta_tau_10")
}

pub fn i2_zeta_tau_2_5() -> ScenarioConfig {
    shipped("i2_zeta_tau_2_5")
}

pub fn i2_zeta_d3_0_6() -> ScenarioConfig {
    shipped("i2_zeta_d3_0_6")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum OutcomeKind {
    Interception,
    Capture,
    HorizonExpired,
}

impl OutcomeKind {
    pub fn of(kind: TerminationKind) -> (Self, Option<PlayerId>) {
        match kind {
            TerminationKind::Interception(p) => (OutcomeKind::Interception, Some(p)),
            TerminationKind::Capture => (OutcomeKind::Capture, None),
            TerminationKind::HorizonExpired => (OutcomeKind::HorizonExpired, None),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegressionCase {
    pub name: String,
    pub scenario: String,
    pub profile: Profile,
    pub kind: OutcomeKind,
    pub player: Option<PlayerId>,
    pub time: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub caveat: String,
    pub tolerance: f64,
    pub cases: Vec<RegressionCase>,
}

pub fn manifest() -> Manifest {
    serde_json::from_str(MANIFEST).expect("shipped manifest is valid")
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegressionOutcome {
    pub case: RegressionCase,
    pub termination: TerminationRecord,
    /// Outcome kind and winning player match.
    pub outcome_ok: bool,
    /// Termination time within tolerance.
    pub time_ok: bool,
}

impl RegressionOutcome {
    pub fn passed(&self) -> bool {
        self.outcome_ok && self.time_ok
    }
}

pub fn run_case(case: &RegressionCase, tolerance: f64, settings: &OptimizerSettings) -> Result<RegressionOutcome> {
    run_case_logged(case, tolerance, settings).map(|(o, _)| o)
}

/// Like [`run_case`], also returning the trajectory.
pub fn run_case_logged(
    case: &RegressionCase,
    tolerance: f64,
    settings: &OptimizerSettings,
) -> Result<(RegressionOutcome, TrajectoryLog)> {
    let cfg = by_name(&case.scenario)?;
    let log = run_with(&cfg, case.profile, settings)?;
    let (kind, player) = OutcomeKind::of(log.termination.kind);
    // Half a grid step of slack keeps the comparison about grid nodes rather
    // than the binary representation of the expected time.
    let slack = 0.5 * cfg.step;
    let outcome = RegressionOutcome {
        outcome_ok: kind == case.kind && player == case.player,
        time_ok: (log.termination.time - case.time).abs() <= tolerance + slack * 1e-6,
        termination: log.termination,
        case: case.clone(),
    };
    Ok((outcome, log))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{Interaction, Radius};

    #[test]
    fn shipped_configs_parse() {
        for name in names() {
            by_name(name).unwrap();
        }
        assert!(by_name("nope").is_err());
        assert_eq!(manifest().cases.len(), 8);
    }

    #[test]
    fn i1_config_matches_reported_parameters() {
        let cfg = i1_nonsuicidal();
        assert_eq!(cfg.interaction, Interaction::I1);
        assert_eq!(cfg.control_penalties, vec![1.0, 1.0, 1.0, 1.2, 0.8]);
        assert_eq!(cfg.horizon, 6.0);
        assert_eq!(cfg.step, 0.005);
        assert_eq!(cfg.defender_capture_radii, vec![0.1; 3]);
        assert_eq!(
            cfg.defender_visibility_radii,
            vec![Radius::Finite(5.0), Radius::Finite(2.25), Radius::Finite(1.25)]
        );
        assert_eq!(cfg.position(PlayerId::Attacker), [-2.0, 2.0]);
        assert_eq!(i1_suicidal().lambda, 0);
    }
}
