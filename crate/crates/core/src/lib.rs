//! Target-attacker-defender pursuit games on the plane, with defenders and
//! target that may only see part of the game.
//!
//! The usual entry point is [`simulator::run`], which solves the coupled
//! Riccati equations for a [`ScenarioConfig`] and integrates the closed loop.

pub mod consistency;
pub mod error;
pub mod model;
pub mod riccati;
pub mod scenarios;
pub mod simulator;
pub mod strategies;
pub mod visibility;

pub use consistency::{NodeDiagnostics, NodeGains, OptimizerSettings};
pub use error::{Error, Result};
pub use model::{build_matrices, GameMatrices, Interaction, PairWeights, PlayerId, Radius, ReducedState, ScenarioConfig};
pub use riccati::{RiccatiSolution, RiccatiValue, TimeGrid};
pub use simulator::{
    run, run_paired_delay, run_suicidal_check, run_with, PreparedGame, Profile, SimOptions, TerminationKind,
    TerminationRecord, TrajectoryLog,
};
pub use visibility::{Edge, EdgeChange, TransitionEvent, VisibilitySnapshot};
