//! Equilibrium controls and the parametric performance indices.

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::consistency::NodeGains;
use crate::error::{Error, Result};
use crate::model::{GameMatrices, Interaction};
use crate::riccati::{Located, RiccatiSolution, RiccatiValue, TimeGrid};
use crate::simulator::TrajectoryLog;
use crate::visibility::VisibilitySnapshot;

/// Player groups that share a Riccati matrix.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Group {
    /// All defenders stacked (`2n` entries).
    Defenders,
    Target,
    Attacker,
}

/// Per-node gains produced by the consistency optimizer.
#[derive(Debug, Clone, PartialEq)]
pub struct GainSchedule {
    pub grid: TimeGrid,
    /// Gains at nodes `0..nodes.len()`; a terminated run stops early.
    pub nodes: Vec<NodeGains>,
}

impl GainSchedule {
    /// Gains at grid node time `t`.
    pub fn at(&self, t: f64) -> Result<&NodeGains> {
        match self.grid.locate(t)? {
            Located::Node(k) if k < self.nodes.len() => Ok(&self.nodes[k]),
            _ => Err(Error::OutOfRange {
                time: t,
                horizon: self.grid.time(self.nodes.len().saturating_sub(1)),
            }),
        }
    }
}

/// Matrices of the parametric indices at one instant.
#[derive(Debug, Clone, PartialEq)]
pub enum PerfIndexMatrices {
    I1 {
        s1: DMatrix<f64>,
        dq_d: DMatrix<f64>,
        dq_tau: DMatrix<f64>,
        dq_a: DMatrix<f64>,
    },
    I2 {
        s2: DMatrix<f64>,
        s3: DMatrix<f64>,
        dq: DMatrix<f64>,
    },
}

/// FNE control of `group` from a Riccati value.
pub fn fne_control_with(mats: &GameMatrices, value: &RiccatiValue, group: Group, z: &DVector<f64>) -> DVector<f64> {
    match value {
        RiccatiValue::NonZeroSum { p_d, p_tau, p_a } => match group {
            Group::Defenders => -(&mats.r_d_inv * mats.b_d.tr_mul(&(p_d * z))),
            Group::Target => -(&mats.r_tau_inv * mats.b_tau.tr_mul(&(p_tau * z))),
            Group::Attacker => -(&mats.r_a_inv * mats.b_a.tr_mul(&(p_a * z))),
        },
        // The defender-target team maximizes, hence the positive sign.
        RiccatiValue::ZeroSum { p } => {
            let pz = p * z;
            match group {
                Group::Defenders => &mats.r_d_inv * mats.b_d.tr_mul(&pz),
                Group::Target => &mats.r_tau_inv * mats.b_tau.tr_mul(&pz),
                Group::Attacker => -(&mats.r_a_inv * mats.b_a.tr_mul(&pz)),
            }
        }
    }
}

/// FNE control of `group` at time `t`.
pub fn fne_control(
    mats: &GameMatrices,
    sol: &RiccatiSolution,
    group: Group,
    t: f64,
    z: &DVector<f64>,
) -> Result<DVector<f64>> {
    if (mats.zero_sum.is_some()) != (sol.mode == Interaction::I2) {
        return Err(Error::ModeMismatch("matrices and Riccati solution disagree on the interaction".into()));
    }
    Ok(fne_control_with(mats, &sol.value_at(t)?, group, z))
}

/// Network-adapted controls of the constrained players.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptedControls {
    /// `col(K_{d_i} I_{d_i} z)`.
    pub u_d: DVector<f64>,
    /// `K_tau I_tau z` (I2 only).
    pub u_tau: Option<DVector<f64>>,
}

pub fn adapted_control_with(gains: &NodeGains, snap: &VisibilitySnapshot, z: &DVector<f64>) -> AdaptedControls {
    let u_d = snap.stacked_gated(&gains.k_d) * z;
    let u_tau = match (&gains.k_tau, &snap.info_tau) {
        (Some(k), Some(info)) => Some(k * (info * z)),
        _ => None,
    };
    AdaptedControls { u_d, u_tau }
}

pub fn adapted_control(
    schedule: &GainSchedule,
    snap: &VisibilitySnapshot,
    t: f64,
    z: &DVector<f64>,
) -> Result<AdaptedControls> {
    Ok(adapted_control_with(schedule.at(t)?, snap, z))
}

/// Evaluates S1 and the Delta-Q matrices (I1) or S2, S3 and Delta-Q (I2).
pub fn perf_index_matrices(
    mats: &GameMatrices,
    value: &RiccatiValue,
    gains: &NodeGains,
    snap: &VisibilitySnapshot,
) -> Result<PerfIndexMatrices> {
    let ki = snap.stacked_gated(&gains.k_d);
    match value {
        RiccatiValue::NonZeroSum { p_d, p_tau, p_a } => {
            let s1 = mats.b_d.tr_mul(p_d) + &mats.r_d * &ki;
            let bd_rinv = &mats.b_d * &mats.r_d_inv;
            let dq_d = -(p_d * &bd_rinv * mats.b_d.tr_mul(p_d)) + ki.tr_mul(&(&mats.r_d * &ki));
            let cross = |p: &DMatrix<f64>| {
                let m = p * &bd_rinv * &s1;
                -(&m + m.transpose())
            };
            Ok(PerfIndexMatrices::I1 {
                dq_tau: cross(p_tau),
                dq_a: cross(p_a),
                s1,
                dq_d,
            })
        }
        RiccatiValue::ZeroSum { p } => {
            let (k_tau, info_tau) = match (&gains.k_tau, &snap.info_tau) {
                (Some(k), Some(i)) => (k, i),
                _ => return Err(Error::ModeMismatch("zero-sum indices need the target's gain and information matrix".into())),
            };
            let kit = k_tau * info_tau;
            let s2 = &mats.r_d * &ki - mats.b_d.tr_mul(p);
            let s3 = &mats.r_tau * &kit - mats.b_tau.tr_mul(p);
            let dq = p * (&mats.s_d + &mats.s_tau) * p
                - ki.tr_mul(&(&mats.r_d * &ki))
                - kit.tr_mul(&(&mats.r_tau * &kit));
            Ok(PerfIndexMatrices::I2 { s2, s3, dq })
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum IndexKind {
    /// The original quadratic objectives.
    Standard,
    /// The gain-parameterized objectives under which the adapted profile is
    /// an equilibrium.
    Adapted,
}

/// Objective values along a trajectory.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode")]
pub enum Costs {
    I1 { j_d: f64, j_tau: f64, j_a: f64 },
    I2 { j: f64 },
}

fn quad(z: &DVector<f64>, m: &DMatrix<f64>) -> f64 {
    z.dot(&(m * z))
}

/// Evaluates the objectives on a logged trajectory.
///
/// Controls and gains at node `k` are held on `[t_k, t_{k+1})`; the running
/// cost is integrated per interval with the trapezoid rule, and the terminal
/// weight is applied at the last logged node.
pub fn objective_eval(
    mats: &GameMatrices,
    sol: &RiccatiSolution,
    log: &TrajectoryLog,
    which: IndexKind,
) -> Result<Costs> {
    let nodes = log.z.len();
    if nodes == 0 || log.controls.len() + 1 != nodes || nodes > sol.grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} states and {} control intervals on a grid of {} nodes",
            nodes,
            log.controls.len(),
            sol.grid.len()
        )));
    }
    if (log.grid.step - sol.grid.step).abs() > 0.0 || log.grid.steps != sol.grid.steps {
        return Err(Error::GridMismatch("trajectory and Riccati solution use different grids".into()));
    }
    if (mats.zero_sum.is_some()) != (sol.mode == Interaction::I2) {
        return Err(Error::ModeMismatch("matrices and Riccati solution disagree on the interaction".into()));
    }
    let adapted = which == IndexKind::Adapted;
    if adapted && (log.gains.len() + 1 < nodes || log.gating.len() + 1 < nodes) {
        return Err(Error::ModeMismatch(
            "the adapted index needs logged gains and gating (limited-observation run)".into(),
        ));
    }
    let h = sol.grid.step;
    let last = nodes - 1;
    let zs = mats.zero_sum.as_ref();

    let mut acc = [0.0f64; 3];
    for k in 0..last {
        let u = &log.controls[k];
        for (end, weight) in [(k, 0.5 * h), (k + 1, 0.5 * h)] {
            let z = &log.z[end];
            let value = sol.node(end);
            let terms: [f64; 3] = match value {
                RiccatiValue::NonZeroSum { .. } => {
                    let mut j = [
                        quad(z, &mats.q_d) + u.u_d.dot(&(&mats.r_d * &u.u_d)),
                        quad(z, &mats.q_tau) + u.u_tau.dot(&(&mats.r_tau * &u.u_tau)),
                        quad(z, &mats.q_a) + u.u_a.dot(&(&mats.r_a * &u.u_a)),
                    ];
                    if adapted {
                        if let PerfIndexMatrices::I1 { s1, dq_d, dq_tau, dq_a } =
                            perf_index_matrices(mats, value, &log.gains[k], &log.gating[k])?
                        {
                            j[0] += quad(z, &dq_d) - 2.0 * u.u_d.dot(&(&s1 * z));
                            j[1] += quad(z, &dq_tau);
                            j[2] += quad(z, &dq_a);
                        }
                    }
                    j
                }
                RiccatiValue::ZeroSum { .. } => {
                    let zs = zs.expect("zero-sum matrices");
                    let mut j = quad(z, &zs.q) + u.u_a.dot(&(&mats.r_a * &u.u_a))
                        - u.u_d.dot(&(&mats.r_d * &u.u_d))
                        - u.u_tau.dot(&(&mats.r_tau * &u.u_tau));
                    if adapted {
                        if let PerfIndexMatrices::I2 { s2, s3, dq } =
                            perf_index_matrices(mats, value, &log.gains[k], &log.gating[k])?
                        {
                            j += quad(z, &dq) + 2.0 * u.u_d.dot(&(&s2 * z)) + 2.0 * u.u_tau.dot(&(&s3 * z));
                        }
                    }
                    [j, 0.0, 0.0]
                }
            };
            for (a, v) in acc.iter_mut().zip(terms) {
                *a += weight * v;
            }
        }
    }

    let z_end = &log.z[last];
    Ok(match sol.mode {
        Interaction::I1 => Costs::I1 {
            j_d: 0.5 * (quad(z_end, &mats.f_d) + acc[0]),
            j_tau: 0.5 * (quad(z_end, &mats.f_tau) + acc[1]),
            j_a: 0.5 * (quad(z_end, &mats.f_a) + acc[2]),
        },
        Interaction::I2 => Costs::I2 {
            j: 0.5 * (quad(z_end, &zs.expect("zero-sum matrices").f) + acc[0]),
        },
    })
}
