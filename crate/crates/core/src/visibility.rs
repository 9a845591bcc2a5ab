//! Range-limited visibility network and the information matrices it induces.

use std::collections::BTreeSet;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Interaction, PlayerId, ReducedState, ScenarioConfig};

/// Directed edge `from -> to`: `from` sees `to`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Edge {
    pub from: PlayerId,
    pub to: PlayerId,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum EdgeChange {
    Formed,
    Broken,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransitionEvent {
    pub t: f64,
    pub from: PlayerId,
    pub to: PlayerId,
    pub change: EdgeChange,
}

fn distance(a: [f64; 2], b: [f64; 2]) -> f64 {
    (a[0] - b[0]).hypot(a[1] - b[1])
}

/// Whether `p` sees `q` at state `z`. The boundary counts as visible.
///
/// The attacker cannot be queried; the target can only be queried in I2.
pub fn edge_active(p: PlayerId, q: PlayerId, z: &ReducedState, cfg: &ScenarioConfig) -> Result<bool> {
    let radius = cfg
        .visibility_radius(p)
        .ok_or_else(|| Error::Unconstrained(p.to_string()))?;
    Ok(radius.covers(distance(z.displacement(p), z.displacement(q))))
}

/// The visibility network at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct VisibilitySnapshot {
    pub n: usize,
    /// `diag(phi^a_{d_1}, ..., phi^a_{d_n})`.
    pub phi_a: DMatrix<f64>,
    /// `col(phi^tau_{d_1}, ..., phi^tau_{d_n})`.
    pub phi_tau: DVector<f64>,
    /// Defender-to-defender adjacency, zero diagonal.
    pub ad: DMatrix<f64>,
    /// `[Phi_a + Ad, Phi_tau]`, `n x (n+1)`.
    pub aug: DMatrix<f64>,
    /// Target's outgoing edges to `d_1..d_n, a` (I2 only).
    pub tau_row: Option<DVector<f64>>,
    pub info_d: Vec<DMatrix<f64>>,
    pub info_tau: Option<DMatrix<f64>>,
    /// Active edges out of constrained players.
    pub edges: BTreeSet<Edge>,
}

/// `diag(row) (I - e_i' (x) [1 - e_i]) (x) I_2`: row `j != i` of the inner
/// factor picks `z_j - z_i`, row `i` picks `z_i`.
pub fn information_matrix(row: &[f64], i: usize) -> DMatrix<f64> {
    let m = row.len();
    let mut out = DMatrix::zeros(2 * m, 2 * m);
    for (j, &g) in row.iter().enumerate() {
        if g == 0.0 {
            continue;
        }
        for c in 0..2 {
            out[(2 * j + c, 2 * j + c)] = g;
            if j != i {
                out[(2 * j + c, 2 * i + c)] = -g;
            }
        }
    }
    out
}

impl VisibilitySnapshot {
    pub fn info_all_invertible(&self) -> bool {
        let full_row = |r: &[f64]| r.iter().all(|&v| v == 1.0);
        (0..self.n).all(|i| full_row(self.aug.row(i).transpose().as_slice()))
            && self.tau_row.as_ref().is_none_or(|r| full_row(r.as_slice()))
    }

    /// True when `p` has at least one outgoing edge.
    pub fn has_out_edge(&self, p: PlayerId) -> bool {
        self.edges.iter().any(|e| e.from == p)
    }

    pub fn info_is_zero(&self, i: usize) -> bool {
        self.aug.row(i).iter().all(|&v| v == 0.0)
    }

    pub fn tau_info_is_zero(&self) -> bool {
        self.tau_row.as_ref().is_none_or(|r| r.iter().all(|&v| v == 0.0))
    }

    /// `col(I_{d_1}, ..., I_{d_n})` applied to a gain: `K_d I_d` stacked.
    pub fn stacked_gated(&self, k_d: &[DMatrix<f64>]) -> DMatrix<f64> {
        let dim = 2 * (self.n + 1);
        let mut out = DMatrix::zeros(2 * self.n, dim);
        for (i, (k, info)) in k_d.iter().zip(&self.info_d).enumerate() {
            out.rows_mut(2 * i, 2).copy_from(&(k * info));
        }
        out
    }
}

/// Builds the visibility network of state `z`.
pub fn snapshot(z: &ReducedState, cfg: &ScenarioConfig) -> VisibilitySnapshot {
    let n = cfg.n;
    let mut phi_a = DMatrix::zeros(n, n);
    let mut phi_tau = DVector::zeros(n);
    let mut ad = DMatrix::zeros(n, n);
    let mut edges = BTreeSet::new();
    let sees = |p: PlayerId, q: PlayerId| edge_active(p, q, z, cfg).expect("constrained player");

    for i in 0..n {
        let p = PlayerId::Defender(i + 1);
        for q in PlayerId::roster(n).filter(|&q| q != p) {
            if !sees(p, q) {
                continue;
            }
            edges.insert(Edge { from: p, to: q });
            match q {
                PlayerId::Attacker => phi_a[(i, i)] = 1.0,
                PlayerId::Target => phi_tau[i] = 1.0,
                PlayerId::Defender(j) => ad[(i, j - 1)] = 1.0,
            }
        }
    }

    let mut aug = DMatrix::zeros(n, n + 1);
    aug.columns_mut(0, n).copy_from(&(&phi_a + &ad));
    aug.set_column(n, &phi_tau);

    let info_d = (0..n)
        .map(|i| information_matrix(aug.row(i).transpose().as_slice(), i))
        .collect();

    let (tau_row, info_tau) = if cfg.interaction == Interaction::I2 {
        let mut row = DVector::zeros(n + 1);
        for (j, q) in PlayerId::roster(n).filter(|&q| q != PlayerId::Target).enumerate() {
            if sees(PlayerId::Target, q) {
                row[j] = 1.0;
                edges.insert(Edge {
                    from: PlayerId::Target,
                    to: q,
                });
            }
        }
        let info = information_matrix(row.as_slice(), n);
        (Some(row), Some(info))
    } else {
        (None, None)
    };

    VisibilitySnapshot {
        n,
        phi_a,
        phi_tau,
        ad,
        aug,
        tau_row,
        info_d,
        info_tau,
        edges,
    }
}

/// Edge changes between consecutive snapshots; `times[k]` is the time of
/// `snapshots[k]`.
pub fn transitions(times: &[f64], snapshots: &[VisibilitySnapshot]) -> Vec<TransitionEvent> {
    let mut events = Vec::new();
    for k in 1..snapshots.len().min(times.len()) {
        let (prev, cur) = (&snapshots[k - 1].edges, &snapshots[k].edges);
        let broken = prev.difference(cur).map(|e| (e, EdgeChange::Broken));
        let formed = cur.difference(prev).map(|e| (e, EdgeChange::Formed));
        let mut step: Vec<_> = formed
            .chain(broken)
            .map(|(e, change)| TransitionEvent {
                t: times[k],
                from: e.from,
                to: e.to,
                change,
            })
            .collect();
        step.sort_by_key(|e| (e.from, e.to));
        events.extend(step);
    }
    events
}
