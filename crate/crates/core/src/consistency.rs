//! Per-node synthesis of consistent network-adapted gains.
//!
//! At every grid node the gains minimize a weighted sum of squared Frobenius
//! norms of the performance-index perturbations. When every constrained
//! player sees everyone the minimizer is known in closed form and reproduces
//! the full-information equilibrium controls exactly.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameMatrices, Interaction};
use crate::riccati::{RiccatiSolution, RiccatiValue};
use crate::strategies::GainSchedule;
use crate::visibility::VisibilitySnapshot;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OptimizerSettings {
    pub max_iters: usize,
    /// Stop when `||grad|| <= grad_tol * (1 + theta)`.
    pub grad_tol: f64,
    pub armijo_c: f64,
    pub shrink: f64,
    pub initial_step: f64,
    /// Line-search halvings before an iteration is declared stalled.
    pub max_backtracks: usize,
    /// Start each node from the previous node's gains.
    pub warm_start: bool,
    /// Turn a missed tolerance into an error instead of a diagnostic.
    pub strict: bool,
    /// Solve nodes independently on the rayon pool (cold starts). Only used
    /// by [`solve_gains`]; online simulation is always sequential.
    pub parallel: bool,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        OptimizerSettings {
            max_iters: 500,
            grad_tol: 1e-8,
            armijo_c: 1e-4,
            shrink: 0.5,
            initial_step: 1.0,
            max_backtracks: 60,
            warm_start: true,
            strict: false,
            parallel: false,
        }
    }
}

/// Gains of the constrained players at one node.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeGains {
    /// `K_{d_i}`, each `2 x 2(n+1)`.
    pub k_d: Vec<DMatrix<f64>>,
    /// `K_tau` (I2 only).
    pub k_tau: Option<DMatrix<f64>>,
}

impl NodeGains {
    pub fn zeros(mats: &GameMatrices, mode: Interaction) -> Self {
        let dim = mats.dim();
        NodeGains {
            k_d: vec![DMatrix::zeros(2, dim); mats.n],
            k_tau: (mode == Interaction::I2).then(|| DMatrix::zeros(2, dim)),
        }
    }

    /// `diag(K_{d_1}, ..., K_{d_n})`.
    pub fn block_diag(&self) -> DMatrix<f64> {
        let n = self.k_d.len();
        let dim = self.k_d.first().map_or(0, |k| k.ncols());
        let mut out = DMatrix::zeros(2 * n, n * dim);
        for (i, k) in self.k_d.iter().enumerate() {
            out.view_mut((2 * i, i * dim), (2, dim)).copy_from(k);
        }
        out
    }

    fn blocks(&self) -> impl Iterator<Item = &DMatrix<f64>> {
        self.k_d.iter().chain(self.k_tau.iter())
    }

    fn blocks_mut(&mut self) -> impl Iterator<Item = &mut DMatrix<f64>> {
        self.k_d.iter_mut().chain(self.k_tau.iter_mut())
    }

    pub fn norm_squared(&self) -> f64 {
        self.blocks().map(|k| k.norm_squared()).sum()
    }

    /// `self + alpha * dir`.
    pub fn axpy(&self, alpha: f64, dir: &NodeGains) -> NodeGains {
        let mut out = self.clone();
        for (o, d) in out.blocks_mut().zip(dir.blocks()) {
            *o += d * alpha;
        }
        out
    }
}

/// Diagnostics of one node's optimization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NodeDiagnostics {
    pub t: f64,
    pub theta: f64,
    pub grad_norm: f64,
    pub iterations: usize,
    pub fast_path: bool,
    pub converged: bool,
}

fn check_gammas(gammas: &[f64], expected: usize) -> Result<()> {
    if gammas.len() != expected {
        return Err(Error::Dimension {
            expected,
            actual: gammas.len(),
        });
    }
    Ok(())
}

/// Error function and its gradient, sharing intermediate products.
struct Objective<'a> {
    mats: &'a GameMatrices,
    value: &'a RiccatiValue,
    snap: &'a VisibilitySnapshot,
    gammas: &'a [f64],
}

impl Objective<'_> {
    fn eval(&self, gains: &NodeGains, with_grad: bool) -> Result<(f64, Option<NodeGains>)> {
        let m = self.mats;
        let g = self.gammas;
        let ki = self.snap.stacked_gated(&gains.k_d);
        match self.value {
            RiccatiValue::NonZeroSum { p_d, p_tau, p_a } => {
                check_gammas(g, 4)?;
                let s1 = m.b_d.tr_mul(p_d) + &m.r_d * &ki;
                let r_ki = &m.r_d * &ki;
                let dq_d = -(p_d * &m.s_d * p_d) + ki.tr_mul(&r_ki);
                let bd_rinv_s1 = &m.b_d * (&m.r_d_inv * &s1);
                let cross = |p: &DMatrix<f64>| {
                    let a = p * &bd_rinv_s1;
                    -(&a + a.transpose())
                };
                let dq_tau = cross(p_tau);
                let dq_a = cross(p_a);
                let theta = g[0] * dq_d.norm_squared()
                    + g[1] * dq_tau.norm_squared()
                    + g[2] * dq_a.norm_squared()
                    + g[3] * s1.norm_squared();
                if !with_grad {
                    return Ok((theta, None));
                }
                let full = &r_ki * &dq_d * (4.0 * g[0])
                    - m.b_d.tr_mul(&(p_tau * &dq_tau)) * (4.0 * g[1])
                    - m.b_d.tr_mul(&(p_a * &dq_a)) * (4.0 * g[2])
                    + &m.r_d * &s1 * (2.0 * g[3]);
                Ok((theta, Some(self.split(&full, None))))
            }
            RiccatiValue::ZeroSum { p } => {
                check_gammas(g, 3)?;
                let (k_tau, info_tau) = match (&gains.k_tau, &self.snap.info_tau) {
                    (Some(k), Some(i)) => (k, i),
                    _ => return Err(Error::ModeMismatch("zero-sum gains need K_tau and I_tau".into())),
                };
                let kit = k_tau * info_tau;
                let r_ki = &m.r_d * &ki;
                let r_kit = &m.r_tau * &kit;
                let s2 = &r_ki - m.b_d.tr_mul(p);
                let s3 = &r_kit - m.b_tau.tr_mul(p);
                let dq = p * (&m.s_d + &m.s_tau) * p - ki.tr_mul(&r_ki) - kit.tr_mul(&r_kit);
                let theta = g[0] * dq.norm_squared() + g[1] * s2.norm_squared() + g[2] * s3.norm_squared();
                if !with_grad {
                    return Ok((theta, None));
                }
                let full = &r_ki * &dq * (-4.0 * g[0]) + &m.r_d * &s2 * (2.0 * g[1]);
                let tau = (&r_kit * &dq * (-4.0 * g[0]) + &m.r_tau * &s3 * (2.0 * g[2])) * info_tau.transpose();
                Ok((theta, Some(self.split(&full, Some(tau)))))
            }
        }
    }

    /// Row block `i` of the stacked gradient, mapped back through `I_{d_i}'`.
    fn split(&self, full: &DMatrix<f64>, k_tau: Option<DMatrix<f64>>) -> NodeGains {
        let k_d = self
            .snap
            .info_d
            .iter()
            .enumerate()
            .map(|(i, info)| full.rows(2 * i, 2) * info.transpose())
            .collect();
        NodeGains { k_d, k_tau }
    }
}

fn objective<'a>(
    mats: &'a GameMatrices,
    value: &'a RiccatiValue,
    snap: &'a VisibilitySnapshot,
    gammas: &'a [f64],
) -> Result<Objective<'a>> {
    if value.mode() == Interaction::I2 && snap.info_tau.is_none() {
        return Err(Error::ModeMismatch("zero-sum node needs a target information matrix".into()));
    }
    Ok(Objective {
        mats,
        value,
        snap,
        gammas,
    })
}

/// Error function of the non-zero-sum game.
pub fn theta1(
    mats: &GameMatrices,
    value: &RiccatiValue,
    k_d: &[DMatrix<f64>],
    snap: &VisibilitySnapshot,
    gammas: &[f64],
) -> Result<f64> {
    value.nzs()?;
    let gains = NodeGains {
        k_d: k_d.to_vec(),
        k_tau: None,
    };
    Ok(objective(mats, value, snap, gammas)?.eval(&gains, false)?.0)
}

/// Error function of the zero-sum game.
pub fn theta2(
    mats: &GameMatrices,
    value: &RiccatiValue,
    k_d: &[DMatrix<f64>],
    k_tau: &DMatrix<f64>,
    snap: &VisibilitySnapshot,
    gammas: &[f64],
) -> Result<f64> {
    value.zs()?;
    let gains = NodeGains {
        k_d: k_d.to_vec(),
        k_tau: Some(k_tau.clone()),
    };
    Ok(objective(mats, value, snap, gammas)?.eval(&gains, false)?.0)
}

/// Error function of whichever game `value` belongs to.
pub fn theta(
    mats: &GameMatrices,
    value: &RiccatiValue,
    gains: &NodeGains,
    snap: &VisibilitySnapshot,
    gammas: &[f64],
) -> Result<f64> {
    Ok(objective(mats, value, snap, gammas)?.eval(gains, false)?.0)
}

/// Gradient blocks with respect to every `K_{d_i}` (and `K_tau` in I2).
pub fn grad_theta(
    mats: &GameMatrices,
    value: &RiccatiValue,
    gains: &NodeGains,
    snap: &VisibilitySnapshot,
    gammas: &[f64],
) -> Result<NodeGains> {
    Ok(objective(mats, value, snap, gammas)?
        .eval(gains, true)?
        .1
        .expect("gradient requested"))
}

/// Inverse of a full-row information matrix for player block `i`.
fn information_inverse(m: usize, i: usize) -> DMatrix<f64> {
    let mut out = DMatrix::identity(2 * m, 2 * m);
    for j in (0..m).filter(|&j| j != i) {
        for c in 0..2 {
            out[(2 * j + c, 2 * i + c)] = 1.0;
        }
    }
    out
}

/// Gains that reproduce the full-information equilibrium controls; requires
/// every information matrix to be invertible.
pub fn closed_form(mats: &GameMatrices, value: &RiccatiValue, snap: &VisibilitySnapshot) -> Result<NodeGains> {
    if !snap.info_all_invertible() {
        return Err(Error::ModeMismatch("closed-form gains need full visibility".into()));
    }
    let n = mats.n;
    let (fne_d, p) = match value {
        RiccatiValue::NonZeroSum { p_d, .. } => (-(&mats.r_d_inv * mats.b_d.tr_mul(p_d)), None),
        RiccatiValue::ZeroSum { p } => (&mats.r_d_inv * mats.b_d.tr_mul(p), Some(p)),
    };
    let k_d = (0..n)
        .map(|i| fne_d.rows(2 * i, 2) * information_inverse(n + 1, i))
        .collect();
    let k_tau = p.map(|p| &mats.r_tau_inv * mats.b_tau.tr_mul(p) * information_inverse(n + 1, n));
    Ok(NodeGains { k_d, k_tau })
}

/// Zeroes the gains of players that see nobody.
fn pin_isolated(gains: &mut NodeGains, snap: &VisibilitySnapshot) {
    for (i, k) in gains.k_d.iter_mut().enumerate() {
        if snap.info_is_zero(i) {
            k.fill(0.0);
        }
    }
    if snap.tau_info_is_zero() {
        if let Some(k) = gains.k_tau.as_mut() {
            k.fill(0.0);
        }
    }
}

/// Minimizes the error function at one node starting from `start`.
pub fn solve_node(
    mats: &GameMatrices,
    value: &RiccatiValue,
    snap: &VisibilitySnapshot,
    gammas: &[f64],
    start: &NodeGains,
    settings: &OptimizerSettings,
    t: f64,
) -> Result<(NodeGains, NodeDiagnostics)> {
    let obj = objective(mats, value, snap, gammas)?;

    if snap.info_all_invertible() {
        let gains = closed_form(mats, value, snap)?;
        let (theta, grad) = obj.eval(&gains, true)?;
        let diag = NodeDiagnostics {
            t,
            theta,
            grad_norm: grad.expect("gradient").norm_squared().sqrt(),
            iterations: 0,
            fast_path: true,
            converged: true,
        };
        return Ok((gains, diag));
    }

    let mut x = start.clone();
    pin_isolated(&mut x, snap);
    let (mut theta, grad) = obj.eval(&x, true)?;
    let mut grad = grad.expect("gradient");
    let mut gnorm2 = grad.norm_squared();
    let mut iterations = 0;
    let mut converged = gnorm2.sqrt() <= settings.grad_tol * (1.0 + theta);

    while !converged && iterations < settings.max_iters {
        let mut step = settings.initial_step;
        let mut accepted = None;
        for _ in 0..=settings.max_backtracks {
            let trial = x.axpy(-step, &grad);
            let (t_theta, _) = obj.eval(&trial, false)?;
            if t_theta <= theta - settings.armijo_c * step * gnorm2 {
                accepted = Some((trial, t_theta));
                break;
            }
            step *= settings.shrink;
        }
        iterations += 1;
        let Some((trial, t_theta)) = accepted else {
            // No descent at machine resolution: x is as good as it gets.
            break;
        };
        x = trial;
        theta = t_theta;
        let (_, g) = obj.eval(&x, true)?;
        grad = g.expect("gradient");
        gnorm2 = grad.norm_squared();
        converged = gnorm2.sqrt() <= settings.grad_tol * (1.0 + theta);
    }

    let diag = NodeDiagnostics {
        t,
        theta,
        grad_norm: gnorm2.sqrt(),
        iterations,
        fast_path: false,
        converged,
    };
    if settings.strict && !converged {
        return Err(Error::IterationLimit {
            time: t,
            iterations,
            theta,
            best: Box::new(x),
        });
    }
    Ok((x, diag))
}

/// Gains at every node of `snapshots` (node `k` at `sol.grid.time(k)`).
pub fn solve_gains(
    mats: &GameMatrices,
    sol: &RiccatiSolution,
    snapshots: &[VisibilitySnapshot],
    gammas: &[f64],
    settings: &OptimizerSettings,
) -> Result<(GainSchedule, Vec<NodeDiagnostics>)> {
    if snapshots.len() > sol.grid.len() {
        return Err(Error::GridMismatch(format!(
            "{} snapshots for {} grid nodes",
            snapshots.len(),
            sol.grid.len()
        )));
    }
    let zero = NodeGains::zeros(mats, sol.mode);
    let results: Vec<(NodeGains, NodeDiagnostics)> = if settings.parallel {
        snapshots
            .par_iter()
            .enumerate()
            .map(|(k, snap)| solve_node(mats, sol.node(k), snap, gammas, &zero, settings, sol.grid.time(k)))
            .collect::<Result<_>>()?
    } else {
        let mut out = Vec::with_capacity(snapshots.len());
        let mut warm = zero.clone();
        for (k, snap) in snapshots.iter().enumerate() {
            let start = if settings.warm_start { &warm } else { &zero };
            let (gains, diag) = solve_node(mats, sol.node(k), snap, gammas, start, settings, sol.grid.time(k))?;
            warm = gains.clone();
            out.push((gains, diag));
        }
        out
    };
    let (nodes, diags) = results.into_iter().unzip();
    Ok((GainSchedule { grid: sol.grid, nodes }, diags))
}
