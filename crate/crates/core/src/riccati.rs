//! Backward integration of the Riccati equations on the simulation grid.

use std::io::Write;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{GameMatrices, Interaction, ScenarioConfig};

/// Entries beyond this magnitude are treated as a finite escape.
pub const ESCAPE_THRESHOLD: f64 = 1e12;

/// Uniform grid `t_k = k * step`, `k = 0..=steps`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub step: f64,
    pub steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, step: f64) -> Result<Self> {
        if !(step > 0.0 && horizon > 0.0) {
            return Err(Error::config("step", "horizon and step must be positive"));
        }
        let ratio = horizon / step;
        let steps = ratio.round();
        if (ratio - steps).abs() > 1e-9 * ratio.max(1.0) || steps < 2.0 {
            return Err(Error::config(
                "step",
                format!("horizon {horizon} is not an integer multiple (>= 2) of step {step}"),
            ));
        }
        Ok(TimeGrid {
            step,
            steps: steps as usize,
        })
    }

    pub fn from_config(cfg: &ScenarioConfig) -> Self {
        TimeGrid {
            step: cfg.step,
            steps: cfg.steps(),
        }
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.step
    }

    pub fn horizon(&self) -> f64 {
        self.time(self.steps)
    }

    pub fn len(&self) -> usize {
        self.steps + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// The same horizon at half the step.
    pub fn halved(&self) -> Self {
        TimeGrid {
            step: self.step / 2.0,
            steps: self.steps * 2,
        }
    }

    /// Node index when `t` is on the grid, otherwise the bracketing pair and
    /// the interpolation weight of the upper node.
    pub fn locate(&self, t: f64) -> Result<Located> {
        let horizon = self.horizon();
        let tol = self.step / 2.0 * 1e-6;
        if !(t >= -tol && t <= horizon + tol) {
            return Err(Error::OutOfRange { time: t, horizon });
        }
        let x = (t / self.step).clamp(0.0, self.steps as f64);
        let k = x.round();
        if (t - k * self.step).abs() <= tol {
            return Ok(Located::Node(k as usize));
        }
        let lo = (x.floor() as usize).min(self.steps - 1);
        Ok(Located::Between(lo, x - lo as f64))
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Located {
    Node(usize),
    Between(usize, f64),
}

/// Riccati matrices at one instant.
#[derive(Debug, Clone, PartialEq)]
pub enum RiccatiValue {
    NonZeroSum {
        p_d: DMatrix<f64>,
        p_tau: DMatrix<f64>,
        p_a: DMatrix<f64>,
    },
    ZeroSum {
        p: DMatrix<f64>,
    },
}

impl RiccatiValue {
    pub fn mode(&self) -> Interaction {
        match self {
            RiccatiValue::NonZeroSum { .. } => Interaction::I1,
            RiccatiValue::ZeroSum { .. } => Interaction::I2,
        }
    }

    /// `(P_d, P_tau, P_a)`.
    pub fn nzs(&self) -> Result<(&DMatrix<f64>, &DMatrix<f64>, &DMatrix<f64>)> {
        match self {
            RiccatiValue::NonZeroSum { p_d, p_tau, p_a } => Ok((p_d, p_tau, p_a)),
            RiccatiValue::ZeroSum { .. } => {
                Err(Error::ModeMismatch("expected the non-zero-sum solution (I1)".into()))
            }
        }
    }

    pub fn zs(&self) -> Result<&DMatrix<f64>> {
        match self {
            RiccatiValue::ZeroSum { p } => Ok(p),
            RiccatiValue::NonZeroSum { .. } => {
                Err(Error::ModeMismatch("expected the zero-sum solution (I2)".into()))
            }
        }
    }

    pub fn matrices(&self) -> Vec<&DMatrix<f64>> {
        match self {
            RiccatiValue::NonZeroSum { p_d, p_tau, p_a } => vec![p_d, p_tau, p_a],
            RiccatiValue::ZeroSum { p } => vec![p],
        }
    }

    fn from_matrices(mode: Interaction, mut m: Vec<DMatrix<f64>>) -> Self {
        match mode {
            Interaction::I1 => {
                let p_a = m.pop().unwrap();
                let p_tau = m.pop().unwrap();
                let p_d = m.pop().unwrap();
                RiccatiValue::NonZeroSum { p_d, p_tau, p_a }
            }
            Interaction::I2 => RiccatiValue::ZeroSum { p: m.pop().unwrap() },
        }
    }
}

/// Solution of the Riccati equations at every grid node.
#[derive(Debug, Clone)]
pub struct RiccatiSolution {
    pub grid: TimeGrid,
    pub mode: Interaction,
    nodes: Vec<RiccatiValue>,
}

impl RiccatiSolution {
    pub fn node(&self, k: usize) -> &RiccatiValue {
        &self.nodes[k]
    }

    pub fn nodes(&self) -> &[RiccatiValue] {
        &self.nodes
    }

    /// Value at time `t`: the stored node when `t` is on the grid (within
    /// `step / 2 * 1e-6`), otherwise linear interpolation.
    pub fn value_at(&self, t: f64) -> Result<RiccatiValue> {
        match self.grid.locate(t)? {
            Located::Node(k) => Ok(self.nodes[k].clone()),
            Located::Between(k, w) => {
                let lo = self.nodes[k].matrices();
                let hi = self.nodes[k + 1].matrices();
                let mixed = lo
                    .into_iter()
                    .zip(hi)
                    .map(|(a, b)| a * (1.0 - w) + b * w)
                    .collect();
                Ok(RiccatiValue::from_matrices(self.mode, mixed))
            }
        }
    }

    /// Time derivative `dP/dt` of the solved equation at a value.
    pub fn rhs(&self, mats: &GameMatrices, value: &RiccatiValue) -> Result<RiccatiValue> {
        let m: Vec<DMatrix<f64>> = value.matrices().into_iter().cloned().collect();
        let d = match self.mode {
            Interaction::I1 => rhs_nzs(mats, &m),
            Interaction::I2 => rhs_zs(mats, &m)?,
        };
        Ok(RiccatiValue::from_matrices(self.mode, d))
    }

    /// Writes one row per node: `t` followed by the row-major entries of
    /// each matrix.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let dim = self.nodes[0].matrices()[0].nrows();
        let names: &[&str] = match self.mode {
            Interaction::I1 => &["P_d", "P_tau", "P_a"],
            Interaction::I2 => &["P"],
        };
        let mut header = vec!["t".to_string()];
        for name in names {
            for r in 0..dim {
                for c in 0..dim {
                    header.push(format!("{name}[{r},{c}]"));
                }
            }
        }
        w.write_record(&header).map_err(csv_err)?;
        for (k, node) in self.nodes.iter().enumerate() {
            let mut row = vec![self.grid.time(k).to_string()];
            for m in node.matrices() {
                for r in 0..dim {
                    for c in 0..dim {
                        row.push(m[(r, c)].to_string());
                    }
                }
            }
            w.write_record(&row).map_err(csv_err)?;
        }
        w.flush()?;
        Ok(())
    }
}

pub(crate) fn csv_err(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

/// `dP/dt` for `(P_d, P_tau, P_a)`.
pub fn rhs_nzs(m: &GameMatrices, p: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    let (pd, pt, pa) = (&p[0], &p[1], &p[2]);
    let sd_pd = &m.s_d * pd;
    let st_pt = &m.s_tau * pt;
    let sa_pa = &m.s_a * pa;
    // Each equation is P_i (S_d P_d + S_t P_t + S_a P_a) plus P_j S_j P_i for
    // the two other players j.
    let sum = &sd_pd + &st_pt + &sa_pa;
    let dd = pd * &sum + pt * &m.s_tau * pd + pa * &m.s_a * pd - &m.q_d;
    let dt = pt * &sum + pd * &m.s_d * pt + pa * &m.s_a * pt - &m.q_tau;
    let da = pa * &sum + pd * &m.s_d * pa + pt * &m.s_tau * pa - &m.q_a;
    vec![dd, dt, da]
}

/// `dP/dt` for the zero-sum equation.
pub fn rhs_zs(m: &GameMatrices, p: &[DMatrix<f64>]) -> Result<Vec<DMatrix<f64>>> {
    let zs = m
        .zero_sum
        .as_ref()
        .ok_or_else(|| Error::ModeMismatch("zero-sum matrices are only built for I2".into()))?;
    let p = &p[0];
    Ok(vec![p * (&m.s_a - &zs.s_dtau) * p - &zs.q])
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let n = m.nrows();
    for r in 0..n {
        for c in r + 1..n {
            let v = 0.5 * (m[(r, c)] + m[(c, r)]);
            m[(r, c)] = v;
            m[(c, r)] = v;
        }
    }
}

fn axpy(x: &[DMatrix<f64>], h: f64, d: &[DMatrix<f64>]) -> Vec<DMatrix<f64>> {
    x.iter()
        .zip(d)
        .map(|(a, b)| {
            let mut s = a + b * h;
            symmetrize(&mut s);
            s
        })
        .collect()
}

/// Classical RK4 backward from the terminal value; `f` is `dP/dt`.
fn integrate_backward<F>(grid: TimeGrid, terminal: Vec<DMatrix<f64>>, f: F) -> Result<Vec<Vec<DMatrix<f64>>>>
where
    F: Fn(&[DMatrix<f64>]) -> Vec<DMatrix<f64>>,
{
    let h = grid.step;
    // In reversed time s = T - t the equation becomes dP/ds = -f(P).
    let g = |p: &[DMatrix<f64>]| -> Vec<DMatrix<f64>> { f(p).into_iter().map(|m| -m).collect() };
    let mut out = vec![Vec::new(); grid.len()];
    let mut p = terminal;
    out[grid.steps] = p.clone();
    for k in (0..grid.steps).rev() {
        let k1 = g(&p);
        let k2 = g(&axpy(&p, h / 2.0, &k1));
        let k3 = g(&axpy(&p, h / 2.0, &k2));
        let k4 = g(&axpy(&p, h, &k3));
        let next: Vec<DMatrix<f64>> = (0..p.len())
            .map(|i| {
                let mut m = &p[i] + (&k1[i] + &k2[i] * 2.0 + &k3[i] * 2.0 + &k4[i]) * (h / 6.0);
                symmetrize(&mut m);
                m
            })
            .collect();
        let magnitude = next
            .iter()
            .flat_map(|m| m.iter())
            .fold(0.0f64, |acc, &v| if v.is_finite() { acc.max(v.abs()) } else { f64::INFINITY });
        if magnitude > ESCAPE_THRESHOLD {
            return Err(Error::FiniteEscape {
                time: grid.time(k),
                magnitude,
            });
        }
        out[k] = next.clone();
        p = next;
    }
    Ok(out)
}

/// Coupled equations of the non-zero-sum game, `P_p(T) = F_p`.
pub fn solve_nzs(mats: &GameMatrices, grid: TimeGrid) -> Result<RiccatiSolution> {
    if mats.zero_sum.is_some() {
        return Err(Error::ModeMismatch("solve_nzs needs I1 matrices".into()));
    }
    let terminal = vec![mats.f_d.clone(), mats.f_tau.clone(), mats.f_a.clone()];
    let nodes = integrate_backward(grid, terminal, |p| rhs_nzs(mats, p))?
        .into_iter()
        .map(|m| RiccatiValue::from_matrices(Interaction::I1, m))
        .collect();
    Ok(RiccatiSolution {
        grid,
        mode: Interaction::I1,
        nodes,
    })
}

/// Single equation of the zero-sum game, `P(T) = F`.
pub fn solve_zs(mats: &GameMatrices, grid: TimeGrid) -> Result<RiccatiSolution> {
    let zs = mats
        .zero_sum
        .as_ref()
        .ok_or_else(|| Error::ModeMismatch("solve_zs needs I2 matrices".into()))?;
    let nodes = integrate_backward(grid, vec![zs.f.clone()], |p| {
        rhs_zs(mats, p).expect("zero-sum matrices present")
    })?
    .into_iter()
    .map(|m| RiccatiValue::from_matrices(Interaction::I2, m))
    .collect();
    Ok(RiccatiSolution {
        grid,
        mode: Interaction::I2,
        nodes,
    })
}

/// Dispatches on the interaction of the matrices.
pub fn solve(mats: &GameMatrices, grid: TimeGrid) -> Result<RiccatiSolution> {
    if mats.zero_sum.is_some() {
        solve_zs(mats, grid)
    } else {
        solve_nzs(mats, grid)
    }
}

/// Scalar reduction of the suicidal-attacker game to the target block.
///
/// `P_tau` restricted to the target is `[[k1, k2], [k2, k3]]` and `P_a`
/// restricted to the target is `[[k4, k5], [k5, k6]]`.
#[derive(Debug, Clone)]
pub struct SuicidalReducedSolution {
    pub grid: TimeGrid,
    pub r_tau: f64,
    pub r_a: f64,
    k: Vec<[f64; 6]>,
}

impl SuicidalReducedSolution {
    pub fn node(&self, k: usize) -> [f64; 6] {
        self.k[k]
    }

    pub fn nodes(&self) -> &[[f64; 6]] {
        &self.k
    }

    pub fn k1(&self, k: usize) -> f64 {
        self.k[k][0]
    }

    pub fn k4(&self, k: usize) -> f64 {
        self.k[k][3]
    }

    /// `(u_a, u_tau)` at node `k` for the target displacement `z_tau`.
    pub fn controls(&self, k: usize, z_tau: [f64; 2]) -> ([f64; 2], [f64; 2]) {
        let ua = self.k4(k) / self.r_a;
        let ut = -self.k1(k) / self.r_tau;
        ([ua * z_tau[0], ua * z_tau[1]], [ut * z_tau[0], ut * z_tau[1]])
    }
}

/// `dk/dt` of the six scalar equations.
pub fn suicidal_rhs(q_tau: f64, q_atau: f64, r_tau: f64, r_a: f64, k: &[f64; 6]) -> [f64; 6] {
    let [k1, k2, k3, k4, k5, k6] = *k;
    let (it, ia) = (1.0 / r_tau, 1.0 / r_a);
    [
        q_tau + it * (k1 * k1 + k2 * k2) + 2.0 * ia * (k1 * k4 + k2 * k5),
        it * k2 * (k1 + k3) + ia * (k2 * (k4 + k6) + k5 * (k1 + k3)),
        q_tau + it * (k2 * k2 + k3 * k3) + 2.0 * ia * (k2 * k5 + k3 * k6),
        -q_atau + ia * (k4 * k4 + k5 * k5) + 2.0 * it * (k1 * k4 + k2 * k5),
        ia * k5 * (k4 + k6) + it * (k2 * (k4 + k6) + k5 * (k1 + k3)),
        -q_atau + ia * (k5 * k5 + k6 * k6) + 2.0 * it * (k2 * k5 + k3 * k6),
    ]
}

pub fn solve_suicidal_reduced(cfg: &ScenarioConfig, grid: TimeGrid) -> Result<SuicidalReducedSolution> {
    if cfg.lambda != 0 {
        return Err(Error::config("lambda", "the reduced oracle needs a suicidal attacker (lambda = 0)"));
    }
    let w = cfg.weights[cfg.n];
    let r_tau = cfg.control_penalties[cfg.n];
    let r_a = cfg.control_penalties[cfg.n + 1];
    let f = |k: &[f64; 6]| suicidal_rhs(w.q_pa, w.q_ap, r_tau, r_a, k);
    let h = grid.step;
    let step = |k: &[f64; 6], d: &[f64; 6], s: f64| -> [f64; 6] { std::array::from_fn(|i| k[i] - s * d[i]) };

    let mut out = vec![[0.0; 6]; grid.len()];
    let mut k = [-w.f_pa, 0.0, -w.f_pa, w.f_ap, 0.0, w.f_ap];
    out[grid.steps] = k;
    for node in (0..grid.steps).rev() {
        let a = f(&k);
        let b = f(&step(&k, &a, h / 2.0));
        let c = f(&step(&k, &b, h / 2.0));
        let d = f(&step(&k, &c, h));
        k = std::array::from_fn(|i| k[i] - h / 6.0 * (a[i] + 2.0 * b[i] + 2.0 * c[i] + d[i]));
        let magnitude = k.iter().fold(0.0f64, |m, v| if v.is_finite() { m.max(v.abs()) } else { f64::INFINITY });
        if magnitude > ESCAPE_THRESHOLD {
            return Err(Error::FiniteEscape {
                time: grid.time(node),
                magnitude,
            });
        }
        out[node] = k;
    }
    Ok(SuicidalReducedSolution {
        grid,
        r_tau,
        r_a,
        k: out,
    })
}
