//! Python bindings. Configs and trajectories are classes; reports come back
//! as plain dicts.

use std::fs::File;
use std::io::BufWriter;
use std::path::PathBuf;

use pyo3::create_exception;
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyValueError};
use pyo3::prelude::*;
use serde_json::Value;

use tadsim_core::riccati::solve;
use tadsim_core::scenarios;
use tadsim_core::{
    build_matrices, OptimizerSettings, PlayerId, Profile, Radius, TimeGrid, TrajectoryLog,
};

create_exception!(tadsim, ConfigError, PyValueError, "Invalid scenario or argument.");
create_exception!(tadsim, NumericalError, PyArithmeticError, "Finite escape or optimizer failure.");

fn err(e: tadsim_core::Error) -> PyErr {
    match e {
        tadsim_core::Error::Io(io) => PyOSError::new_err(io.to_string()),
        e if e.is_numerical() => NumericalError::new_err(e.to_string()),
        e => ConfigError::new_err(e.to_string()),
    }
}

fn json<'py>(py: Python<'py>, v: &Value) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (v.to_string(),))
}

fn to_value<T: serde::Serialize>(v: &T) -> Value {
    serde_json::to_value(v).expect("serializes")
}

fn player(s: &str) -> PyResult<PlayerId> {
    s.parse().map_err(err)
}

fn roster_index(s: &str, n: usize) -> PyResult<usize> {
    match player(s)? {
        PlayerId::Defender(i) if i > n => Err(ConfigError::new_err(format!("no player d{i} in a game with {n} defenders"))),
        p => Ok(p.roster_index(n)),
    }
}

/// `None` or an infinite value means unbounded.
fn radius(r: Option<f64>) -> Radius {
    match r {
        Some(v) if v.is_finite() => Radius::Finite(v),
        _ => Radius::Unbounded,
    }
}

fn settings(strict: bool) -> OptimizerSettings {
    OptimizerSettings {
        strict,
        ..OptimizerSettings::default()
    }
}

fn create(path: &PathBuf) -> PyResult<BufWriter<File>> {
    File::create(path)
        .map(BufWriter::new)
        .map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))
}

#[pyclass(frozen, skip_from_py_object, name = "ScenarioConfig", module = "tadsim")]
#[derive(Clone)]
pub struct PyScenarioConfig {
    pub inner: tadsim_core::ScenarioConfig,
}

#[pymethods]
impl PyScenarioConfig {
    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        tadsim_core::ScenarioConfig::from_json(text)
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[staticmethod]
    fn from_file(path: PathBuf) -> PyResult<Self> {
        let text = std::fs::read_to_string(&path)
            .map_err(|e| PyOSError::new_err(format!("{}: {e}", path.display())))?;
        Self::from_json(&text)
    }

    /// One of the configurations shipped with the library.
    #[staticmethod]
    fn shipped(name: &str) -> PyResult<Self> {
        scenarios::by_name(name).map(|inner| Self { inner }).map_err(err)
    }

    /// Effective configuration with all defaults written out.
    fn to_json(&self) -> String {
        self.inner.to_json_value().to_string()
    }

    #[pyo3(signature = (player, radius=None))]
    fn with_visibility_radius(&self, player: &str, radius: Option<f64>) -> PyResult<Self> {
        let p = self::player(player)?;
        self.inner
            .with_visibility_radius(p, self::radius(radius))
            .map(|inner| Self { inner })
            .map_err(err)
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n
    }

    #[getter]
    fn interaction(&self) -> String {
        format!("{:?}", self.inner.interaction)
    }

    #[getter]
    fn horizon(&self) -> f64 {
        self.inner.horizon
    }

    #[getter]
    fn step(&self) -> f64 {
        self.inner.step
    }

    #[getter]
    fn suicidal(&self) -> bool {
        self.inner.lambda == 0
    }

    #[getter]
    fn players(&self) -> Vec<String> {
        PlayerId::roster(self.inner.n).map(|p| p.to_string()).collect()
    }

    fn position(&self, player: &str) -> PyResult<(f64, f64)> {
        let [x, y] = self.inner.initial_positions[roster_index(player, self.inner.n)?];
        Ok((x, y))
    }

    fn __repr__(&self) -> String {
        format!(
            "ScenarioConfig({:?}, n={}, horizon={}, step={})",
            self.inner.interaction, self.inner.n, self.inner.horizon, self.inner.step
        )
    }
}

#[pyclass(frozen, name = "Trajectory", module = "tadsim")]
pub struct PyTrajectory {
    log: TrajectoryLog,
    cfg: tadsim_core::ScenarioConfig,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.log.times.clone()
    }

    /// Positions of one player at every node.
    fn positions(&self, player: &str) -> PyResult<Vec<(f64, f64)>> {
        let i = roster_index(player, self.log.n)?;
        Ok(self.log.positions.iter().map(|row| (row[i][0], row[i][1])).collect())
    }

    /// Control of one player on every interval.
    fn controls(&self, player: &str) -> PyResult<Vec<(f64, f64)>> {
        roster_index(player, self.log.n)?;
        let p = self::player(player)?;
        Ok(self
            .log
            .controls
            .iter()
            .map(|u| {
                let [x, y] = u.of(p);
                (x, y)
            })
            .collect())
    }

    #[getter]
    fn termination<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json(py, &to_value(&self.log.termination))
    }

    #[getter]
    fn events<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json(py, &to_value(&self.log.events))
    }

    #[getter]
    fn diagnostics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json(py, &to_value(&self.log.diagnostics))
    }

    /// Config echo, events, termination and diagnostics, as written to events.json.
    fn sidecar<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        json(py, &self.log.sidecar(&self.cfg))
    }

    fn write_csv(&self, path: PathBuf) -> PyResult<()> {
        self.log.write_csv(create(&path)?).map_err(err)
    }

    /// Writes trajectory.csv, events.json and diagnostics.csv into `directory`.
    fn write_artifacts(&self, directory: PathBuf) -> PyResult<()> {
        std::fs::create_dir_all(&directory).map_err(|e| PyOSError::new_err(e.to_string()))?;
        self.log.write_csv(create(&directory.join("trajectory.csv"))?).map_err(err)?;
        let text = serde_json::to_string_pretty(&self.log.sidecar(&self.cfg)).expect("serializes");
        std::fs::write(directory.join("events.json"), text + "\n").map_err(|e| PyOSError::new_err(e.to_string()))?;
        self.log
            .write_diagnostics_csv(create(&directory.join("diagnostics.csv"))?)
            .map_err(err)
    }

    fn __len__(&self) -> usize {
        self.log.times.len()
    }

    fn __repr__(&self) -> String {
        format!("Trajectory(nodes={}, termination={:?} at {})", self.log.times.len(), self.log.termination.kind, self.log.termination.time)
    }
}

#[pyfunction]
fn scenario_names() -> Vec<&'static str> {
    scenarios::names().collect()
}

/// Simulates a scenario. `profile` is "complete" or "limited".
#[pyfunction]
#[pyo3(signature = (config, profile="limited", strict=false))]
fn run(py: Python<'_>, config: &PyScenarioConfig, profile: &str, strict: bool) -> PyResult<PyTrajectory> {
    let profile: Profile = profile.parse().map_err(err)?;
    let cfg = config.inner.clone();
    let log = py
        .detach(|| tadsim_core::run_with(&cfg, profile, &settings(strict)))
        .map_err(err)?;
    Ok(PyTrajectory { log, cfg })
}

/// Two limited runs differing in one visibility radius. Returns the delay
/// report and both trajectories.
#[pyfunction]
#[pyo3(signature = (config, player, radius=None))]
fn paired_delay<'py>(
    py: Python<'py>,
    config: &PyScenarioConfig,
    player: &str,
    radius: Option<f64>,
) -> PyResult<(Bound<'py, PyAny>, PyTrajectory, PyTrajectory)> {
    let p = self::player(player)?;
    let alt = self::radius(radius);
    let cfg = config.inner.clone();
    let other = cfg.with_visibility_radius(p, alt).map_err(err)?;
    let (report, a, b) = py
        .detach(|| tadsim_core::run_paired_delay(&cfg, p, alt, &OptimizerSettings::default()))
        .map_err(err)?;
    Ok((
        json(py, &to_value(&report))?,
        PyTrajectory { log: a, cfg },
        PyTrajectory { log: b, cfg: other },
    ))
}

#[pyfunction]
fn suicidal_check<'py>(py: Python<'py>, config: &PyScenarioConfig) -> PyResult<Bound<'py, PyAny>> {
    let cfg = config.inner.clone();
    let report = py
        .detach(|| tadsim_core::run_suicidal_check(&cfg, &OptimizerSettings::default()))
        .map_err(err)?;
    json(py, &to_value(&report))
}

/// Writes `t` and every Riccati matrix entry per grid node.
#[pyfunction]
fn write_riccati_csv(config: &PyScenarioConfig, path: PathBuf) -> PyResult<()> {
    let mats = build_matrices(&config.inner).map_err(err)?;
    let sol = solve(&mats, TimeGrid::from_config(&config.inner)).map_err(err)?;
    sol.write_csv(create(&path)?).map_err(err)
}

#[pyfunction]
fn regression_manifest<'py>(py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
    json(py, &to_value(&scenarios::manifest()))
}

/// Runs one named regression case and compares it with the manifest.
#[pyfunction]
fn run_regression_case<'py>(py: Python<'py>, name: &str) -> PyResult<Bound<'py, PyAny>> {
    let manifest = scenarios::manifest();
    let case = manifest
        .cases
        .iter()
        .find(|c| c.name == name)
        .ok_or_else(|| ConfigError::new_err(format!("unknown regression case `{name}`")))?;
    let outcome = py
        .detach(|| scenarios::run_case(case, manifest.tolerance, &OptimizerSettings::default()))
        .map_err(err)?;
    let mut v = to_value(&outcome);
    v["passed"] = Value::Bool(outcome.passed());
    json(py, &v)
}

#[pymodule]
pub fn tadsim(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyScenarioConfig>()?;
    m.add_class::<PyTrajectory>()?;
    m.add("ConfigError", m.py().get_type::<ConfigError>())?;
    m.add("NumericalError", m.py().get_type::<NumericalError>())?;
    m.add_function(wrap_pyfunction!(scenario_names, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(paired_delay, m)?)?;
    m.add_function(wrap_pyfunction!(suicidal_check, m)?)?;
    m.add_function(wrap_pyfunction!(write_riccati_csv, m)?)?;
    m.add_function(wrap_pyfunction!(regression_manifest, m)?)?;
    m.add_function(wrap_pyfunction!(run_regression_case, m)?)?;
    Ok(())
}
