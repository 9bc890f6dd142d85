//! Python bindings: scenario loading, scheme runs and metric evaluation.

use std::path::PathBuf;

use nalgebra::Vector2;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use mabeam::metrics::{eval_pattern, evaluate};
use mabeam::model::Trajectory;
use mabeam::optimizer::{run, Termination};
use mabeam::{Error, EvaluationReport, Preset, RunOutcome, ScenarioConfig, Scheme};

fn to_py(e: Error) -> PyErr {
    match e {
        Error::Config(_) | Error::Domain(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

/// A validated scenario with its grid sets and discrete problem.
#[pyclass(frozen, module = "mabeam_py")]
struct Scenario {
    inner: mabeam::Scenario,
}

#[pymethods]
impl Scenario {
    /// Built-in scenario, `"paper"` or `"desk"`.
    #[staticmethod]
    fn preset(py: Python<'_>, name: &str) -> PyResult<Self> {
        let cfg = ScenarioConfig::preset(name.parse::<Preset>().map_err(to_py)?);
        Self::build(py, cfg)
    }

    #[staticmethod]
    fn load(py: Python<'_>, path: PathBuf) -> PyResult<Self> {
        Self::build(py, ScenarioConfig::load(&path).map_err(to_py)?)
    }

    #[staticmethod]
    fn from_toml(py: Python<'_>, text: &str) -> PyResult<Self> {
        Self::build(py, ScenarioConfig::from_toml_str(text).map_err(to_py)?)
    }

    /// The resolved configuration in scenario-file syntax.
    fn to_toml(&self) -> String {
        self.inner.config.to_toml_string()
    }

    #[getter]
    fn slots(&self) -> usize {
        self.inner.problem.slots()
    }

    #[getter]
    fn antennas(&self) -> usize {
        self.inner.problem.antennas
    }

    /// Carrier wavelength [m].
    #[getter]
    fn wavelength(&self) -> f64 {
        self.inner.wavelength
    }

    /// Slot sample times [s].
    #[getter]
    fn times(&self) -> Vec<f64> {
        self.inner.time_grid.times.clone()
    }

    /// `(T_s, T)` in seconds.
    fn orbital_period(&self) -> (f64, f64) {
        self.inner.orbit.orbital_period()
    }

    fn visibility_half_angle_deg(&self) -> f64 {
        self.inner.orbit.visibility_half_angle().to_degrees()
    }

    #[getter]
    fn gain_threshold(&self) -> f64 {
        self.inner.config.gain_threshold()
    }

    /// Number of coverage points and interference points per slot.
    fn set_sizes(&self) -> (usize, Vec<usize>) {
        let sets = &self.inner.grid_sets;
        (sets.coverage_points.len(), sets.interference_points.iter().map(Vec::len).collect())
    }

    /// Optimizes with `scheme`; the GIL is released while running.
    fn run(&self, py: Python<'_>, scheme: &str) -> PyResult<RunResult> {
        let scheme = scheme.parse::<Scheme>().map_err(to_py)?;
        let cfg = self.inner.config.optimizer_config(scheme);
        let problem = &self.inner.problem;
        let (outcome, report) = py
            .detach(|| run(problem, &cfg).map(|o| {
                let rep = evaluate(problem, &o.trajectory);
                (o, rep)
            }))
            .map_err(to_py)?;
        Ok(RunResult { scheme, outcome, report, wavelength: self.inner.wavelength })
    }

    /// Metrics of an arbitrary trajectory given per-slot positions [m] and phases [rad].
    fn evaluate(&self, positions: Vec<Vec<(f64, f64)>>, phases: Vec<Vec<f64>>) -> PyResult<Report> {
        let traj = self.trajectory(positions, phases)?;
        Ok(Report { inner: evaluate(&self.inner.problem, &traj) })
    }

    /// `(theta, phi, gain, tag)` over the angular grid for a 0-based slot.
    fn pattern(&self, positions: Vec<Vec<(f64, f64)>>, phases: Vec<Vec<f64>>, slot: usize) -> PyResult<Vec<(f64, f64, f64, &'static str)>> {
        let traj = self.trajectory(positions, phases)?;
        let (samples, _) = eval_pattern(&self.inner, &traj, slot).map_err(to_py)?;
        Ok(samples.iter().map(|s| (s.point.elevation, s.point.azimuth, s.gain, s.tag.as_str())).collect())
    }

    fn __repr__(&self) -> String {
        format!("Scenario(slots={}, antennas={})", self.slots(), self.antennas())
    }
}

impl Scenario {
    fn build(py: Python<'_>, cfg: ScenarioConfig) -> PyResult<Self> {
        let inner = py.detach(|| mabeam::Scenario::build(&cfg)).map_err(to_py)?;
        Ok(Self { inner })
    }

    fn trajectory(&self, positions: Vec<Vec<(f64, f64)>>, phases: Vec<Vec<f64>>) -> PyResult<Trajectory> {
        let (m, n) = (self.slots(), self.antennas());
        let shaped = positions.len() == m
            && phases.len() == m
            && positions.iter().all(|p| p.len() == n)
            && phases.iter().all(|p| p.len() == n);
        if !shaped {
            return Err(PyValueError::new_err(format!("positions and phases must be {m} slots of {n} antennas")));
        }
        let lambda = self.inner.wavelength;
        let positions = positions
            .into_iter()
            .map(|slot| slot.into_iter().map(|(x, y)| Vector2::new(x / lambda, y / lambda)).collect())
            .collect();
        Ok(Trajectory { positions, phases })
    }
}

/// Channel gains, leakage and SLR of a trajectory.
#[pyclass(frozen, module = "mabeam_py")]
struct Report {
    inner: EvaluationReport,
}

#[pymethods]
impl Report {
    #[getter]
    fn gains(&self) -> Vec<f64> {
        self.inner.gains.clone()
    }

    #[getter]
    fn leakages(&self) -> Vec<f64> {
        self.inner.leakages.clone()
    }

    #[getter]
    fn leakage(&self) -> f64 {
        self.inner.leakage
    }

    #[getter]
    fn average_gain(&self) -> f64 {
        self.inner.average_gain
    }

    #[getter]
    fn slr(&self) -> f64 {
        self.inner.slr
    }

    #[getter]
    fn slr_db(&self) -> f64 {
        self.inner.slr_db
    }
}

/// Trajectory, iteration log and final metrics of one scheme.
#[pyclass(frozen, module = "mabeam_py")]
struct RunResult {
    scheme: Scheme,
    outcome: RunOutcome,
    report: EvaluationReport,
    wavelength: f64,
}

#[pymethods]
impl RunResult {
    #[getter]
    fn scheme(&self) -> &'static str {
        self.scheme.name()
    }

    #[getter]
    fn termination(&self) -> String {
        self.outcome.log.termination.to_string()
    }

    #[getter]
    fn aborted(&self) -> bool {
        matches!(self.outcome.log.termination, Termination::Aborted(_))
    }

    #[getter]
    fn iterations(&self) -> usize {
        self.outcome.log.iterations()
    }

    /// Leakage after each iteration, starting with the initial point.
    #[getter]
    fn leakage_history(&self) -> Vec<f64> {
        self.outcome.log.records.iter().map(|r| r.leakage).collect()
    }

    #[getter]
    fn report(&self) -> Report {
        Report { inner: self.report.clone() }
    }

    /// Per-slot antenna positions [m].
    #[getter]
    fn positions(&self) -> Vec<Vec<(f64, f64)>> {
        let l = self.wavelength;
        self.outcome.trajectory.positions.iter().map(|s| s.iter().map(|q| (q.x * l, q.y * l)).collect()).collect()
    }

    /// Per-slot weight phases [rad].
    #[getter]
    fn phases(&self) -> Vec<Vec<f64>> {
        self.outcome.trajectory.phases.clone()
    }

    fn __repr__(&self) -> String {
        format!(
            "RunResult(scheme={}, termination={}, leakage={:.6}, slr_db={:.4})",
            self.scheme,
            self.outcome.log.termination,
            self.report.leakage,
            self.report.slr_db
        )
    }
}

/// Names accepted by `Scenario.run`.
#[pyfunction]
fn schemes() -> Vec<&'static str> {
    Scheme::ALL.iter().map(Scheme::name).collect()
}

#[pymodule]
fn mabeam_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Scenario>()?;
    m.add_class::<Report>()?;
    m.add_class::<RunResult>()?;
    m.add_function(wrap_pyfunction!(schemes, m)?)?;
    Ok(())
}
