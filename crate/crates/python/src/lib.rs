//! Python bindings. Results come back as plain lists, tuples and dicts.

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;
use pyo3::types::PyDict;

use coopnet::dense::{self, DenseParams, RingDistribution, RingModel};
use coopnet::experiments::{self, NormalizedEnergyReport};
use coopnet::{Architecture, Strategy};

fn value_error(e: impl std::fmt::Display) -> PyErr {
    PyValueError::new_err(e.to_string())
}

fn parse<T: std::str::FromStr>(s: &str) -> PyResult<T>
where
    T::Err: std::fmt::Display,
{
    s.parse::<T>().map_err(value_error)
}

/// Simulation settings. Starts from the desk-scale defaults.
#[pyclass(name = "SimConfig", from_py_object)]
#[derive(Clone)]
struct PySimConfig {
    inner: coopnet::SimConfig,
}

#[pymethods]
impl PySimConfig {
    #[new]
    #[pyo3(signature = (arch = "adhoc", strategy = "def", **overrides))]
    fn new(arch: &str, strategy: &str, overrides: Option<&Bound<'_, PyDict>>) -> PyResult<Self> {
        let mut cfg = Self {
            inner: coopnet::SimConfig::desk(parse(arch)?, parse(strategy)?),
        };
        if let Some(kw) = overrides {
            for (k, v) in kw.iter() {
                cfg.set(&k.extract::<String>()?, &v.str()?.to_string())?;
            }
        }
        Ok(cfg)
    }

    /// Applies one `key = value` setting, using the config-file keys.
    fn set(&mut self, key: &str, value: &str) -> PyResult<()> {
        self.inner.set(key, value).map_err(value_error)
    }

    fn validate(&self) -> PyResult<()> {
        self.inner.validate().map_err(value_error)
    }

    fn to_json(&self) -> String {
        serde_json::to_string(&self.inner).expect("config serializes")
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m
    }
    #[getter]
    fn nu(&self) -> f64 {
        self.inner.nu
    }
    #[getter]
    fn alpha(&self) -> f64 {
        self.inner.path_loss_exp
    }
    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }
    #[getter]
    fn architecture(&self) -> String {
        self.inner.architecture.to_string()
    }
    #[getter]
    fn strategy(&self) -> String {
        self.inner.strategy.to_string()
    }

    fn __repr__(&self) -> String {
        format!("SimConfig({})", self.to_json())
    }
}

/// Per-node energies and cooperator counts of a finished run.
#[pyclass(name = "SimulationResult")]
struct PySimulationResult {
    inner: coopnet::SimulationResult,
}

#[pymethods]
impl PySimulationResult {
    fn mean_energy(&self) -> f64 {
        self.inner.mean_energy()
    }
    fn std_energy(&self) -> f64 {
        self.inner.std_energy()
    }
    fn coop_fraction_series(&self) -> Vec<f64> {
        self.inner.coop_fraction_series()
    }
    fn final_fractions(&self) -> Vec<f64> {
        self.inner.final_fractions()
    }
    fn median_final_fraction(&self) -> f64 {
        self.inner.median_final_fraction()
    }
    /// (radius, energy) for every node of every replication.
    fn node_samples(&self) -> Vec<(f64, f64)> {
        self.inner.node_samples().collect()
    }
    #[pyo3(signature = (bins = 10))]
    fn radial_profile(&self, bins: usize) -> Vec<(f64, f64)> {
        self.inner.radial_profile(bins)
    }
    #[getter]
    fn replications(&self) -> usize {
        self.inner.replications.len()
    }
}

fn report_dict<'py>(py: Python<'py>, r: &NormalizedEnergyReport) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("strategy", r.strategy.to_string())?;
    d.set_item("mean_energy", r.mean_energy)?;
    d.set_item("std_energy", r.std_energy)?;
    d.set_item("per_radius_bins", r.per_radius_bins.clone())?;
    d.set_item("coop_fraction_series", r.coop_fraction_series.clone())?;
    Ok(d)
}

#[pyfunction]
fn run_simulation(py: Python<'_>, config: &PySimConfig) -> PyResult<PySimulationResult> {
    let cfg = config.inner.clone();
    let inner = py
        .detach(|| coopnet::run_simulation(&cfg))
        .map_err(value_error)?;
    Ok(PySimulationResult { inner })
}

/// Energies normalised by DEF; `strategies` must include "DEF".
#[pyfunction]
fn run_table<'py>(
    py: Python<'py>,
    arch: &str,
    strategies: Vec<String>,
    config: &PySimConfig,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let arch: Architecture = parse(arch)?;
    let strategies = strategies
        .iter()
        .map(|s| parse::<Strategy>(s))
        .collect::<PyResult<Vec<_>>>()?;
    let cfg = config.inner.clone();
    let reports = py
        .detach(|| experiments::run_table(arch, &strategies, &cfg))
        .map_err(value_error)?;
    reports.iter().map(|r| report_dict(py, r)).collect()
}

#[pyfunction]
#[pyo3(signature = (arch, strategy, config, grid = None))]
fn sweep_nu(
    py: Python<'_>,
    arch: &str,
    strategy: &str,
    config: &PySimConfig,
    grid: Option<Vec<f64>>,
) -> PyResult<Vec<(f64, f64)>> {
    let (arch, strategy) = (parse(arch)?, parse(strategy)?);
    let grid = grid.unwrap_or_else(experiments::default_grid);
    let cfg = config.inner.clone();
    py.detach(|| experiments::sweep_nu(arch, strategy, &grid, &cfg))
        .map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (config, grid = None))]
fn sweep_initial_cooperator(
    py: Python<'_>,
    config: &PySimConfig,
    grid: Option<Vec<f64>>,
) -> PyResult<Vec<(f64, f64)>> {
    let grid = grid.unwrap_or_else(experiments::default_grid);
    let cfg = config.inner.clone();
    py.detach(|| experiments::sweep_initial_cooperator(&grid, &cfg))
        .map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (config, grid = None))]
fn central_table<'py>(
    py: Python<'py>,
    config: &PySimConfig,
    grid: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyDict>> {
    let grid = grid.unwrap_or_else(experiments::default_grid);
    let cfg = config.inner.clone();
    let table = py
        .detach(|| experiments::central_table(&cfg, &grid))
        .map_err(value_error)?;
    let d = PyDict::new(py);
    let reports = table
        .reports
        .iter()
        .map(|r| report_dict(py, r))
        .collect::<PyResult<Vec<_>>>()?;
    d.set_item("reports", reports)?;
    d.set_item("tft_r0_sweep", table.tft_r0_sweep)?;
    d.set_item("tft_best_r0", table.tft_best_r0)?;
    d.set_item("minimal_prediction", table.minimal_prediction)?;
    Ok(d)
}

#[pyfunction]
fn cooperation_dynamics<'py>(
    py: Python<'py>,
    strategy: &str,
    arch: &str,
    config: &PySimConfig,
) -> PyResult<Bound<'py, PyDict>> {
    let (strategy, arch) = (parse(strategy)?, parse(arch)?);
    let cfg = config.inner.clone();
    let report = py
        .detach(|| experiments::cooperation_dynamics(strategy, arch, &cfg))
        .map_err(value_error)?;
    let d = PyDict::new(py);
    d.set_item("series", report.series.clone())?;
    d.set_item("final_fractions", report.final_fractions.clone())?;
    d.set_item("median_final", report.median_final())?;
    Ok(d)
}

#[pyfunction]
fn q_value(x: f64, y: f64, alpha: f64) -> PyResult<f64> {
    dense::q_value(x, y, alpha).map_err(value_error)
}

/// Returns (y*, q(x)).
#[pyfunction]
fn q_min(x: f64, alpha: f64) -> PyResult<(f64, f64)> {
    dense::q_min(x, alpha).map_err(value_error)
}

#[pyfunction]
#[pyo3(signature = (radius, alpha, k = 1.0, closed_form = false))]
fn minimal_total_energy(radius: f64, alpha: f64, k: f64, closed_form: bool) -> PyResult<f64> {
    let p = DenseParams::new(radius, alpha, k).map_err(value_error)?;
    if closed_form {
        dense::minimal_total_energy_closed_form(&p)
    } else {
        dense::minimal_total_energy(&p)
    }
    .map_err(value_error)
}

/// Per-ring energies for a lower-triangular distribution `rows`.
#[pyfunction]
fn ring_energy_profile(radius: f64, alpha: f64, rows: Vec<Vec<f64>>) -> PyResult<Vec<f64>> {
    let model = RingModel::for_radius(radius, rows.len()).map_err(value_error)?;
    let dist = RingDistribution::new(rows).map_err(value_error)?;
    dense::ring_energy_profile(&model, &dist, alpha).map_err(value_error)
}

#[pyfunction]
fn min_total_assignment(radius: f64, rings: usize, alpha: f64) -> PyResult<Vec<Vec<f64>>> {
    let model = RingModel::for_radius(radius, rings).map_err(value_error)?;
    Ok(dense::min_total_assignment(&model, alpha).rows().to_vec())
}

#[pyfunction]
#[pyo3(signature = (radius, rings, alpha, max_iters = 20_000, tol = 1e-6))]
fn balance_optimize<'py>(
    py: Python<'py>,
    radius: f64,
    rings: usize,
    alpha: f64,
    max_iters: usize,
    tol: f64,
) -> PyResult<Bound<'py, PyDict>> {
    if alpha <= 1.0 {
        return Err(value_error(format!("alpha must exceed 1, got {alpha}")));
    }
    let model = RingModel::for_radius(radius, rings).map_err(value_error)?;
    let out = py.detach(|| dense::balance_optimize(&model, alpha, max_iters, tol));
    let d = PyDict::new(py);
    d.set_item("distribution", out.distribution.rows().to_vec())?;
    d.set_item("variance", out.variance)?;
    d.set_item("mean", out.mean)?;
    d.set_item("iterations", out.iterations)?;
    d.set_item("converged", out.converged)?;
    d.set_item("projected_gradient_norm", out.projected_gradient_norm)?;
    d.set_item("history", out.history)?;
    Ok(d)
}

#[pymodule(name = "coopnet")]
fn coopnet_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PySimConfig>()?;
    m.add_class::<PySimulationResult>()?;
    m.add_function(wrap_pyfunction!(run_simulation, m)?)?;
    m.add_function(wrap_pyfunction!(run_table, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_nu, m)?)?;
    m.add_function(wrap_pyfunction!(sweep_initial_cooperator, m)?)?;
    m.add_function(wrap_pyfunction!(central_table, m)?)?;
    m.add_function(wrap_pyfunction!(cooperation_dynamics, m)?)?;
    m.add_function(wrap_pyfunction!(q_value, m)?)?;
    m.add_function(wrap_pyfunction!(q_min, m)?)?;
    m.add_function(wrap_pyfunction!(minimal_total_energy, m)?)?;
    m.add_function(wrap_pyfunction!(ring_energy_profile, m)?)?;
    m.add_function(wrap_pyfunction!(min_total_assignment, m)?)?;
    m.add_function(wrap_pyfunction!(balance_optimize, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
