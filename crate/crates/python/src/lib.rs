//! Python bindings: Le Cam predictions, configuration, and scenario runs.

use std::collections::BTreeMap;
use std::path::PathBuf;

use pyo3::exceptions::PyValueError;
use pyo3::prelude::*;

use ntlab::harness::output::{summary_csv, summary_table};
use ntlab::harness::{self, ScenarioRun, SimulationConfig};
use ntlab::lecam::{self, LeCamPrediction};

fn err<E: std::fmt::Display>(e: E) -> PyErr {
    PyValueError::new_err(e.to_string())
}

/// Power of the most powerful level-`alpha` test at local alternative `kappa`.
#[pyfunction]
#[pyo3(signature = (kappa, alpha = 0.05))]
fn np_power(kappa: f64, alpha: f64) -> PyResult<f64> {
    lecam::np_power(kappa, alpha).map_err(err)
}

/// Prediction table over `kappas`, as printed by `ntlab predict`.
#[pyfunction]
#[pyo3(signature = (sigma2, omega2, rho, kappas, alpha = 0.05))]
fn prediction_table(sigma2: f64, omega2: f64, rho: f64, kappas: Vec<f64>, alpha: f64) -> PyResult<String> {
    let base = LeCamPrediction::new(sigma2, omega2, rho, 0.0).map_err(err)?;
    lecam::prediction_table(&base, &kappas, alpha).map_err(err)
}

#[pyclass(name = "LeCamPrediction", frozen)]
struct PyPrediction(LeCamPrediction);

#[pymethods]
impl PyPrediction {
    #[new]
    fn new(sigma2: f64, omega2: f64, rho: f64, kappa: f64) -> PyResult<Self> {
        LeCamPrediction::new(sigma2, omega2, rho, kappa).map(Self).map_err(err)
    }

    fn with_kappa(&self, kappa: f64) -> PyResult<Self> {
        self.0.with_kappa(kappa).map(Self).map_err(err)
    }

    fn mse_efficient(&self) -> f64 {
        self.0.mse_efficient()
    }

    fn mse_aipw(&self) -> f64 {
        self.0.mse_aipw()
    }

    fn shift(&self) -> f64 {
        lecam::predict_shift(&self.0)
    }

    fn crossover_kappa(&self) -> PyResult<f64> {
        lecam::mse_crossover_kappa(&self.0).map_err(err)
    }

    fn __repr__(&self) -> String {
        format!(
            "LeCamPrediction(sigma2={}, omega2={}, rho={}, kappa={})",
            self.0.sigma2(),
            self.0.omega2(),
            self.0.rho(),
            self.0.kappa()
        )
    }
}

/// A validated simulation configuration.
#[pyclass(name = "Config", skip_from_py_object)]
#[derive(Clone)]
struct PyConfig(SimulationConfig);

#[pymethods]
impl PyConfig {
    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        SimulationConfig::parse(text).map(Self).map_err(err)
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        SimulationConfig::load(&path).map(Self).map_err(err)
    }

    fn to_toml(&self) -> PyResult<String> {
        self.0.to_toml().map_err(err)
    }

    fn sha256(&self) -> PyResult<String> {
        self.0.hash().map_err(err)
    }

    #[getter]
    fn replicates(&self) -> usize {
        self.0.replicates
    }

    #[setter]
    fn set_replicates(&mut self, v: usize) {
        self.0.replicates = v;
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.0.seed
    }

    #[setter]
    fn set_seed(&mut self, v: u64) {
        self.0.seed = v;
    }

    #[getter]
    fn output_dir(&self) -> PathBuf {
        self.0.output_dir.clone()
    }

    #[setter]
    fn set_output_dir(&mut self, v: PathBuf) {
        self.0.output_dir = v;
    }

    /// Runs the replicates in memory.
    fn simulate(&self, py: Python<'_>) -> PyResult<PyRun> {
        let cfg = self.0.clone();
        py.detach(move || harness::simulate(&cfg)).map(PyRun).map_err(err)
    }

    /// Runs and writes the output directory; returns the written files.
    fn run(&self, py: Python<'_>) -> PyResult<(Vec<PathBuf>, bool)> {
        let cfg = self.0.clone();
        let report = py.detach(move || harness::run(&cfg)).map_err(err)?;
        let degraded = report.degraded();
        Ok((report.files, degraded))
    }
}

/// Summaries of a completed run.
#[pyclass(name = "Run", frozen)]
struct PyRun(ScenarioRun);

#[pymethods]
impl PyRun {
    #[getter]
    fn scenario(&self) -> &'static str {
        self.0.scenario
    }

    #[getter]
    fn estimators(&self) -> Vec<&'static str> {
        self.0.estimator_names.clone()
    }

    fn degraded(&self) -> bool {
        self.0.degraded()
    }

    fn summary_csv(&self) -> String {
        summary_csv(&self.0)
    }

    /// Summary columns keyed by name, one value per magnitude.
    fn columns(&self) -> BTreeMap<String, Vec<f64>> {
        let (header, rows) = summary_table(&self.0);
        header
            .iter()
            .enumerate()
            .map(|(j, h)| (h.clone(), rows.iter().map(|r| r[j]).collect()))
            .collect()
    }
}

#[pymodule(name = "ntlab")]
fn ntlab_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_function(wrap_pyfunction!(np_power, m)?)?;
    m.add_function(wrap_pyfunction!(prediction_table, m)?)?;
    m.add_class::<PyPrediction>()?;
    m.add_class::<PyConfig>()?;
    m.add_class::<PyRun>()?;
    Ok(())
}
