//! Python bindings: bundled experiments, configs, the adaptive runner,
//! Dörfler marking and the backward Euler consistency study.

use std::path::Path;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use goalfem::adapt::{self, MetricsRecord};
use goalfem::config::{self, ExperimentConfig};
use goalfem::experiments::{self, Rows};
use goalfem::timeconsistency::{self, OdeModel, OdeRow};

fn to_py(e: goalfem::Error) -> PyErr {
    if e.is_config() {
        PyValueError::new_err(e.to_string())
    } else {
        PyRuntimeError::new_err(e.to_string())
    }
}

/// One refinement step of an adaptive run.
#[pyclass(get_all, frozen)]
pub struct Step {
    step: usize,
    dofs: usize,
    goal_values: Vec<f64>,
    exact_error: Option<f64>,
    eta_p: f64,
    eta_a: f64,
    eta_h: f64,
    eta_k: f64,
    indicator_sum: f64,
    i_eff: Option<f64>,
    i_ind: Option<f64>,
}

impl From<&MetricsRecord> for Step {
    fn from(r: &MetricsRecord) -> Self {
        Step {
            step: r.step,
            dofs: r.dofs,
            goal_values: r.goal_values.clone(),
            exact_error: r.exact_error,
            eta_p: r.eta_p,
            eta_a: r.eta_a,
            eta_h: r.eta_h,
            eta_k: r.eta_k,
            indicator_sum: r.indicator_sum,
            i_eff: r.i_eff,
            i_ind: r.i_ind,
        }
    }
}

#[pymethods]
impl Step {
    fn __repr__(&self) -> String {
        format!("Step(step={}, dofs={}, eta_h={:.3e}, i_eff={:?})", self.step, self.dofs, self.eta_h, self.i_eff)
    }
}

/// One step count of the ODE study.
#[pyclass(get_all, frozen)]
pub struct OdeStep {
    n: usize,
    true_error: f64,
    estimate: f64,
    weighted_residual: f64,
    consistency: f64,
    i_eff: Option<f64>,
}

impl From<&OdeRow> for OdeStep {
    fn from(r: &OdeRow) -> Self {
        OdeStep {
            n: r.n,
            true_error: r.true_error,
            estimate: r.parts.estimate,
            weighted_residual: r.parts.weighted_residual,
            consistency: r.parts.consistency,
            i_eff: r.i_eff,
        }
    }
}

/// An experiment configuration.
#[pyclass]
pub struct Config {
    inner: ExperimentConfig,
}

#[pymethods]
impl Config {
    #[staticmethod]
    fn bundled(name: &str) -> PyResult<Self> {
        let inner = config::bundled(name)
            .ok_or_else(|| PyValueError::new_err(format!("no bundled experiment {name}")))?
            .map_err(to_py)?;
        Ok(Config { inner })
    }

    #[staticmethod]
    fn from_toml(text: &str) -> PyResult<Self> {
        ExperimentConfig::from_toml(text).map(|inner| Config { inner }).map_err(to_py)
    }

    #[getter]
    fn name(&self) -> String {
        self.inner.name.clone()
    }

    #[getter]
    fn description(&self) -> String {
        self.inner.description.clone()
    }

    #[getter]
    fn max_dofs(&self) -> usize {
        self.inner.loop_config.max_dofs
    }

    #[setter]
    fn set_max_dofs(&mut self, n: usize) {
        self.inner.loop_config.max_dofs = n;
    }

    fn to_toml(&self) -> String {
        self.inner.to_toml()
    }

    /// Runs the experiment, writing into `output_dir/<name>/`. Returns the
    /// adaptive steps, or the ODE rows for an ODE study.
    fn run(&self, py: Python<'_>, output_dir: &str) -> PyResult<Py<PyAny>> {
        let rep = experiments::run_experiment(&self.inner, Path::new(output_dir)).map_err(to_py)?;
        if let Some(e) = rep.failure {
            return Err(to_py(e));
        }
        let list = match &rep.rows {
            Rows::Adaptive(r) => {
                let v: Vec<Step> = r.iter().map(Step::from).collect();
                v.into_pyobject(py)?.into_any().unbind()
            }
            Rows::Ode(r) => {
                let v: Vec<OdeStep> = r.iter().map(OdeStep::from).collect();
                v.into_pyobject(py)?.into_any().unbind()
            }
        };
        Ok(list)
    }
}

/// `(name, description)` of every bundled experiment.
#[pyfunction]
fn list_experiments() -> PyResult<Vec<(String, String)>> {
    config::BUNDLED
        .iter()
        .map(|(n, src)| ExperimentConfig::from_toml(src).map(|c| (n.to_string(), c.description)).map_err(to_py))
        .collect()
}

#[pyfunction]
fn doerfler_mark(indicators: Vec<f64>, theta: f64) -> Vec<usize> {
    adapt::doerfler_mark(&indicators, theta)
}

#[pyfunction]
fn fit_slope(x: Vec<f64>, y: Vec<f64>) -> Option<f64> {
    adapt::fit_slope(&x, &y)
}

/// Backward Euler values `u^0..u^N` for `u' = rate * u`.
#[pyfunction]
#[pyo3(signature = (rate, u0, t_end, n))]
fn backward_euler(rate: f64, u0: f64, t_end: f64, n: usize) -> PyResult<Vec<f64>> {
    let p = OdeModel::Decay { rate }.problem(u0, t_end, n);
    Ok(timeconsistency::backward_euler(&p).map_err(to_py)?.values)
}

/// Step-halving study on `[0, 1]` with `u(0) = 1`; `model` is `"decay"`
/// (`u' = rate * u`) or `"time_dependent_decay"` (`u' = -(1 + t) u`).
#[pyfunction]
#[pyo3(signature = (model, steps, rate = -1.0))]
fn ode_study(model: &str, steps: Vec<usize>, rate: f64) -> PyResult<Vec<OdeStep>> {
    let m = match model {
        "decay" => OdeModel::Decay { rate },
        "time_dependent_decay" => OdeModel::TimeDependentDecay,
        other => return Err(PyValueError::new_err(format!("unknown model {other}"))),
    };
    let rows = timeconsistency::study(m, 1.0, 1.0, &steps).map_err(to_py)?;
    Ok(rows.iter().map(OdeStep::from).collect())
}

#[pymodule]
fn goalfem_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Config>()?;
    m.add_class::<Step>()?;
    m.add_class::<OdeStep>()?;
    m.add_function(wrap_pyfunction!(list_experiments, m)?)?;
    m.add_function(wrap_pyfunction!(doerfler_mark, m)?)?;
    m.add_function(wrap_pyfunction!(fit_slope, m)?)?;
    m.add_function(wrap_pyfunction!(backward_euler, m)?)?;
    m.add_function(wrap_pyfunction!(ode_study, m)?)?;
    Ok(())
}
