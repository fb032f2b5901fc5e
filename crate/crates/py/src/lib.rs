//! Python bindings: the main types and operations of the particle solver.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use reglandau_core::error::Error;
use reglandau_core::init::{sample_initial, InitialCondition};
use reglandau_core::integrator::{integrate, DtPolicy, IntegrateOptions, Scheme, StepConfig};
use reglandau_core::kernel::velocity_field;
use reglandau_core::metrics::{self, EntropyBoxSpec};
use reglandau_core::mollifier;
use reglandau_core::quad::QuadratureRule;
use reglandau_core::transport;
use reglandau_core::types::{self, ModelParams as CoreParams, ParticleEnsemble as CoreEnsemble};

fn err_py(e: Error) -> PyErr {
    match e {
        Error::Io(io) => PyRuntimeError::new_err(io.to_string()),
        other => PyValueError::new_err(other.to_string()),
    }
}

/// Model parameters: epsilon, gamma, dimension; the mollifier normalization
/// is computed at construction.
#[pyclass(name = "ModelParams", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyModelParams {
    inner: CoreParams,
}

#[pymethods]
impl PyModelParams {
    #[new]
    fn new(epsilon: f64, gamma: f64, dim: usize) -> PyResult<Self> {
        Ok(PyModelParams {
            inner: CoreParams::new(epsilon, gamma, dim).map_err(err_py)?,
        })
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim
    }

    #[getter]
    fn moll_norm(&self) -> f64 {
        self.inner.moll_norm
    }

    fn __repr__(&self) -> String {
        format!(
            "ModelParams(epsilon={}, gamma={}, dim={})",
            self.inner.epsilon, self.inner.gamma, self.inner.dim
        )
    }
}

/// Weighted empirical measure on R^d.
#[pyclass(name = "ParticleEnsemble", skip_from_py_object)]
#[derive(Clone)]
struct PyEnsemble {
    inner: CoreEnsemble,
}

#[pymethods]
impl PyEnsemble {
    #[new]
    #[pyo3(signature = (positions, weights=None, dim=2, time=0.0))]
    fn new(positions: Vec<f64>, weights: Option<Vec<f64>>, dim: usize, time: f64) -> PyResult<Self> {
        let inner = match weights {
            Some(w) => CoreEnsemble::new(positions, w, dim, time),
            None => CoreEnsemble::equal_weights(positions, dim, time),
        }
        .map_err(err_py)?;
        Ok(PyEnsemble { inner })
    }

    #[staticmethod]
    fn maxwellian(n: usize, dim: usize, u: Vec<f64>, temp: f64, seed: u64) -> PyResult<Self> {
        let ic = InitialCondition::Maxwellian { u, temp };
        Ok(PyEnsemble {
            inner: sample_initial(&ic, n, dim, seed).map_err(err_py)?,
        })
    }

    #[staticmethod]
    fn from_snapshot(path: std::path::PathBuf) -> PyResult<Self> {
        Ok(PyEnsemble {
            inner: types::read_snapshot(&path).map_err(err_py)?,
        })
    }

    fn write_snapshot(&self, path: std::path::PathBuf) -> PyResult<()> {
        types::write_snapshot(&self.inner, &path).map_err(err_py)
    }

    #[getter]
    fn positions(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len())
            .map(|i| self.inner.position(i).to_vec())
            .collect()
    }

    #[getter]
    fn weights(&self) -> Vec<f64> {
        self.inner.weights().to_vec()
    }

    #[getter]
    fn time(&self) -> f64 {
        self.inner.time
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn __repr__(&self) -> String {
        format!(
            "ParticleEnsemble(n={}, dim={}, time={})",
            self.inner.len(),
            self.inner.dim(),
            self.inner.time
        )
    }
}

/// Quadrature rule for the mollifier convolution.
#[pyclass(name = "QuadratureRule", frozen)]
struct PyQuadratureRule {
    inner: QuadratureRule,
}

#[pymethods]
impl PyQuadratureRule {
    #[new]
    #[pyo3(signature = (dim=2, radius=16.0, nodes=12))]
    fn new(dim: usize, radius: f64, nodes: usize) -> PyResult<Self> {
        Ok(PyQuadratureRule {
            inner: QuadratureRule::new(dim, radius, nodes).map_err(err_py)?,
        })
    }

    #[getter]
    fn node_count(&self) -> usize {
        self.inner.len()
    }

    #[getter]
    fn radius(&self) -> f64 {
        self.inner.radius
    }
}

#[pyfunction]
fn score(
    ensemble: &PyEnsemble,
    params: &PyModelParams,
    rule: &PyQuadratureRule,
    v: Vec<f64>,
) -> Vec<f64> {
    mollifier::score(&ensemble.inner, &params.inner, &rule.inner, &v)
}

#[pyfunction]
fn log_density(ensemble: &PyEnsemble, params: &PyModelParams, u: Vec<f64>) -> f64 {
    mollifier::log_density(&ensemble.inner, &params.inner, &u)
}

#[pyfunction]
fn velocities(
    ensemble: &PyEnsemble,
    params: &PyModelParams,
    rule: &PyQuadratureRule,
) -> PyResult<Vec<Vec<f64>>> {
    let s = mollifier::score_field(&ensemble.inner, &params.inner, &rule.inner);
    let u = velocity_field(&ensemble.inner, &s, &params.inner).map_err(err_py)?;
    Ok((0..u.len()).map(|i| u.value(i).to_vec()).collect())
}

#[pyfunction]
fn moments(ensemble: &PyEnsemble, order: f64) -> f64 {
    metrics::moments(&ensemble.inner, order)
}

#[pyfunction]
fn entropy(ensemble: &PyEnsemble, params: &PyModelParams) -> PyResult<f64> {
    metrics::entropy_with_box(&ensemble.inner, &params.inner, &EntropyBoxSpec::default())
        .map_err(err_py)
}

#[pyfunction]
fn dissipation(
    ensemble: &PyEnsemble,
    params: &PyModelParams,
    rule: &PyQuadratureRule,
) -> f64 {
    let s = mollifier::score_field(&ensemble.inner, &params.inner, &rule.inner);
    metrics::dissipation(&ensemble.inner, &s, &params.inner)
}

#[pyfunction]
fn eta_min(ensemble: &PyEnsemble) -> PyResult<f64> {
    metrics::eta_min(&ensemble.inner).map_err(err_py)
}

fn plan_to_dict(py: Python<'_>, plan: &transport::TransportPlanResult) -> PyResult<Py<PyDict>> {
    let d = PyDict::new(py);
    d.set_item("metric", plan.metric.name())?;
    d.set_item("value", plan.cost)?;
    d.set_item("mode", plan.mode.name())?;
    d.set_item("matching", plan.matching.clone())?;
    Ok(d.into())
}

#[pyfunction]
fn wasserstein_2(py: Python<'_>, a: &PyEnsemble, b: &PyEnsemble) -> PyResult<Py<PyDict>> {
    let plan = transport::wasserstein_2(&a.inner, &b.inner).map_err(err_py)?;
    plan_to_dict(py, &plan)
}

#[pyfunction]
fn wasserstein_inf(py: Python<'_>, a: &PyEnsemble, b: &PyEnsemble) -> PyResult<Py<PyDict>> {
    let plan = transport::wasserstein_inf(&a.inner, &b.inner).map_err(err_py)?;
    plan_to_dict(py, &plan)
}

#[pyfunction]
#[pyo3(signature = (a, b, directions=64, seed=7))]
fn sliced_w2(
    py: Python<'_>,
    a: &PyEnsemble,
    b: &PyEnsemble,
    directions: usize,
    seed: u64,
) -> PyResult<Py<PyDict>> {
    let plan = transport::sliced_w2(&a.inner, &b.inner, directions, seed).map_err(err_py)?;
    plan_to_dict(py, &plan)
}

/// Integrates the particle system and returns (final ensemble, records),
/// each record a dict of the diagnostics columns.
#[pyfunction]
#[pyo3(signature = (ensemble, params, rule, t_end, dt, scheme="rk4", adaptive=false, theta=0.1, entropy_every=0))]
#[allow(clippy::too_many_arguments)]
fn simulate(
    py: Python<'_>,
    ensemble: &PyEnsemble,
    params: &PyModelParams,
    rule: &PyQuadratureRule,
    t_end: f64,
    dt: f64,
    scheme: &str,
    adaptive: bool,
    theta: f64,
    entropy_every: usize,
) -> PyResult<(PyEnsemble, Vec<Py<PyDict>>)> {
    let scheme = match scheme {
        "euler" => Scheme::Euler,
        "rk4" => Scheme::Rk4,
        other => return Err(PyValueError::new_err(format!("unknown scheme `{other}`"))),
    };
    let cfg = StepConfig {
        scheme,
        dt: if adaptive {
            DtPolicy::Adaptive { dt_max: dt }
        } else {
            DtPolicy::Fixed(dt)
        },
        theta,
        t_end,
    };
    let opts = IntegrateOptions {
        entropy_every,
        ..Default::default()
    };
    let mut records: Vec<Py<PyDict>> = Vec::new();
    let mut sink_err: Option<PyErr> = None;
    let snaps = integrate(
        &ensemble.inner,
        &params.inner,
        &rule.inner,
        &cfg,
        &opts,
        &mut |rec| {
            if sink_err.is_some() {
                return;
            }
            let d = PyDict::new(py);
            let fill = || -> PyResult<()> {
                d.set_item("t", rec.time)?;
                d.set_item("mass", rec.mass)?;
                d.set_item("momentum", rec.momentum.clone())?;
                d.set_item("energy", rec.energy)?;
                d.set_item("entropy", rec.entropy)?;
                d.set_item("dissipation", rec.dissipation)?;
                d.set_item("eta_min", rec.eta_min)?;
                d.set_item("max_speed", rec.max_speed)?;
                Ok(())
            };
            if let Err(e) = fill() {
                sink_err = Some(e);
            } else {
                records.push(d.into());
            }
        },
    )
    .map_err(err_py)?;
    if let Some(e) = sink_err {
        return Err(e);
    }
    let last = snaps.into_iter().last().expect("trajectory nonempty");
    Ok((PyEnsemble { inner: last }, records))
}

#[pymodule]
fn reglandau_py(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyModelParams>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_class::<PyQuadratureRule>()?;
    m.add_function(wrap_pyfunction!(score, m)?)?;
    m.add_function(wrap_pyfunction!(log_density, m)?)?;
    m.add_function(wrap_pyfunction!(velocities, m)?)?;
    m.add_function(wrap_pyfunction!(moments, m)?)?;
    m.add_function(wrap_pyfunction!(entropy, m)?)?;
    m.add_function(wrap_pyfunction!(dissipation, m)?)?;
    m.add_function(wrap_pyfunction!(eta_min, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_2, m)?)?;
    m.add_function(wrap_pyfunction!(wasserstein_inf, m)?)?;
    m.add_function(wrap_pyfunction!(sliced_w2, m)?)?;
    m.add_function(wrap_pyfunction!(simulate, m)?)?;
    Ok(())
}
