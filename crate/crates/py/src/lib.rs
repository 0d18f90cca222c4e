//! Python bindings: networks, objectives, schedules, runs and a few checks.

use nalgebra::DMatrix;
use ndgd_core::analysis::{chi_square_tail_check, eig_sandwich_check, wilson_interval, TrialStats, Z95};
use ndgd_core::engine::{
    build_schedule, escape_iteration, run as run_engine, trace_csv_string, Algorithm, RunConfig, RunTrace, StepParams,
};
use ndgd_core::objectives::{
    generate_logistic_data, make_logistic, make_quartic, random_quartic_coeffs, LiftedPoint, ObjectiveSet,
};
use ndgd_core::topology::{build_regular_graph, lazy_metropolis_mixing, Graph, MixingMatrix};
use ndgd_core::NdgdError;
use pyo3::exceptions::{PyArithmeticError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;
use serde::Serialize;

fn to_py_err(e: NdgdError) -> PyErr {
    match e {
        NdgdError::Diverged { k, .. } => PyArithmeticError::new_err(format!("iterate diverged at k = {k}")),
        other => PyValueError::new_err(other.to_string()),
    }
}

fn to_python<'py, T: Serialize>(py: Python<'py>, value: &T) -> PyResult<Bound<'py, PyAny>> {
    let text = serde_json::to_string(value).map_err(|e| PyValueError::new_err(e.to_string()))?;
    py.import("json")?.call_method1("loads", (text,))
}

/// Communication graph together with its mixing matrix.
#[pyclass(frozen)]
struct Network {
    graph: Graph,
    mixing: MixingMatrix,
}

fn network_from_graph(graph: Graph) -> PyResult<Network> {
    let mixing = lazy_metropolis_mixing(&graph).map_err(to_py_err)?;
    Ok(Network { graph, mixing })
}

#[pymethods]
impl Network {
    /// Random connected `degree`-regular graph with lazy Metropolis weights.
    #[staticmethod]
    #[pyo3(signature = (m, degree, seed=0))]
    fn regular(m: usize, degree: usize, seed: u64) -> PyResult<Self> {
        network_from_graph(build_regular_graph(m, degree, seed).map_err(to_py_err)?)
    }

    #[staticmethod]
    fn cycle(m: usize) -> PyResult<Self> {
        network_from_graph(Graph::cycle(m).map_err(to_py_err)?)
    }

    #[staticmethod]
    fn complete(m: usize) -> PyResult<Self> {
        network_from_graph(Graph::complete(m).map_err(to_py_err)?)
    }

    #[staticmethod]
    fn from_edges(m: usize, edges: Vec<(usize, usize)>) -> PyResult<Self> {
        network_from_graph(Graph::new(m, edges).map_err(to_py_err)?)
    }

    /// Same graph with explicit mixing weights, given as rows.
    fn with_mixing(&self, rows: Vec<Vec<f64>>) -> PyResult<Self> {
        let m = self.graph.m();
        if rows.len() != m || rows.iter().any(|r| r.len() != m) {
            return Err(PyValueError::new_err(format!("mixing matrix must be {m} x {m}")));
        }
        let dense = DMatrix::from_fn(m, m, |i, j| rows[i][j]);
        let mixing = MixingMatrix::from_dense(dense).map_err(to_py_err)?;
        Ok(Self { graph: self.graph.clone(), mixing })
    }

    #[getter]
    fn m(&self) -> usize {
        self.graph.m()
    }

    #[getter]
    fn lambda_min(&self) -> f64 {
        self.mixing.lambda_min()
    }

    #[getter]
    fn lambda_2(&self) -> f64 {
        self.mixing.lambda_2()
    }

    fn edges(&self) -> Vec<(usize, usize)> {
        self.graph.edges().collect()
    }

    fn mixing(&self) -> Vec<Vec<f64>> {
        let w = self.mixing.entries();
        w.row_iter().map(|r| r.iter().copied().collect()).collect()
    }

    fn edge_list(&self) -> String {
        self.graph.to_edge_list()
    }

    fn mixing_csv(&self) -> String {
        self.mixing.to_csv()
    }

    fn __repr__(&self) -> String {
        format!(
            "Network(m={}, edges={}, lambda_min={:.6}, lambda_2={:.6})",
            self.graph.m(),
            self.graph.edge_count(),
            self.mixing.lambda_min(),
            self.mixing.lambda_2()
        )
    }
}

/// Sum of per-agent local objectives.
#[pyclass(frozen)]
struct Objective {
    inner: ObjectiveSet,
}

#[pymethods]
impl Objective {
    /// Random separable quartic with a strict saddle at the origin.
    #[staticmethod]
    #[pyo3(signature = (m, seed=0))]
    fn quartic(m: usize, seed: u64) -> PyResult<Self> {
        let inner = make_quartic(&random_quartic_coeffs(m, seed)).map_err(to_py_err)?;
        Ok(Self { inner })
    }

    /// Quartic with explicit `(a, b, c, d)` per agent.
    #[staticmethod]
    fn custom_quartic(coefficients: Vec<(f64, f64, f64, f64)>) -> PyResult<Self> {
        Ok(Self { inner: make_quartic(&coefficients).map_err(to_py_err)? })
    }

    /// Regularized two-layer logistic loss, one synthetic sample per agent.
    #[staticmethod]
    #[pyo3(signature = (m, eta=0.1, features=1, inner_dim=1, seed=0))]
    fn logistic(m: usize, eta: f64, features: usize, inner_dim: usize, seed: u64) -> PyResult<Self> {
        let data = generate_logistic_data(m, features, seed);
        Ok(Self { inner: make_logistic(&data, eta, inner_dim).map_err(to_py_err)? })
    }

    #[getter]
    fn m(&self) -> usize {
        self.inner.m()
    }

    #[getter]
    fn n(&self) -> usize {
        self.inner.n()
    }

    #[getter]
    fn kind(&self) -> String {
        self.inner.kind().to_string()
    }

    fn constants<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
        to_python(py, self.inner.constants())
    }

    /// Value of the sum at a common point.
    fn value(&self, x: Vec<f64>) -> PyResult<f64> {
        self.check_dim(&x)?;
        Ok(self.inner.value_at(&x))
    }

    fn gradient(&self, x: Vec<f64>) -> PyResult<Vec<f64>> {
        self.check_dim(&x)?;
        Ok(self.inner.gradient_at(&x).iter().copied().collect())
    }

    fn hessian(&self, x: Vec<f64>) -> PyResult<Vec<Vec<f64>>> {
        self.check_dim(&x)?;
        let h = self.inner.hessian_at(&x);
        Ok(h.row_iter().map(|r| r.iter().copied().collect()).collect())
    }

    /// Known global minimizers of the sum, if available.
    fn minimizers(&self) -> Option<Vec<Vec<f64>>> {
        self.inner.minimizers().map(|ms| ms.iter().map(|v| v.iter().copied().collect()).collect())
    }

    fn __repr__(&self) -> String {
        format!("Objective(kind={:?}, m={}, n={})", self.inner.kind(), self.inner.m(), self.inner.n())
    }
}

impl Objective {
    fn check_dim(&self, x: &[f64]) -> PyResult<()> {
        if x.len() != self.inner.n() {
            return Err(PyValueError::new_err(format!("expected {} coordinates, got {}", self.inner.n(), x.len())));
        }
        Ok(())
    }

    fn lift(&self, x0: &[f64]) -> PyResult<LiftedPoint> {
        let (m, n) = (self.inner.m(), self.inner.n());
        if x0.len() == n {
            Ok(LiftedPoint::consensual(m, x0))
        } else {
            LiftedPoint::new(m, n, x0.to_vec()).map_err(to_py_err)
        }
    }
}

fn check_sizes(obj: &Objective, net: &Network) -> PyResult<()> {
    if obj.inner.m() != net.graph.m() {
        return Err(PyValueError::new_err(format!(
            "objective has {} agents, network has {}",
            obj.inner.m(),
            net.graph.m()
        )));
    }
    Ok(())
}

/// Step size, noise level and stopping constants for a given `rho`.
///
/// `x0` is the common start used for the iteration budget; it defaults to
/// the origin.
#[pyfunction]
#[pyo3(signature = (objective, network, rho, x0=None))]
fn schedule<'py>(
    py: Python<'py>,
    objective: &Objective,
    network: &Network,
    rho: f64,
    x0: Option<Vec<f64>>,
) -> PyResult<Bound<'py, PyAny>> {
    check_sizes(objective, network)?;
    let obj = &objective.inner;
    let start = objective.lift(&x0.unwrap_or_else(|| vec![0.0; obj.n()]))?;
    let s = build_schedule(rho, obj.constants(), network.mixing.spectral(), obj.m(), obj.n(), obj.f_value(&start))
        .map_err(to_py_err)?;
    let out = to_python(py, &s)?;
    let thresholds = s.stationarity_thresholds();
    out.set_item("thresholds", to_python(py, &thresholds)?)?;
    out.set_item("q_lipschitz", s.q_lipschitz())?;
    Ok(out)
}

fn trace_dict<'py>(py: Python<'py>, t: &RunTrace) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("k", t.rows.iter().map(|r| r.k).collect::<Vec<_>>())?;
    d.set_item("consensus_error", t.rows.iter().map(|r| r.consensus_error).collect::<Vec<_>>())?;
    d.set_item("grad_q_norm", t.rows.iter().map(|r| r.grad_q_norm).collect::<Vec<_>>())?;
    d.set_item("q_value", t.rows.iter().map(|r| r.q_value).collect::<Vec<_>>())?;
    d.set_item("grad_sum_norm", t.rows.iter().map(|r| r.grad_sum_norm).collect::<Vec<_>>())?;
    d.set_item("lmin_hess_sum", t.rows.iter().map(|r| r.lmin_hess_sum).collect::<Vec<_>>())?;
    d.set_item("dist", t.rows.iter().map(|r| r.dist.clone()).collect::<Vec<_>>())?;
    d.set_item("final_point", t.final_point.as_slice().to_vec())?;
    d.set_item("iterations", t.iterations)?;
    d.set_item("stopped_early", t.stopped_early)?;
    d.set_item("alpha", t.alpha)?;
    d.set_item("sigma", t.sigma)?;
    d.set_item("escape_half", escape_iteration(&t.rows, 0.5))?;
    d.set_item("escape_tenth", escape_iteration(&t.rows, 0.1))?;
    d.set_item("digest", t.digest())?;
    d.set_item("csv", trace_csv_string(t))?;
    Ok(d)
}

/// Runs DGD, NDGD or GDQ and returns the recorded trace.
///
/// Pass `rho` to take step size and noise level from the schedule, or
/// `alpha` and `sigma` directly. `x0` is either a common point or the full
/// stacked vector. Raises `ArithmeticError` on divergence.
#[pyfunction]
#[pyo3(signature = (objective, network, algorithm, x0, max_iters, rho=None, alpha=None, sigma=None, seed=0, stream=0, record_every=1))]
#[allow(clippy::too_many_arguments)]
fn run<'py>(
    py: Python<'py>,
    objective: &Objective,
    network: &Network,
    algorithm: &str,
    x0: Vec<f64>,
    max_iters: usize,
    rho: Option<f64>,
    alpha: Option<f64>,
    sigma: Option<f64>,
    seed: u64,
    stream: u64,
    record_every: usize,
) -> PyResult<Bound<'py, PyDict>> {
    check_sizes(objective, network)?;
    let alg: Algorithm = algorithm.parse().map_err(to_py_err)?;
    let obj = &objective.inner;
    let start = objective.lift(&x0)?;
    let params = match (rho, alpha, sigma) {
        (Some(rho), None, None) => {
            let s =
                build_schedule(rho, obj.constants(), network.mixing.spectral(), obj.m(), obj.n(), obj.f_value(&start))
                    .map_err(to_py_err)?;
            StepParams::Schedule(s)
        }
        (None, Some(alpha), sigma) => StepParams::Manual { alpha, sigma: sigma.unwrap_or(0.0) },
        _ => return Err(PyValueError::new_err("pass either rho or alpha (with optional sigma)")),
    };
    let mut cfg = RunConfig::new(alg, start, max_iters, seed);
    cfg.stream = stream;
    cfg.record_every = record_every.max(1);
    let trace = py.detach(|| run_engine(&cfg, obj, &network.mixing, &params)).map_err(to_py_err)?;
    trace_dict(py, &trace)
}

fn stats_dict<'py>(py: Python<'py>, s: &TrialStats) -> PyResult<Bound<'py, PyAny>> {
    to_python(py, s)
}

/// Checks the eigenvalue sandwich between F, Q and the mean Hessian.
#[pyfunction]
#[pyo3(signature = (objective, network, trials=1000, seed=0))]
fn sandwich_check<'py>(
    py: Python<'py>,
    objective: &Objective,
    network: &Network,
    trials: u64,
    seed: u64,
) -> PyResult<Bound<'py, PyAny>> {
    check_sizes(objective, network)?;
    let s = py.detach(|| eig_sandwich_check(&objective.inner, &network.mixing, trials, seed)).map_err(to_py_err)?;
    stats_dict(py, &s)
}

/// Monte Carlo check of both chi-square tail bounds; returns `(upper, lower)`.
#[pyfunction]
#[pyo3(signature = (dof, x, trials=100_000, seed=0))]
fn chi_square_check<'py>(
    py: Python<'py>,
    dof: u32,
    x: f64,
    trials: u64,
    seed: u64,
) -> PyResult<(Bound<'py, PyAny>, Bound<'py, PyAny>)> {
    let (upper, lower) = py.detach(|| chi_square_tail_check(dof, x, trials, seed)).map_err(to_py_err)?;
    Ok((stats_dict(py, &upper)?, stats_dict(py, &lower)?))
}

/// 95% Wilson score interval.
#[pyfunction]
#[pyo3(name = "wilson_interval")]
fn wilson(successes: u64, trials: u64) -> (f64, f64) {
    wilson_interval(successes, trials, Z95)
}

#[pymodule]
fn ndgd(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<Network>()?;
    m.add_class::<Objective>()?;
    m.add_function(wrap_pyfunction!(schedule, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add_function(wrap_pyfunction!(sandwich_check, m)?)?;
    m.add_function(wrap_pyfunction!(chi_square_check, m)?)?;
    m.add_function(wrap_pyfunction!(wilson, m)?)?;
    Ok(())
}
