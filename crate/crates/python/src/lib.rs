//! Python bindings: problem construction, configuration, solving and
//! solver comparison.

#![allow(clippy::result_large_err)]

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use sketch_ipm::bench::{self, MetricsWriter};
use sketch_ipm::error::Error;
use sketch_ipm::io::{self, SyntheticSpec};
use sketch_ipm::ipm::{self, InnerIterPolicy, OuterTrace};
use sketch_ipm::matrix::SparseMat;
use sketch_ipm::solvers::InnerSolverKind;

fn value_err(e: Error) -> PyErr {
    match e {
        Error::Io(_)
        | Error::Json(_)
        | Error::Schema { .. }
        | Error::Parse { .. }
        | Error::InvalidParameter(_)
        | Error::DimensionMismatch { .. }
        | Error::NonFinite(_)
        | Error::EmptyDataset => PyValueError::new_err(e.to_string()),
        other => PyRuntimeError::new_err(other.to_string()),
    }
}

/// Standard-form LP `min cᵀx s.t. Ax = b, x ≥ 0`.
#[pyclass(name = "LpProblem", module = "sketch_ipm", frozen)]
struct PyLpProblem {
    inner: ipm::LpProblem,
}

#[pymethods]
impl PyLpProblem {
    /// Build from a dense row-major constraint matrix.
    #[new]
    fn new(a: Vec<Vec<f64>>, b: Vec<f64>, c: Vec<f64>) -> PyResult<Self> {
        let rows = a.len();
        let cols = a.first().map_or(0, Vec::len);
        if a.iter().any(|r| r.len() != cols) {
            return Err(PyValueError::new_err("rows of `a` differ in length"));
        }
        let trip: Vec<(usize, usize, f64)> = a
            .iter()
            .enumerate()
            .flat_map(|(i, r)| r.iter().enumerate().filter(|(_, v)| **v != 0.0).map(move |(j, &v)| (i, j, v)))
            .collect();
        Self::from_triplets(rows, cols, trip, b, c)
    }

    /// Build from `(row, col, value)` entries; duplicates are summed.
    #[staticmethod]
    fn from_triplets(m: usize, n: usize, entries: Vec<(usize, usize, f64)>, b: Vec<f64>, c: Vec<f64>) -> PyResult<Self> {
        let a = SparseMat::from_triplets(m, n, &entries).map_err(value_err)?;
        let inner = ipm::LpProblem::new(a, b, c).map_err(value_err)?;
        Ok(PyLpProblem { inner })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        let doc = io::parse_lp(text).map_err(value_err)?;
        Ok(PyLpProblem { inner: doc.problem })
    }

    fn to_json(&self) -> PyResult<String> {
        io::to_lp_string(&self.inner, None).map_err(value_err)
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
    fn nnz(&self) -> usize {
        self.inner.a().nnz()
    }

    #[getter]
    fn b(&self) -> Vec<f64> {
        self.inner.b().to_vec()
    }

    #[getter]
    fn c(&self) -> Vec<f64> {
        self.inner.c().to_vec()
    }

    /// Dense copy of `A`, row-major.
    fn dense_a(&self) -> Vec<Vec<f64>> {
        let d = self.inner.a().to_dense();
        (0..d.rows()).map(|i| d.row(i).to_vec()).collect()
    }

    fn objective(&self, x: Vec<f64>) -> PyResult<f64> {
        if x.len() != self.inner.n() {
            return Err(PyValueError::new_err(format!("x has length {}, expected {}", x.len(), self.inner.n())));
        }
        Ok(self.inner.objective(&x))
    }

    fn __repr__(&self) -> String {
        format!("LpProblem(m={}, n={}, nnz={})", self.inner.m(), self.inner.n(), self.inner.a().nnz())
    }
}

/// Outer and inner solver settings.
#[pyclass(name = "IpmConfig", module = "sketch_ipm")]
struct PyIpmConfig {
    inner: ipm::IpmConfig,
}

#[pymethods]
impl PyIpmConfig {
    #[new]
    #[pyo3(signature = (solver="pcg", sigma=None, gamma=None, epsilon=None, tol_cg=None, zeta=None, w=None, s=None, seed=0, max_outer=None, inner_iters=None, deterministic=false))]
    #[allow(clippy::too_many_arguments)]
    fn new(
        solver: &str,
        sigma: Option<f64>,
        gamma: Option<f64>,
        epsilon: Option<f64>,
        tol_cg: Option<f64>,
        zeta: Option<f64>,
        w: Option<usize>,
        s: Option<usize>,
        seed: u64,
        max_outer: Option<usize>,
        inner_iters: Option<usize>,
        deterministic: bool,
    ) -> PyResult<Self> {
        let d = ipm::IpmConfig::default();
        let inner = ipm::IpmConfig {
            solver: solver.parse::<InnerSolverKind>().map_err(value_err)?,
            sigma: sigma.unwrap_or(d.sigma),
            gamma: gamma.unwrap_or(d.gamma),
            epsilon: epsilon.unwrap_or(d.epsilon),
            tol_cg: tol_cg.unwrap_or(d.tol_cg),
            zeta: zeta.unwrap_or(d.zeta),
            sketch_w: w,
            sketch_s: s,
            seed,
            max_outer: max_outer.unwrap_or(d.max_outer),
            inner_iters: inner_iters.map_or(d.inner_iters, InnerIterPolicy::Fixed),
            record_wall_time: !deterministic,
            ..d
        };
        inner.validate().map_err(value_err)?;
        Ok(PyIpmConfig { inner })
    }

    #[getter]
    fn solver(&self) -> &'static str {
        self.inner.solver.name()
    }

    #[getter]
    fn sigma(&self) -> f64 {
        self.inner.sigma
    }

    #[getter]
    fn gamma(&self) -> f64 {
        self.inner.gamma
    }

    #[getter]
    fn epsilon(&self) -> f64 {
        self.inner.epsilon
    }

    #[getter]
    fn tol_cg(&self) -> f64 {
        self.inner.tol_cg
    }

    #[getter]
    fn seed(&self) -> u64 {
        self.inner.seed
    }

    #[getter]
    fn max_outer(&self) -> usize {
        self.inner.max_outer
    }

    fn __repr__(&self) -> String {
        format!(
            "IpmConfig(solver={:?}, sigma={}, gamma={}, epsilon={:e}, tol_cg={:e}, seed={})",
            self.inner.solver.name(),
            self.inner.sigma,
            self.inner.gamma,
            self.inner.epsilon,
            self.inner.tol_cg,
            self.inner.seed
        )
    }
}

/// Final iterate and per-iteration trace of one solve.
#[pyclass(name = "Solution", module = "sketch_ipm", frozen)]
struct PySolution {
    #[pyo3(get)]
    x: Vec<f64>,
    #[pyo3(get)]
    y: Vec<f64>,
    #[pyo3(get)]
    s: Vec<f64>,
    #[pyo3(get)]
    mu: f64,
    #[pyo3(get)]
    objective: f64,
    #[pyo3(get)]
    converged: bool,
    #[pyo3(get)]
    outer_iters: usize,
    /// Why the run stopped early, if it did.
    #[pyo3(get)]
    status: String,
    trace: OuterTrace,
}

#[pymethods]
impl PySolution {
    /// Inner iterations of every outer iteration.
    #[getter]
    fn inner_iters(&self) -> Vec<usize> {
        self.trace.records.iter().map(|r| r.inner_iters).collect()
    }

    /// `μ` after every outer iteration.
    #[getter]
    fn mu_history(&self) -> Vec<f64> {
        self.trace.records.iter().map(|r| r.mu).collect()
    }

    /// Per-iteration metrics in the CLI's CSV layout.
    #[pyo3(signature = (run_id="run"))]
    fn metrics_csv(&self, run_id: &str) -> PyResult<String> {
        let mut w = MetricsWriter::new(Vec::new()).map_err(value_err)?;
        for rec in &self.trace.records {
            w.write_record(run_id, rec).map_err(value_err)?;
        }
        String::from_utf8(w.into_inner()).map_err(|e| PyRuntimeError::new_err(e.to_string()))
    }

    fn __repr__(&self) -> String {
        format!(
            "Solution(objective={}, mu={:e}, converged={}, outer_iters={})",
            self.objective, self.mu, self.converged, self.outer_iters
        )
    }
}

/// Solve `problem`. Non-convergence returns `converged=False`; numerical
/// and input errors raise.
#[pyfunction]
#[pyo3(signature = (problem, config=None))]
fn solve(py: Python<'_>, problem: &PyLpProblem, config: Option<&PyIpmConfig>) -> PyResult<PySolution> {
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let prob = &problem.inner;
    let result = py.detach(|| ipm::ipm_solve(prob, &cfg));
    let (iterate, trace, outer_iters, status) = match result {
        Ok(sol) => (sol.iterate, sol.trace, sol.outer_iters, String::from("converged")),
        Err(f) if f.is_non_convergence() => {
            let outer = f.trace.accepted().count();
            (f.iterate, f.trace, outer, f.error.to_string())
        }
        Err(f) => return Err(value_err(f.error)),
    };
    Ok(PySolution {
        objective: prob.objective(&iterate.x),
        converged: status == "converged",
        mu: iterate.mu,
        x: iterate.x,
        y: iterate.y,
        s: iterate.s,
        outer_iters,
        status,
        trace,
    })
}

/// Random synthetic LP; `feasible=True` guarantees a bounded optimum.
#[pyfunction]
#[pyo3(signature = (m, n, density=0.1, seed=0, feasible=true))]
fn gen_synthetic(m: usize, n: usize, density: f64, seed: u64, feasible: bool) -> PyResult<PyLpProblem> {
    let mut spec = SyntheticSpec::new(m, n, density, seed);
    if feasible {
        spec = spec.feasible();
    }
    Ok(PyLpProblem { inner: io::gen_synthetic(&spec).map_err(value_err)? })
}

/// Hard-margin ℓ1-SVM LP from libsvm-format text.
#[pyfunction]
fn svm_to_lp(text: &str) -> PyResult<PyLpProblem> {
    let data = io::parse_libsvm(text).map_err(value_err)?;
    Ok(PyLpProblem { inner: io::svm_to_lp(&data).map_err(value_err)? })
}

#[pyfunction]
fn read_lp(path: &str) -> PyResult<PyLpProblem> {
    Ok(PyLpProblem { inner: io::read_lp(path).map_err(value_err)? })
}

#[pyfunction]
fn write_lp(path: &str, problem: &PyLpProblem) -> PyResult<()> {
    io::write_lp(path, &problem.inner).map_err(value_err)
}

/// One summary dict per solver kind, in the order given.
#[pyfunction]
#[pyo3(signature = (problem, solvers=None, seeds=1, config=None))]
fn compare<'py>(
    py: Python<'py>,
    problem: &PyLpProblem,
    solvers: Option<Vec<String>>,
    seeds: u64,
    config: Option<&PyIpmConfig>,
) -> PyResult<Vec<Bound<'py, PyDict>>> {
    let kinds = match solvers {
        Some(names) => names
            .iter()
            .map(|s| s.parse::<InnerSolverKind>())
            .collect::<Result<Vec<_>, _>>()
            .map_err(value_err)?,
        None => InnerSolverKind::ALL.to_vec(),
    };
    let cfg = config.map(|c| c.inner.clone()).unwrap_or_default();
    let prob = &problem.inner;
    let rows = py.detach(|| bench::compare(prob, &cfg, &kinds, seeds)).map_err(value_err)?;
    rows.iter()
        .map(|r| {
            let d = PyDict::new(py);
            d.set_item("solver", r.solver.name())?;
            d.set_item("runs", r.runs)?;
            d.set_item("converged", r.converged)?;
            d.set_item("inner_iters_max", r.inner_iters_max)?;
            d.set_item("inner_iters_median", r.inner_iters_median)?;
            d.set_item("outer_iters_median", r.outer_iters_median)?;
            d.set_item("kappa_precond_median", r.kappa_precond_median)?;
            d.set_item("kappa_unprecond_median", r.kappa_unprecond_median)?;
            d.set_item("relative_error", r.relative_error)?;
            Ok(d)
        })
        .collect()
}

#[pymodule]
#[pyo3(name = "sketch_ipm")]
fn sketch_ipm_module(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLpProblem>()?;
    m.add_class::<PyIpmConfig>()?;
    m.add_class::<PySolution>()?;
    m.add_function(wrap_pyfunction!(solve, m)?)?;
    m.add_function(wrap_pyfunction!(gen_synthetic, m)?)?;
    m.add_function(wrap_pyfunction!(svm_to_lp, m)?)?;
    m.add_function(wrap_pyfunction!(read_lp, m)?)?;
    m.add_function(wrap_pyfunction!(write_lp, m)?)?;
    m.add_function(wrap_pyfunction!(compare, m)?)?;
    Ok(())
}
