//! Python bindings. Structured results cross the boundary as JSON and arrive
//! in Python as dicts and lists.

pub mod api;

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

fn json_to_py<'py>(py: Python<'py>, text: &str) -> PyResult<Bound<'py, PyAny>> {
    py.import("json")?.call_method1("loads", (text,))
}

fn value_err(e: String) -> PyErr {
    PyValueError::new_err(e)
}

#[pymodule]
mod mgdeform {
    use super::*;
    use num_complex::Complex64;

    #[pymodule_export]
    const CONFIG_VERSION: u32 = mgdeform_core::cli::CONFIG_VERSION;

    /// Parses and validates a TOML run config; returns its canonical text.
    #[pyfunction]
    fn parse_config(text: &str) -> PyResult<String> {
        api::canonical_config(text).map_err(value_err)
    }

    /// Surface hypothesis report for a config.
    #[pyfunction]
    fn validate<'py>(py: Python<'py>, config: &str) -> PyResult<Bound<'py, PyAny>> {
        let report = py.detach(|| api::validate_json(config)).map_err(value_err)?;
        json_to_py(py, &report)
    }

    /// Runs the flow of a config, writing exports to `out`; returns the summary.
    #[pyfunction]
    fn run<'py>(py: Python<'py>, config: &str, out: &str) -> PyResult<Bound<'py, PyAny>> {
        let summary = py.detach(|| api::run_json(config, out)).map_err(PyRuntimeError::new_err)?;
        json_to_py(py, &summary)
    }

    /// Solves a boundary-value problem given as problem-file JSON.
    #[pyfunction]
    fn solve_bvp<'py>(py: Python<'py>, problem: &str) -> PyResult<Bound<'py, PyAny>> {
        let sol = py.detach(|| api::solve_bvp_json(problem)).map_err(PyRuntimeError::new_err)?;
        json_to_py(py, &sol)
    }

    /// Winding number of a sampled unimodular symbol.
    #[pyfunction]
    fn index_of(symbol: Vec<Complex64>) -> PyResult<i64> {
        mgdeform_core::vekua::index_of(&symbol).map_err(|e| value_err(e.to_string()))
    }

    /// Samples of e^{inθ} at n_theta equispaced angles.
    #[pyfunction]
    fn monomial_symbol(n: i64, n_theta: usize) -> Vec<Complex64> {
        mgdeform_core::vekua::monomial_symbol(n, n_theta)
    }

    /// Pompeiu operator applied to node samples of a polar grid.
    #[pyfunction]
    fn pompeiu(n_r: usize, n_theta: usize, values: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        api::pompeiu(n_r, n_theta, values).map_err(value_err)
    }

    /// Node coordinates (x¹, x²) of a polar grid, center first.
    #[pyfunction]
    fn grid_points(n_r: usize, n_theta: usize) -> PyResult<Vec<[f64; 2]>> {
        api::grid_points(n_r, n_theta).map_err(value_err)
    }

    type SnapshotRow = (usize, f64, f64, f64, f64, f64, f64, f64, f64);

    /// Step-by-step access to a flow.
    #[pyclass]
    struct Flow {
        inner: mgdeform_core::flow::Flow,
    }

    #[pymethods]
    impl Flow {
        #[new]
        fn new(config: &str) -> PyResult<Self> {
            api::flow(config).map(|inner| Self { inner }).map_err(value_err)
        }

        #[getter]
        fn finished(&self) -> bool {
            self.inner.finished()
        }

        #[getter]
        fn index(&self) -> i64 {
            self.inner.index()
        }

        #[getter]
        fn t(&self) -> f64 {
            self.inner.state().t
        }

        /// Advances one step and returns its trace record.
        fn step<'py>(&mut self, py: Python<'py>) -> PyResult<Bound<'py, PyAny>> {
            let rec = self.inner.step().map_err(|e| PyRuntimeError::new_err(e.to_string()))?;
            json_to_py(py, &serde_json::to_string(&rec).expect("record is serializable"))
        }

        /// Per-node rows (node, r, theta, a1, a2, c, dK, r1, r2) of the current state.
        fn snapshot(&self) -> Vec<SnapshotRow> {
            self.inner
                .snapshot()
                .rows
                .iter()
                .map(|r| (r.node, r.r, r.theta, r.a1, r.a2, r.c, r.dk, r.r1, r.r2))
                .collect()
        }
    }
}
