//! Python bindings for the HFB simulator.
//!
//! Vectors are lists of complex numbers and matrices are lists of rows.

use std::path::PathBuf;

use hfb_core::config::RunConfig;
use hfb_core::driver;
use hfb_core::dynamics::{self, EvolveOptions, NoObserver};
use hfb_core::grid::{self, FieldSpec, TorusGrid};
use hfb_core::linalg::{CMat, CVec, C64};
use hfb_core::meanfield::HfbSystem;
use hfb_core::observables::{self, DiagnosticsRecord, CSV_HEADER};
use hfb_core::snapshot::Snapshot;
use hfb_core::state::{self, HfbState};
use hfb_core::verify::{self, Suite};
use hfb_core::{scenarios, HfbError};
use pyo3::exceptions::{PyArithmeticError, PyOSError, PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

fn to_py(err: HfbError) -> PyErr {
    match err {
        HfbError::Io(e) => PyOSError::new_err(e.to_string()),
        e @ HfbError::NumericalAbort { .. } => PyArithmeticError::new_err(e.to_string()),
        e @ (HfbError::NonContraction { .. } | HfbError::InvariantViolation(_)) => PyRuntimeError::new_err(e.to_string()),
        e => PyValueError::new_err(e.to_string()),
    }
}

fn rows(m: &CMat) -> Vec<Vec<C64>> {
    (0..m.nrows()).map(|i| m.row(i).iter().copied().collect()).collect()
}

fn from_rows(name: &str, data: Vec<Vec<C64>>, n: usize) -> PyResult<CMat> {
    if data.len() != n || data.iter().any(|r| r.len() != n) {
        return Err(PyValueError::new_err(format!("{name} must be {n}x{n}")));
    }
    Ok(CMat::from_fn(n, n, |i, j| data[i][j]))
}

fn table(values: Option<Vec<f64>>, n: usize) -> FieldSpec {
    let values = values.unwrap_or_else(|| vec![0.0; n]);
    FieldSpec::Table { values: values.into_iter().map(|x| C64::new(x, 0.0)).collect() }
}

fn record_dict<'py>(py: Python<'py>, rec: &DiagnosticsRecord) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    for (k, v) in CSV_HEADER.iter().zip(rec.values()) {
        d.set_item(*k, v)?;
    }
    Ok(d)
}

/// Periodic grid of `points` nodes per axis on `[0, length)^dim`.
#[pyclass(name = "Grid", module = "hfb", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyGrid {
    inner: TorusGrid,
}

#[pymethods]
impl PyGrid {
    #[new]
    fn new(dim: usize, length: f64, points: usize) -> PyResult<Self> {
        Ok(Self { inner: TorusGrid::new(dim, length, points).map_err(to_py)? })
    }

    #[getter]
    fn dim(&self) -> usize {
        self.inner.dim()
    }

    #[getter]
    fn length(&self) -> f64 {
        self.inner.length()
    }

    #[getter]
    fn points(&self) -> usize {
        self.inner.points_per_axis()
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.inner.weight()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn nodes(&self) -> Vec<Vec<f64>> {
        (0..self.inner.len()).map(|i| self.inner.node(i)[..self.inner.dim()].to_vec()).collect()
    }

    fn __repr__(&self) -> String {
        format!("Grid(dim={}, length={}, points={})", self.dim(), self.length(), self.points())
    }
}

/// Kinetic term, external potential and pair interaction on a grid.
#[pyclass(name = "System", module = "hfb", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PySystem {
    inner: HfbSystem,
}

#[pymethods]
impl PySystem {
    /// `potential` and `pair` are real node samples; `None` means zero.
    #[new]
    #[pyo3(signature = (grid, potential=None, pair=None))]
    fn new(grid: &PyGrid, potential: Option<Vec<f64>>, pair: Option<Vec<f64>>) -> PyResult<Self> {
        let g = &grid.inner;
        let v_ext = grid::sample_real_field(g, &table(potential, g.len())).map_err(to_py)?;
        let pair = grid::pair_kernel(g, &table(pair, g.len())).map_err(to_py)?;
        Ok(Self { inner: HfbSystem::new(g, v_ext, pair).map_err(to_py)? })
    }

    /// One-dimensional system with the reference Gaussian pair potential.
    #[staticmethod]
    fn interacting_1d(points: usize) -> PyResult<Self> {
        Ok(Self { inner: scenarios::interacting_1d(points).map_err(to_py)? })
    }

    #[staticmethod]
    fn free_1d(points: usize) -> PyResult<Self> {
        Ok(Self { inner: scenarios::free_1d(points).map_err(to_py)? })
    }

    #[staticmethod]
    fn from_config(path: PathBuf) -> PyResult<Self> {
        let cfg = RunConfig::from_file(path).map_err(to_py)?;
        Ok(Self { inner: driver::build_system(&cfg).map_err(to_py)? })
    }

    #[getter]
    fn grid(&self) -> Option<PyGrid> {
        self.inner.grid().map(|g| PyGrid { inner: g.clone() })
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.inner.weight()
    }

    #[getter]
    fn is_free(&self) -> bool {
        self.inner.is_free()
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn energy(&self, state: &PyState) -> PyResult<f64> {
        observables::energy(&self.inner, &state.inner).map_err(to_py)
    }

    fn diagnostics<'py>(&self, py: Python<'py>, state: &PyState, t: f64) -> PyResult<Bound<'py, PyDict>> {
        let rec = observables::record(&self.inner, &state.inner, t).map_err(to_py)?;
        record_dict(py, &rec)
    }

    /// Time derivative of `(φ, γ, σ)`, returned as a state-shaped tuple.
    fn rhs(&self, state: &PyState) -> PyResult<PyState> {
        Ok(PyState { inner: dynamics::rhs(&self.inner, &state.inner).map_err(to_py)? })
    }

    fn step(&self, state: &PyState, dt: f64) -> PyResult<PyState> {
        Ok(PyState { inner: dynamics::step_rk4(&self.inner, &state.inner, dt).map_err(to_py)? })
    }

    /// Integrates to `t_final`; returns the final state and the diagnostics rows.
    #[pyo3(signature = (state, dt, t_final, diagnostic_stride=1))]
    fn evolve<'py>(
        &self,
        py: Python<'py>,
        state: &PyState,
        dt: f64,
        t_final: f64,
        diagnostic_stride: usize,
    ) -> PyResult<(PyState, Vec<Bound<'py, PyDict>>)> {
        let opts = EvolveOptions::new(dt, t_final).with_diagnostics(diagnostic_stride);
        let traj = py
            .detach(|| dynamics::evolve(&self.inner, &state.inner, &opts, &mut NoObserver))
            .map_err(to_py)?;
        let rows = traj.diagnostics.iter().map(|r| record_dict(py, r)).collect::<PyResult<_>>()?;
        Ok((PyState { inner: traj.final_state().clone() }, rows))
    }

    /// Analytic flow of the quadratic part with the interaction switched off.
    fn free_flow(&self, state: &PyState, t: f64) -> PyResult<PyState> {
        let s = hfb_core::oracle::free_flow(&state.inner, t, self.inner.one_body()).map_err(to_py)?;
        Ok(PyState { inner: s })
    }

    /// Mild-form fixed point; returns the state and the contraction estimate.
    #[pyo3(signature = (state, t, dt, iterations=8))]
    fn picard(&self, state: &PyState, t: f64, dt: f64, iterations: usize) -> PyResult<(PyState, f64)> {
        let r = dynamics::picard_mild(&self.inner, &state.inner, t, dt, iterations).map_err(to_py)?;
        Ok((PyState { inner: r.state }, r.contraction))
    }

    /// Symplectic and reconstruction defects of the Bogoliubov propagator along a run.
    fn bogoliubov_defects(&self, py: Python<'_>, state: &PyState, dt: f64, t_final: f64) -> PyResult<(f64, f64)> {
        let opts = EvolveOptions::new(dt, t_final).with_store_stride(1);
        let report = py
            .detach(|| {
                let traj = dynamics::evolve(&self.inner, &state.inner, &opts, &mut NoObserver)?;
                dynamics::bogoliubov_check(&self.inner, &traj)
            })
            .map_err(to_py)?;
        Ok((report.symplectic_defect, report.reconstruction_defect))
    }
}

/// Quasifree state given by `(φ, γ, σ)` in kernel form.
#[pyclass(name = "State", module = "hfb", frozen, skip_from_py_object)]
#[derive(Clone)]
struct PyState {
    inner: HfbState,
}

#[pymethods]
impl PyState {
    #[new]
    fn new(weight: f64, phi: Vec<C64>, gamma: Vec<Vec<C64>>, sigma: Vec<Vec<C64>>) -> PyResult<Self> {
        let n = phi.len();
        let gamma = from_rows("gamma", gamma, n)?;
        let sigma = from_rows("sigma", sigma, n)?;
        Ok(Self { inner: HfbState::new(weight, CVec::from_vec(phi), gamma, sigma).map_err(to_py)? })
    }

    #[staticmethod]
    fn vacuum(system: &PySystem) -> Self {
        Self { inner: HfbState::vacuum(system.inner.len(), system.inner.weight()) }
    }

    /// Reference condensate wave packet.
    #[staticmethod]
    fn coherent(system: &PySystem) -> PyResult<Self> {
        Ok(Self { inner: scenarios::coherent_initial(&system.inner).map_err(to_py)? })
    }

    /// Reference condensate on a squeezed thermal cloud.
    #[staticmethod]
    fn squeezed_thermal(system: &PySystem) -> PyResult<Self> {
        Ok(Self { inner: scenarios::squeezed_thermal_initial(&system.inner).map_err(to_py)? })
    }

    #[staticmethod]
    fn random(grid: &PyGrid, seed: u64) -> Self {
        Self { inner: scenarios::random_initial(&grid.inner, seed) }
    }

    #[staticmethod]
    fn load(path: PathBuf) -> PyResult<Self> {
        Ok(Self { inner: Snapshot::read(path).map_err(to_py)?.state })
    }

    fn save(&self, path: PathBuf, grid: &PyGrid) -> PyResult<()> {
        let g = &grid.inner;
        let snap = Snapshot::new(g.dim(), g.points_per_axis(), g.length(), self.inner.clone()).map_err(to_py)?;
        snap.write(path).map_err(to_py)
    }

    #[getter]
    fn weight(&self) -> f64 {
        self.inner.weight
    }

    #[getter]
    fn phi(&self) -> Vec<C64> {
        self.inner.phi.iter().copied().collect()
    }

    #[getter]
    fn gamma(&self) -> Vec<Vec<C64>> {
        rows(&self.inner.gamma)
    }

    #[getter]
    fn sigma(&self) -> Vec<Vec<C64>> {
        rows(&self.inner.sigma)
    }

    fn __len__(&self) -> usize {
        self.inner.len()
    }

    fn particle_number(&self) -> f64 {
        observables::particle_number(&self.inner)
    }

    fn trace_gamma(&self) -> f64 {
        self.inner.trace_gamma()
    }

    fn gamma_floor(&self) -> f64 {
        observables::gamma_floor(&self.inner)
    }

    /// Violated conditions with their sizes; empty when the state is admissible.
    #[pyo3(signature = (tol=1e-10))]
    fn violations(&self, tol: f64) -> Vec<(String, f64)> {
        state::validate(&self.inner, tol).violations()
    }

    fn gauge(&self, theta: f64) -> Self {
        Self { inner: state::gauge_transform(&self.inner, theta) }
    }

    fn distance(&self, other: &PyState) -> f64 {
        state::x0_distance(&self.inner, &other.inner)
    }

    fn __repr__(&self) -> String {
        format!("State(len={}, n={:.6})", self.inner.len(), self.particle_number())
    }
}

/// Runs a named verification suite and returns its JSON report.
#[pyfunction]
fn verify_suite(py: Python<'_>, name: &str) -> PyResult<String> {
    let suite: Suite = name.parse().map_err(to_py)?;
    let report = py.detach(|| verify::run_suite(suite)).map_err(to_py)?;
    Ok(report.to_json())
}

/// Runs a config file and returns the output directory.
#[pyfunction]
#[pyo3(signature = (config, out=None, seed=None))]
fn run(py: Python<'_>, config: PathBuf, out: Option<PathBuf>, seed: Option<u64>) -> PyResult<PathBuf> {
    let cfg = RunConfig::from_file(config).map_err(to_py)?;
    let summary = py.detach(|| driver::run(&cfg, out.as_deref(), seed)).map_err(to_py)?;
    Ok(summary.out_dir)
}

#[pymodule]
pub fn hfb(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyGrid>()?;
    m.add_class::<PySystem>()?;
    m.add_class::<PyState>()?;
    m.add_function(wrap_pyfunction!(verify_suite, m)?)?;
    m.add_function(wrap_pyfunction!(run, m)?)?;
    m.add("SUITES", Suite::ALL.iter().map(|s| s.name()).collect::<Vec<_>>())?;
    Ok(())
}
