//! Python bindings: states, the collision channel, characteristic functions,
//! Gaussian states, the quantum measures and the scenario runner.

use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;

use repscatter_cli::CliError;
use repscatter_core::channel::{self as ch, DEFAULT_MAX_STEPS, DEFAULT_TOL};
use repscatter_core::{charfn, fock, gaussian, measures, Error, C64};

fn core_err(e: Error) -> PyErr {
    match e {
        Error::InvalidCutoff(_)
        | Error::InvalidLevel { .. }
        | Error::InvalidParameter { .. }
        | Error::InvalidState(_)
        | Error::Shape(_)
        | Error::Serialization(_) => PyValueError::new_err(e.to_string()),
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn cli_err(e: CliError) -> PyErr {
    match e {
        CliError::Parse { .. } | CliError::Validation { .. } => {
            PyValueError::new_err(e.to_string())
        }
        _ => PyRuntimeError::new_err(e.to_string()),
    }
}

fn cutoff(n_max: usize) -> PyResult<fock::FockCutoff> {
    fock::FockCutoff::new(n_max).map_err(core_err)
}

/// Single-mode density matrix on a truncated Fock space.
#[pyclass(
    name = "DensityMatrix",
    module = "repscatter",
    frozen,
    skip_from_py_object
)]
#[derive(Clone)]
struct PyDensityMatrix {
    inner: fock::DensityMatrix,
}

#[pymethods]
impl PyDensityMatrix {
    #[staticmethod]
    fn fock(n: usize, n_max: usize) -> PyResult<Self> {
        Ok(Self {
            inner: fock::fock_state(n, cutoff(n_max)?).map_err(core_err)?,
        })
    }

    /// Thermal state at inverse temperature `beta`.
    #[staticmethod]
    fn thermal(beta: f64, n_max: usize) -> PyResult<Self> {
        Ok(Self {
            inner: fock::thermal_state(beta, cutoff(n_max)?).map_err(core_err)?,
        })
    }

    #[staticmethod]
    fn thermal_with_mean(n_bar: f64, n_max: usize) -> PyResult<Self> {
        Ok(Self {
            inner: fock::thermal_state_with_mean(n_bar, cutoff(n_max)?).map_err(core_err)?,
        })
    }

    #[staticmethod]
    fn coherent(alpha: C64, n_max: usize) -> PyResult<Self> {
        Ok(Self {
            inner: fock::coherent_state(alpha, cutoff(n_max)?).map_err(core_err)?,
        })
    }

    /// Builds a state from a nested list of complex entries.
    #[staticmethod]
    fn from_rows(rows: Vec<Vec<C64>>) -> PyResult<Self> {
        let n = rows.len();
        if n < 2 || rows.iter().any(|r| r.len() != n) {
            return Err(PyValueError::new_err(
                "expected a square matrix of size at least 2",
            ));
        }
        let m = ndarray::Array2::from_shape_fn((n, n), |(i, j)| rows[i][j]);
        let layout = fock::ModeLayout::Single(cutoff(n - 1)?);
        Ok(Self {
            inner: fock::DensityMatrix::from_matrix(m, layout).map_err(core_err)?,
        })
    }

    #[staticmethod]
    fn from_json(text: &str) -> PyResult<Self> {
        Ok(Self {
            inner: fock::DensityMatrix::from_json(text).map_err(core_err)?,
        })
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(core_err)
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.cutoff().n_max()
    }

    fn rows(&self) -> Vec<Vec<C64>> {
        self.inner
            .entries()
            .outer_iter()
            .map(|r| r.to_vec())
            .collect()
    }

    fn populations(&self) -> Vec<f64> {
        self.inner.populations()
    }

    fn mean_photon_number(&self) -> f64 {
        self.inner.mean_photon_number()
    }

    fn purity(&self) -> f64 {
        measures::purity(&self.inner)
    }

    fn entropy(&self) -> PyResult<f64> {
        measures::von_neumann_entropy(&self.inner).map_err(core_err)
    }

    fn qcs_squared(&self) -> PyResult<f64> {
        measures::qcs_squared(&self.inner).map_err(core_err)
    }

    fn trace_distance(&self, other: &PyDensityMatrix) -> PyResult<f64> {
        measures::trace_distance(&self.inner, &other.inner).map_err(core_err)
    }

    fn __repr__(&self) -> String {
        format!(
            "DensityMatrix(n_max={}, mean_photon_number={:.6})",
            self.inner.cutoff().n_max(),
            self.inner.mean_photon_number()
        )
    }
}

/// Coupling angle and cutoff of one collision.
#[pyclass(
    name = "ChannelParams",
    module = "repscatter",
    frozen,
    skip_from_py_object
)]
#[derive(Clone, Copy)]
struct PyChannelParams {
    inner: ch::ChannelParams,
}

#[pymethods]
impl PyChannelParams {
    #[new]
    fn new(lam: f64, n_max: usize) -> PyResult<Self> {
        Ok(Self {
            inner: ch::ChannelParams::new(lam, cutoff(n_max)?).map_err(core_err)?,
        })
    }

    #[getter]
    fn lam(&self) -> f64 {
        self.inner.lambda()
    }

    #[getter]
    fn sin(&self) -> f64 {
        self.inner.sin()
    }

    #[getter]
    fn cos(&self) -> f64 {
        self.inner.cos()
    }

    #[getter]
    fn n_max(&self) -> usize {
        self.inner.cutoff().n_max()
    }
}

/// The reduced channel `ρ ↦ Tr_b[S (ρ ⊗ σ) S†]` for a fixed reservoir state.
#[pyclass(name = "CollisionChannel", module = "repscatter", frozen)]
struct PyCollisionChannel {
    inner: ch::CollisionChannel,
}

#[pymethods]
impl PyCollisionChannel {
    #[new]
    fn new(sigma: &PyDensityMatrix, params: &PyChannelParams) -> PyResult<Self> {
        Ok(Self {
            inner: ch::CollisionChannel::new(&sigma.inner, params.inner).map_err(core_err)?,
        })
    }

    fn apply(&self, rho: &PyDensityMatrix) -> PyResult<PyDensityMatrix> {
        Ok(PyDensityMatrix {
            inner: self.inner.apply(&rho.inner).map_err(core_err)?,
        })
    }

    #[getter]
    fn is_phase_covariant(&self) -> bool {
        self.inner.is_phase_covariant()
    }
}

#[pyclass(name = "Trajectory", module = "repscatter", frozen)]
struct PyTrajectory {
    inner: ch::RelaxationTrajectory,
}

#[pymethods]
impl PyTrajectory {
    #[getter]
    fn steps(&self) -> usize {
        self.inner.steps()
    }

    #[getter]
    fn converged_at(&self) -> Option<usize> {
        self.inner.converged_at
    }

    #[getter]
    fn distances(&self) -> Vec<f64> {
        self.inner.distances.clone()
    }

    #[getter]
    fn mean_photon(&self) -> Vec<f64> {
        self.inner.mean_photon.clone()
    }

    #[getter]
    fn purity(&self) -> Vec<f64> {
        self.inner.purity.clone()
    }

    fn final_state(&self) -> PyDensityMatrix {
        PyDensityMatrix {
            inner: self.inner.final_state().clone(),
        }
    }

    fn to_csv(&self) -> String {
        self.inner.to_csv()
    }
}

#[pyfunction]
#[pyo3(signature = (rho0, sigma, lam, tol = DEFAULT_TOL, max_steps = DEFAULT_MAX_STEPS))]
fn iterate_to_fixed_point(
    rho0: &PyDensityMatrix,
    sigma: &PyDensityMatrix,
    lam: f64,
    tol: f64,
    max_steps: usize,
) -> PyResult<PyTrajectory> {
    let params = ch::ChannelParams::new(lam, sigma.inner.cutoff()).map_err(core_err)?;
    let inner = ch::iterate_to_fixed_point(&rho0.inner, &sigma.inner, &params, tol, max_steps)
        .map_err(core_err)?;
    Ok(PyTrajectory { inner })
}

/// Fixed-K van Hove schedule `λ_k = 1/√K`, or the running one `1/√(k+1)`.
#[pyfunction]
#[pyo3(signature = (rho0, sigma, steps, running = false))]
fn run_van_hove(
    rho0: &PyDensityMatrix,
    sigma: &PyDensityMatrix,
    steps: usize,
    running: bool,
) -> PyResult<PyTrajectory> {
    let schedule = if running {
        ch::CouplingSchedule::van_hove_running(steps)
    } else {
        ch::CouplingSchedule::van_hove_fixed(steps)
    }
    .map_err(core_err)?;
    let inner = ch::run_schedule(&rho0.inner, &sigma.inner, &schedule, sigma.inner.cutoff())
        .map_err(core_err)?;
    Ok(PyTrajectory { inner })
}

/// Characteristic function `z ↦ Tr[ρ D(z)]`.
#[pyclass(name = "CharFn", module = "repscatter", frozen)]
struct PyCharFn {
    inner: charfn::CharFn,
}

#[pymethods]
impl PyCharFn {
    #[staticmethod]
    fn thermal(beta: f64) -> PyResult<Self> {
        Ok(Self {
            inner: charfn::CharFn::thermal(beta).map_err(core_err)?,
        })
    }

    #[staticmethod]
    fn fock(n: usize) -> Self {
        Self {
            inner: charfn::CharFn::fock(n),
        }
    }

    #[staticmethod]
    fn coherent(alpha: C64) -> Self {
        Self {
            inner: charfn::CharFn::coherent(alpha),
        }
    }

    #[staticmethod]
    fn of_state(rho: &PyDensityMatrix) -> PyResult<Self> {
        Ok(Self {
            inner: charfn::CharFn::of_state(&rho.inner).map_err(core_err)?,
        })
    }

    /// Fixed-point characteristic function as the infinite product over `sigma`.
    #[staticmethod]
    fn product_asymptotic(sigma: &PyCharFn, params: &PyChannelParams) -> PyResult<Self> {
        Ok(Self {
            inner: charfn::CharFn::product_asymptotic(sigma.inner.clone(), params.inner)
                .map_err(core_err)?,
        })
    }

    fn __call__(&self, z: C64) -> PyResult<C64> {
        self.inner.eval(z).map_err(core_err)
    }

    /// `(value, tail_bound)`.
    fn eval_with_bound(&self, z: C64) -> PyResult<(C64, f64)> {
        self.inner.eval_with_bound(z).map_err(core_err)
    }

    /// `(⟨a⟩, ⟨a†a⟩, Cov[a†,a], Cov[a,a])` by finite differences at 0.
    fn moments(&self) -> PyResult<(C64, f64, f64, C64)> {
        let m = charfn::moments_from_charfn(&self.inner).map_err(core_err)?;
        Ok((m.mean_a, m.mean_number, m.cov_adag_a, m.cov_aa))
    }

    fn quartic_coefficient(&self) -> PyResult<f64> {
        charfn::log_charfn_quartic_coeff(&self.inner).map_err(core_err)
    }
}

/// `(value, factors used, tail bound)` of the infinite product at `z`.
#[pyfunction]
#[pyo3(signature = (sigma, params, z, rel_tol = 1e-12))]
fn asymptotic_product(
    sigma: &PyCharFn,
    params: &PyChannelParams,
    z: C64,
    rel_tol: f64,
) -> PyResult<(C64, usize, f64)> {
    let v =
        charfn::asymptotic_product(&sigma.inner, &params.inner, z, rel_tol).map_err(core_err)?;
    Ok((v.value, v.truncation.k_terms, v.truncation.tail_bound))
}

#[pyfunction]
#[pyo3(signature = (n_points = charfn::GRID_POINTS, r_max = charfn::GRID_RADIUS))]
fn z_grid(n_points: usize, r_max: f64) -> Vec<C64> {
    charfn::z_grid(n_points, r_max)
}

/// Gaussian state in quadrature form `(V, d)`; the vacuum has `V = I`.
#[pyclass(name = "GaussianState", module = "repscatter", frozen)]
struct PyGaussianState {
    inner: gaussian::GaussianState,
}

#[pymethods]
impl PyGaussianState {
    #[new]
    fn new(v: [[f64; 2]; 2], d: [f64; 2]) -> PyResult<Self> {
        Ok(Self {
            inner: gaussian::GaussianState::new(v, d).map_err(core_err)?,
        })
    }

    #[staticmethod]
    fn thermal(n_bar: f64) -> PyResult<Self> {
        Ok(Self {
            inner: gaussian::GaussianState::thermal(n_bar).map_err(core_err)?,
        })
    }

    /// Gaussian with the first and second moments of `rho`.
    #[staticmethod]
    fn from_moments(rho: &PyDensityMatrix) -> PyResult<Self> {
        Ok(Self {
            inner: gaussian::gaussian_from_moments(&rho.inner).map_err(core_err)?,
        })
    }

    /// Fixed point of the channel for this Gaussian reservoir.
    fn asymptotic(&self, params: &PyChannelParams) -> Self {
        Self {
            inner: gaussian::asymptotic_gaussian(&self.inner, &params.inner),
        }
    }

    #[getter]
    fn covariance(&self) -> [[f64; 2]; 2] {
        self.inner.covariance()
    }

    #[getter]
    fn quadrature_mean(&self) -> [f64; 2] {
        self.inner.quadrature_mean()
    }

    fn mean_photon_number(&self) -> f64 {
        self.inner.mean_photon_number()
    }

    fn charfn(&self, z: C64) -> C64 {
        self.inner.charfn(z)
    }

    fn purity(&self) -> PyResult<f64> {
        gaussian::gaussian_purity(&self.inner).map_err(core_err)
    }

    fn entropy(&self) -> PyResult<f64> {
        gaussian::gaussian_entropy(&self.inner).map_err(core_err)
    }

    fn qcs_squared(&self) -> PyResult<f64> {
        measures::qcs_gaussian(&self.inner).map_err(core_err)
    }

    /// Inverse temperature if the state is thermal, else `None`.
    fn thermal_beta(&self) -> PyResult<Option<f64>> {
        gaussian::thermal_match(&self.inner, gaussian::THERMAL_MATCH_TOL).map_err(core_err)
    }

    fn to_json(&self) -> PyResult<String> {
        self.inner.to_json().map_err(core_err)
    }
}

/// Runs a scenario config (JSON text) and returns the results as JSON.
/// With `out_dir`, also writes the tables, results.json and manifest.json.
#[pyfunction]
#[pyo3(signature = (config_json, out_dir = None))]
fn run_config(
    py: Python<'_>,
    config_json: &str,
    out_dir: Option<std::path::PathBuf>,
) -> PyResult<String> {
    let mut config = repscatter_cli::parse_config(config_json).map_err(cli_err)?;
    if let Some(dir) = &out_dir {
        config.output_dir = dir.clone();
    }
    let record = py
        .detach(|| repscatter_cli::run_scenario(&config))
        .map_err(cli_err)?;
    if out_dir.is_some() {
        repscatter_cli::write_outputs(&record, &config.output_dir).map_err(cli_err)?;
    }
    Ok(serde_json::to_string(&record.results).expect("results serialize"))
}

#[pymodule]
fn repscatter(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyDensityMatrix>()?;
    m.add_class::<PyChannelParams>()?;
    m.add_class::<PyCollisionChannel>()?;
    m.add_class::<PyTrajectory>()?;
    m.add_class::<PyCharFn>()?;
    m.add_class::<PyGaussianState>()?;
    m.add_function(wrap_pyfunction!(iterate_to_fixed_point, m)?)?;
    m.add_function(wrap_pyfunction!(run_van_hove, m)?)?;
    m.add_function(wrap_pyfunction!(asymptotic_product, m)?)?;
    m.add_function(wrap_pyfunction!(z_grid, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
