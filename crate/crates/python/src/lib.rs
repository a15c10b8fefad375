//! Python bindings. Fields cross the boundary as lists of `complex`.

use std::path::PathBuf;

use num_complex::Complex64;
use pyo3::exceptions::{PyRuntimeError, PyValueError};
use pyo3::prelude::*;
use pyo3::types::PyDict;

use thermal_bec::cli::{self, RunOptions};
use thermal_bec::dynamics::{self, EvolutionPlan, Quench, TrajectoryEnsemble};
use thermal_bec::meanfield::{self, BalanceOptions, BalancedState, SystemParams};
use thermal_bec::observables::{self, ObservableSeries};
use thermal_bec::sampler::{GaussianSampler, SamplerOptions};
use thermal_bec::thermal::{Representation, ThermalEnsembleSpec, ZeroModeState};
use thermal_bec::Error;

fn to_py(err: Error) -> PyErr {
    match cli::exit_code(&err) {
        2 => PyValueError::new_err(err.to_string()),
        _ => PyRuntimeError::new_err(err.to_string()),
    }
}

fn representation(name: &str) -> PyResult<Representation> {
    match name {
        "wigner" => Ok(Representation::Wigner),
        "positive_p" | "positive-p" => Ok(Representation::PositiveP),
        other => Err(PyValueError::new_err(format!("unknown representation `{other}`"))),
    }
}

#[pyclass(name = "Lattice", module = "thermal_bec", frozen, from_py_object)]
#[derive(Clone)]
struct PyLattice(thermal_bec::Lattice);

#[pymethods]
impl PyLattice {
    #[new]
    fn new(dims: Vec<usize>, lengths: Vec<f64>) -> PyResult<Self> {
        thermal_bec::build_lattice(&dims, &lengths).map(PyLattice).map_err(to_py)
    }

    #[getter]
    fn dims(&self) -> Vec<usize> {
        self.0.dims().to_vec()
    }

    #[getter]
    fn lengths(&self) -> Vec<f64> {
        self.0.lengths().to_vec()
    }

    #[getter]
    fn dv(&self) -> f64 {
        self.0.dv()
    }

    #[getter]
    fn volume(&self) -> f64 {
        self.0.volume()
    }

    fn __len__(&self) -> usize {
        self.0.len()
    }

    fn kvec(&self, mode: usize) -> PyResult<Vec<f64>> {
        self.check(mode)?;
        Ok(self.0.kvec(mode).to_vec())
    }

    fn partner(&self, mode: usize) -> PyResult<usize> {
        self.check(mode)?;
        Ok(self.0.partner(mode))
    }

    fn to_modes(&self, field: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.to_modes(&field).map_err(to_py)
    }

    fn to_position(&self, modes: Vec<Complex64>) -> PyResult<Vec<Complex64>> {
        self.0.to_position(&modes).map_err(to_py)
    }

    fn __repr__(&self) -> String {
        format!("Lattice(dims={:?}, lengths={:?})", self.0.dims(), self.0.lengths())
    }
}

impl PyLattice {
    fn check(&self, mode: usize) -> PyResult<()> {
        if mode < self.0.len() {
            Ok(())
        } else {
            Err(PyValueError::new_err(format!("mode {mode} out of range for {} points", self.0.len())))
        }
    }
}

#[pyclass(name = "SystemParams", module = "thermal_bec", from_py_object)]
#[derive(Clone)]
struct PySystemParams(SystemParams);

#[pymethods]
impl PySystemParams {
    /// Uniform system; `omega` adds a harmonic trap.
    #[new]
    #[pyo3(signature = (lattice, g, n_target, mass = 1.0, hbar = 1.0, omega = None))]
    fn new(lattice: &PyLattice, g: f64, n_target: f64, mass: f64, hbar: f64, omega: Option<Vec<f64>>) -> PyResult<Self> {
        let mut params = SystemParams::homogeneous(&lattice.0, g, mass, hbar, n_target);
        if let Some(omega) = omega {
            params.potential = meanfield::harmonic_potential(&lattice.0, mass, &omega).map_err(to_py)?;
        }
        params.validate(&lattice.0).map_err(to_py)?;
        Ok(PySystemParams(params))
    }

    #[getter]
    fn g(&self) -> f64 {
        self.0.g
    }

    #[getter]
    fn n_target(&self) -> f64 {
        self.0.n_target
    }

    #[getter]
    fn potential(&self) -> Vec<f64> {
        self.0.potential.clone()
    }
}

#[pyclass(name = "ZeroMode", module = "thermal_bec", frozen, from_py_object)]
#[derive(Clone, Copy)]
struct PyZeroMode(ZeroModeState);

#[pymethods]
impl PyZeroMode {
    #[staticmethod]
    fn vacuum() -> Self {
        PyZeroMode(ZeroModeState::Vacuum)
    }

    #[staticmethod]
    fn thermal(occupation: f64) -> PyResult<Self> {
        let s = ZeroModeState::Thermal { occupation };
        s.validate().map_err(to_py)?;
        Ok(PyZeroMode(s))
    }

    #[staticmethod]
    #[pyo3(signature = (r, theta = 0.0))]
    fn squeezed(r: f64, theta: f64) -> PyResult<Self> {
        let s = ZeroModeState::Squeezed { r, theta };
        s.validate().map_err(to_py)?;
        Ok(PyZeroMode(s))
    }

    /// Symmetric-ordered `(P, Q)` covariance.
    fn quadrature_covariance(&self) -> [[f64; 2]; 2] {
        self.0.quadrature_covariance()
    }

    fn __repr__(&self) -> String {
        format!("ZeroMode({:?})", self.0)
    }
}

#[pyclass(name = "BalancedState", module = "thermal_bec", frozen)]
struct PyBalancedState {
    state: BalancedState,
    lattice: thermal_bec::Lattice,
    temperature: f64,
    zero_mode: ZeroModeState,
}

#[pymethods]
impl PyBalancedState {
    #[getter]
    fn n0(&self) -> f64 {
        self.state.condensate.number
    }

    #[getter]
    fn depletion(&self) -> f64 {
        self.state.depletion
    }

    #[getter]
    fn mu_e(&self) -> f64 {
        self.state.condensate.mu_e
    }

    #[getter]
    fn mu2(&self) -> f64 {
        self.state.condensate.mu2
    }

    #[getter]
    fn homogeneous(&self) -> bool {
        self.state.modes.homogeneous.is_some()
    }

    #[getter]
    fn psi0(&self) -> Vec<Complex64> {
        self.state.condensate.psi0.clone()
    }

    /// Quasiparticle energies, one per non-zero mode.
    #[getter]
    fn energies(&self) -> Vec<f64> {
        self.state.modes.energies()
    }

    #[getter]
    fn occupations(&self) -> Vec<f64> {
        self.state.occupations.clone()
    }

    /// Lattice index of each quasiparticle mode.
    #[getter]
    fn mode_indices(&self) -> Vec<usize> {
        self.state.modes.modes.iter().map(|m| m.index).collect()
    }

    /// `(|u|^2, |v|^2)` norms of each mode.
    fn mode_norms(&self) -> Vec<(f64, f64)> {
        self.state.modes.modes.iter().map(|m| m.norms(&self.lattice)).collect()
    }

    /// Draws `n_traj` Gaussian samples of the thermal state.
    #[pyo3(signature = (representation, n_traj, seed, phase_average = true))]
    fn sample(&self, py: Python<'_>, representation: &str, n_traj: usize, seed: u64, phase_average: bool) -> PyResult<PyEnsemble> {
        let spec = ThermalEnsembleSpec {
            temperature: self.temperature,
            zero_mode: self.zero_mode,
            representation: self::representation(representation)?,
            n_traj,
            seed,
            phase_average,
        };
        let sampler = GaussianSampler::new(
            &self.state.modes,
            &self.lattice,
            &self.state.occupations,
            &spec,
            &self.state.condensate,
            &SamplerOptions::default(),
        )
        .map_err(to_py)?;
        let samples = py.detach(|| sampler.draw_ensemble(seed, n_traj));
        TrajectoryEnsemble::from_samples(samples, &self.lattice)
            .map(PyEnsemble)
            .map_err(to_py)
    }
}

/// Solves the self-consistent condensate and Bogoliubov modes at `temperature`.
#[pyfunction]
#[pyo3(signature = (params, lattice, temperature, zero_mode = None))]
fn solve_number_balance(
    py: Python<'_>,
    params: &PySystemParams,
    lattice: &PyLattice,
    temperature: f64,
    zero_mode: Option<PyZeroMode>,
) -> PyResult<PyBalancedState> {
    let zero_mode = zero_mode.map_or(ZeroModeState::Vacuum, |z| z.0);
    let state = py
        .detach(|| meanfield::solve_number_balance(&params.0, &lattice.0, temperature, &zero_mode, &BalanceOptions::default()))
        .map_err(to_py)?;
    Ok(PyBalancedState {
        state,
        lattice: lattice.0.clone(),
        temperature,
        zero_mode,
    })
}

fn series<'py>(py: Python<'py>, s: &ObservableSeries) -> PyResult<Bound<'py, PyDict>> {
    let d = PyDict::new(py);
    d.set_item("times", &s.times)?;
    d.set_item("values", &s.values)?;
    d.set_item("stderr", &s.stderr)?;
    d.set_item("n_traj_effective", s.n_traj_effective)?;
    d.set_item("ordering", &s.ordering_applied)?;
    Ok(d)
}

#[pyclass(name = "Ensemble", module = "thermal_bec", frozen)]
struct PyEnsemble(TrajectoryEnsemble);

#[pymethods]
impl PyEnsemble {
    #[getter]
    fn representation(&self) -> String {
        self.0.representation.to_string()
    }

    #[getter]
    fn times(&self) -> Vec<f64> {
        self.0.times()
    }

    #[getter]
    fn n_traj(&self) -> usize {
        self.0.n_total
    }

    #[getter]
    fn escaped(&self) -> Vec<u64> {
        self.0.escaped.clone()
    }

    /// Fields `psi` of every surviving trajectory at snapshot `index`.
    fn fields(&self, index: usize) -> PyResult<Vec<Vec<Complex64>>> {
        let snap = self
            .0
            .snapshots
            .get(index)
            .ok_or_else(|| PyValueError::new_err(format!("no snapshot {index}")))?;
        Ok(snap.samples.iter().map(|s| s.psi.clone()).collect())
    }

    /// Evolves every trajectory; `quench_g` replaces `g` at `t = 0`.
    #[pyo3(signature = (params, dt, n_steps, save_every = 1, quench_g = None, escape_factor = 1e6, escape_fraction = 0.01))]
    #[allow(clippy::too_many_arguments)]
    fn evolve(
        &self,
        py: Python<'_>,
        params: &PySystemParams,
        dt: f64,
        n_steps: usize,
        save_every: usize,
        quench_g: Option<f64>,
        escape_factor: f64,
        escape_fraction: f64,
    ) -> PyResult<PyEnsemble> {
        let mut plan = EvolutionPlan::new(dt, n_steps, save_every, self.0.representation);
        plan.quench = quench_g.map(|g| Quench {
            g: Some(g),
            potential: None,
        });
        plan.escape_factor = escape_factor;
        plan.escape_fraction = escape_fraction;
        let last = self.0.snapshots.last().expect("ensembles hold a snapshot");
        let samples = last.samples.clone();
        py.detach(|| dynamics::run_ensemble(samples, &plan, &params.0, &self.0.lattice))
            .map(PyEnsemble)
            .map_err(to_py)
    }

    /// `{"zero_mode": series, "modes": [{"index", "k", ...series}]}`.
    fn mode_occupations<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let occ = observables::mode_occupations(&self.0).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("zero_mode", series(py, &occ.zero_mode)?)?;
        let modes = occ
            .modes
            .iter()
            .map(|m| {
                let d = series(py, &m.series)?;
                d.set_item("index", m.index)?;
                d.set_item("k", &m.kvec)?;
                Ok(d)
            })
            .collect::<PyResult<Vec<_>>>()?;
        out.set_item("modes", modes)?;
        Ok(out)
    }

    /// `{"mean": series, "variance": series}` of the total number.
    fn number_statistics<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        let n = observables::number_statistics(&self.0).map_err(to_py)?;
        let out = PyDict::new(py);
        out.set_item("mean", series(py, &n.mean)?)?;
        out.set_item("variance", series(py, &n.variance)?)?;
        Ok(out)
    }

    fn g2_zero<'py>(&self, py: Python<'py>) -> PyResult<Bound<'py, PyDict>> {
        series(py, &observables::g2_zero(&self.0).map_err(to_py)?)
    }
}

fn options(seed: Option<u64>, out_dir: Option<PathBuf>, cache_dir: Option<PathBuf>, workers: Option<usize>) -> RunOptions {
    RunOptions {
        seed,
        workers,
        out_dir,
        cache_dir,
    }
}

/// Runs a TOML config end to end; returns the output directory and files.
#[pyfunction]
#[pyo3(signature = (config, seed = None, out_dir = None, cache_dir = None, workers = None))]
fn run_config(
    py: Python<'_>,
    config: PathBuf,
    seed: Option<u64>,
    out_dir: Option<PathBuf>,
    cache_dir: Option<PathBuf>,
    workers: Option<usize>,
) -> PyResult<(PathBuf, Vec<String>, usize)> {
    let opts = options(seed, out_dir, cache_dir, workers);
    let s = py.detach(|| cli::run(&config, &opts)).map_err(to_py)?;
    Ok((s.out_dir, s.files, s.escaped))
}

/// `(errors, warnings)` for a TOML config.
#[pyfunction]
fn validate_config(config: PathBuf) -> (Vec<String>, Vec<String>) {
    let report = cli::validate(&config, &RunOptions::default());
    (report.errors, report.warnings)
}

/// Mode summary of a TOML config as a JSON string.
#[pyfunction]
#[pyo3(signature = (config, cache_dir = None))]
fn modes_json(py: Python<'_>, config: PathBuf, cache_dir: Option<PathBuf>) -> PyResult<String> {
    let opts = options(None, None, cache_dir, None);
    let summary = py.detach(|| cli::modes(&config, &opts)).map_err(to_py)?;
    serde_json::to_string(&summary).map_err(|e| PyRuntimeError::new_err(e.to_string()))
}

#[pyfunction]
fn bose_occupation(energy: f64, temperature: f64) -> f64 {
    thermal_bec::thermal::bose_occupation(energy, temperature)
}

#[pymodule]
#[pyo3(name = "thermal_bec")]
fn init(m: &Bound<'_, PyModule>) -> PyResult<()> {
    m.add_class::<PyLattice>()?;
    m.add_class::<PySystemParams>()?;
    m.add_class::<PyZeroMode>()?;
    m.add_class::<PyBalancedState>()?;
    m.add_class::<PyEnsemble>()?;
    m.add_function(wrap_pyfunction!(solve_number_balance, m)?)?;
    m.add_function(wrap_pyfunction!(run_config, m)?)?;
    m.add_function(wrap_pyfunction!(validate_config, m)?)?;
    m.add_function(wrap_pyfunction!(modes_json, m)?)?;
    m.add_function(wrap_pyfunction!(bose_occupation, m)?)?;
    m.add("__version__", env!("CARGO_PKG_VERSION"))?;
    Ok(())
}
