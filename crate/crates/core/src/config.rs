//! Declarative run configuration.
//!
//! ```toml
//! [lattice]
//! dims = [32]
//! lengths = [32.0]
//!
//! [physics]
//! g = 0.05
//! n_target = 200.0
//! potential = { kind = "harmonic", omega = [0.1] }
//!
//! [thermal]
//! temperature = 0.5
//! representation = "wigner"
//! n_traj = 1000
//! seed = 7
//! zero_mode = { kind = "squeezed", r = 0.5 }
//!
//! [quench]
//! g = 0.1
//!
//! [evolution]
//! dt = 0.01
//! n_steps = 100
//! save_every = 10
//!
//! [output]
//! directory = "out"
//! ```
//!
//! Unknown keys are rejected everywhere.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::bogoliubov::BdgOptions;
use crate::dynamics::{EvolutionPlan, Quench};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::meanfield::{harmonic_potential, BalanceOptions, StationaryOptions, SystemParams};
use crate::thermal::{Representation, ThermalEnsembleSpec, ZeroModeState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub lattice: LatticeSection,
    pub physics: PhysicsSection,
    pub thermal: ThermalSection,
    #[serde(default)]
    pub quench: Option<QuenchSection>,
    pub evolution: EvolutionSection,
    #[serde(default)]
    pub output: OutputSection,
    #[serde(default)]
    pub solver: SolverSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSection {
    pub dims: Vec<usize>,
    pub lengths: Vec<f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum PotentialSpec {
    #[default]
    None,
    /// Trap frequency per axis.
    Harmonic { omega: Vec<f64> },
    /// Whitespace-separated values in row-major lattice order. Relative
    /// paths resolve against the config file's directory.
    Tabulated { file: PathBuf },
}


#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhysicsSection {
    pub g: f64,
    #[serde(default = "one", alias = "m")]
    pub mass: f64,
    #[serde(default = "one")]
    pub hbar: f64,
    #[serde(alias = "N_target")]
    pub n_target: f64,
    #[serde(default)]
    pub potential: PotentialSpec,
}

fn one() -> f64 {
    1.0
}

fn yes() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalSection {
    pub temperature: f64,
    #[serde(default)]
    pub zero_mode: ZeroModeState,
    pub representation: Representation,
    pub n_traj: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "yes")]
    pub phase_average: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QuenchSection {
    #[serde(default)]
    pub g: Option<f64>,
    #[serde(default)]
    pub potential: Option<PotentialSpec>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolutionSection {
    pub dt: f64,
    pub n_steps: usize,
    #[serde(default = "one_step")]
    pub save_every: usize,
    #[serde(default = "escape_fraction")]
    pub escape_fraction: f64,
    #[serde(default = "escape_factor")]
    pub escape_factor: f64,
}

fn one_step() -> usize {
    1
}

fn escape_fraction() -> f64 {
    0.01
}

fn escape_factor() -> f64 {
    1e6
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    Tsv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Observable {
    Occupations,
    Number,
    G2,
    Quadratures,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OutputSection {
    #[serde(default = "default_directory")]
    pub directory: PathBuf,
    #[serde(default = "default_formats")]
    pub formats: Vec<Format>,
    #[serde(default = "default_observables")]
    pub observables: Vec<Observable>,
}

fn default_directory() -> PathBuf {
    PathBuf::from("thermal-bec-out")
}

fn default_formats() -> Vec<Format> {
    vec![Format::Tsv, Format::Json]
}

fn default_observables() -> Vec<Observable> {
    vec![
        Observable::Occupations,
        Observable::Number,
        Observable::G2,
        Observable::Quadratures,
    ]
}

impl Default for OutputSection {
    fn default() -> Self {
        OutputSection {
            directory: default_directory(),
            formats: default_formats(),
            observables: default_observables(),
        }
    }
}

/// Numerical settings of the stationary, Bogoliubov and balance solvers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SolverSection {
    pub balance_tol: f64,
    pub balance_max_iter: usize,
    pub stationary_tol: f64,
    pub stationary_max_iter: usize,
    pub n_modes: Option<usize>,
    pub force_numeric: bool,
}

impl Default for SolverSection {
    fn default() -> Self {
        let b = BalanceOptions::default();
        SolverSection {
            balance_tol: b.tol,
            balance_max_iter: b.max_iter,
            stationary_tol: b.stationary.tol,
            stationary_max_iter: b.stationary.max_iter,
            n_modes: b.bdg.n_modes,
            force_numeric: b.bdg.force_numeric,
        }
    }
}

impl SolverSection {
    pub fn balance_options(&self) -> BalanceOptions {
        let defaults = BalanceOptions::default();
        BalanceOptions {
            tol: self.balance_tol,
            max_iter: self.balance_max_iter,
            stationary: StationaryOptions {
                tol: self.stationary_tol,
                max_iter: self.stationary_max_iter,
            },
            bdg: BdgOptions {
                n_modes: self.n_modes,
                force_numeric: self.force_numeric,
                ..defaults.bdg
            },
            ..defaults
        }
    }
}

/// Everything the pipeline needs, checked and with potentials sampled.
#[derive(Debug, Clone)]
pub struct ResolvedRun {
    pub lattice: Lattice,
    pub params: SystemParams,
    pub spec: ThermalEnsembleSpec,
    pub plan: EvolutionPlan,
    pub balance: BalanceOptions,
}

fn within(key: &str) -> impl Fn(Error) -> Error + '_ {
    move |e| match e {
        Error::InvalidParameter { name, reason } => Error::config(format!("{key}.{name}"), reason),
        Error::InvalidLattice(reason) => Error::config(key, reason),
        Error::ShapeMismatch { expected, actual } => {
            Error::config(key, format!("expected {expected} values, got {actual}"))
        }
        other => other,
    }
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let reason = e.message().to_string();
            let key = reason
                .split('`')
                .nth(1)
                .filter(|_| reason.starts_with("unknown field"))
                .map_or_else(|| "config".to_string(), str::to_string);
            Error::config(key, reason)
        })
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::config("config", format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml(&text)
    }

    /// Validates every section. `base` anchors relative file paths.
    pub fn resolve(&self, base: &Path) -> Result<ResolvedRun> {
        let lattice = Lattice::new(&self.lattice.dims, &self.lattice.lengths).map_err(within("lattice"))?;
        let p = &self.physics;
        let mut params = SystemParams::homogeneous(&lattice, p.g, p.mass, p.hbar, p.n_target);
        params.potential = sample_potential(&p.potential, &lattice, p.mass, base, "physics.potential")?;
        params.validate(&lattice).map_err(within("physics"))?;

        let t = &self.thermal;
        let spec = ThermalEnsembleSpec {
            temperature: t.temperature,
            zero_mode: t.zero_mode,
            representation: t.representation,
            n_traj: t.n_traj,
            seed: t.seed,
            phase_average: t.phase_average,
        };
        spec.validate().map_err(within("thermal"))?;

        let e = &self.evolution;
        let mut plan = EvolutionPlan::new(e.dt, e.n_steps, e.save_every, t.representation);
        plan.escape_fraction = e.escape_fraction;
        plan.escape_factor = e.escape_factor;
        plan.validate().map_err(within("evolution"))?;
        if let Some(q) = &self.quench {
            let potential = match &q.potential {
                Some(spec) => Some(sample_potential(spec, &lattice, p.mass, base, "quench.potential")?),
                None => None,
            };
            let quench = Quench { g: q.g, potential };
            quench.apply(&params).validate(&lattice).map_err(within("quench"))?;
            plan.quench = Some(quench);
        }

        let s = &self.solver;
        if !(s.balance_tol > 0.0 && s.stationary_tol > 0.0) {
            return Err(Error::config("solver", "tolerances must be positive"));
        }
        if self.output.formats.is_empty() {
            return Err(Error::config("output.formats", "at least one format is required"));
        }
        Ok(ResolvedRun {
            lattice,
            params,
            spec,
            plan,
            balance: s.balance_options(),
        })
    }
}

fn sample_potential(spec: &PotentialSpec, lattice: &Lattice, mass: f64, base: &Path, key: &str) -> Result<Vec<f64>> {
    match spec {
        PotentialSpec::None => Ok(vec![0.0; lattice.len()]),
        PotentialSpec::Harmonic { omega } => {
            harmonic_potential(lattice, mass, omega).map_err(|e| Error::config(format!("{key}.omega"), e.to_string()))
        }
        PotentialSpec::Tabulated { file } => {
            let path = base.join(file);
            let text = std::fs::read_to_string(&path)
                .map_err(|e| Error::config(format!("{key}.file"), format!("cannot read {}: {e}", path.display())))?;
            let values = text
                .split_whitespace()
                .map(str::parse::<f64>)
                .collect::<std::result::Result<Vec<f64>, _>>()
                .map_err(|e| Error::config(format!("{key}.file"), e.to_string()))?;
            if values.len() != lattice.len() {
                return Err(Error::config(
                    format!("{key}.file"),
                    format!("expected {} values, found {}", lattice.len(), values.len()),
                ));
            }
            if values.iter().any(|v| !v.is_finite()) {
                return Err(Error::config(format!("{key}.file"), "values must be finite"));
            }
            Ok(values)
        }
    }
}
