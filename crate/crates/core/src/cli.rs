//! `run`, `validate` and `modes` verbs behind the `thermal-bec` binary.
//!
//! Output bytes depend only on the config and seed: trajectories carry their
//! own RNG streams, parallel collections keep trajectory order, and nothing
//! host-specific (paths, timestamps, worker counts, cache state) is written.

use std::fmt::{self, Write as _};
use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{Format, Observable, ResolvedRun, RunConfig};
use crate::dynamics::{run_ensemble, TrajectoryEnsemble};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::meanfield::{solve_number_balance, BalancedState};
use crate::observables::{self, ObservableSeries};
use crate::sampler::{GaussianSampler, SamplerOptions};
use crate::thermal::Representation;

/// Command-line overrides shared by all verbs.
#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    pub seed: Option<u64>,
    /// Worker threads; `None` uses every available core.
    pub workers: Option<usize>,
    pub out_dir: Option<PathBuf>,
    pub cache_dir: Option<PathBuf>,
}

/// Process exit status for a failed verb.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config { .. } | Error::InvalidParameter { .. } | Error::InvalidLattice(_) | Error::ShapeMismatch { .. } => 2,
        Error::EscapeThreshold { .. } => 4,
        _ => 3,
    }
}

struct Loaded {
    config: RunConfig,
    run: ResolvedRun,
}

fn load(path: &Path, opts: &RunOptions) -> Result<Loaded> {
    let mut config = RunConfig::from_file(path)?;
    if let Some(seed) = opts.seed {
        config.thermal.seed = seed;
    }
    let base = path.parent().unwrap_or(Path::new("."));
    let run = config.resolve(base)?;
    Ok(Loaded { config, run })
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> Result<T> + Send) -> Result<T> {
    if workers == Some(0) {
        return Err(Error::config("--workers", "must be at least 1"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.unwrap_or(0))
        .build()
        .map_err(|e| Error::config("--workers", e.to_string()))?;
    pool.install(f)
}

/// Content hash of everything that determines the balanced mode set.
pub fn cache_key(config: &RunConfig, run: &ResolvedRun) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        lattice: &'a crate::config::LatticeSection,
        params: &'a crate::meanfield::SystemParams,
        temperature: f64,
        zero_mode: &'a crate::thermal::ZeroModeState,
        solver: &'a crate::meanfield::BalanceOptions,
    }
    let key = Key {
        lattice: &config.lattice,
        params: &run.params,
        temperature: run.spec.temperature,
        zero_mode: &run.spec.zero_mode,
        solver: &run.balance,
    };
    let bytes = serde_json::to_vec(&key).expect("key serializes");
    hex::encode(Sha256::digest(&bytes))
}

fn balanced_state(config: &RunConfig, run: &ResolvedRun, cache_dir: Option<&Path>) -> Result<BalancedState> {
    let solve = || {
        solve_number_balance(
            &run.params,
            &run.lattice,
            run.spec.temperature,
            &run.spec.zero_mode,
            &run.balance,
        )
    };
    let Some(dir) = cache_dir else {
        return solve();
    };
    let file = dir.join(format!("modes-{}.json", cache_key(config, run)));
    if let Ok(text) = fs::read_to_string(&file) {
        if let Ok(state) = serde_json::from_str::<BalancedState>(&text) {
            return Ok(state);
        }
    }
    let state = solve()?;
    fs::create_dir_all(dir)?;
    let tmp = file.with_extension("json.tmp");
    fs::write(&tmp, serde_json::to_vec(&state)?)?;
    fs::rename(&tmp, &file)?;
    Ok(state)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeRow {
    pub index: usize,
    /// Wave vector of plane-wave modes.
    pub k: Option<Vec<f64>>,
    pub energy: f64,
    pub u_norm: f64,
    pub v_norm: f64,
    pub occupation: f64,
}

/// Condensate and quasiparticle summary written by `run` and printed by
/// `modes`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModeSummary {
    pub homogeneous: bool,
    pub n0: f64,
    pub depletion: f64,
    pub mu_e: f64,
    pub mu1: f64,
    pub mu2: f64,
    pub alpha: Option<f64>,
    pub balance_iterations: usize,
    pub modes: Vec<ModeRow>,
}

impl ModeSummary {
    pub fn new(state: &BalancedState, lattice: &Lattice) -> Self {
        let homogeneous = state.modes.homogeneous.is_some();
        let modes = state
            .modes
            .modes
            .iter()
            .zip(&state.occupations)
            .map(|(m, &occupation)| {
                let (u, v) = m.norms(lattice);
                ModeRow {
                    index: m.index,
                    k: homogeneous.then(|| lattice.kvec(m.index).to_vec()),
                    energy: m.energy,
                    u_norm: u.sqrt(),
                    v_norm: v.sqrt(),
                    occupation,
                }
            })
            .collect();
        let c = &state.condensate;
        ModeSummary {
            homogeneous,
            n0: c.number,
            depletion: state.depletion,
            mu_e: c.mu_e,
            mu1: c.mu1,
            mu2: c.mu2,
            alpha: c.alpha,
            balance_iterations: state.iterations,
            modes,
        }
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("index\tenergy\tu_norm\tv_norm\toccupation\n");
        for m in &self.modes {
            let _ = writeln!(s, "{}\t{}\t{}\t{}\t{}", m.index, m.energy, m.u_norm, m.v_norm, m.occupation);
        }
        s
    }
}

/// `modes <config>`: solve and summarize the mode set only.
pub fn modes(config_path: &Path, opts: &RunOptions) -> Result<ModeSummary> {
    let loaded = load(config_path, opts)?;
    with_workers(opts.workers, || {
        let state = balanced_state(&loaded.config, &loaded.run, opts.cache_dir.as_deref())?;
        Ok(ModeSummary::new(&state, &loaded.run.lattice))
    })
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub errors: Vec<String>,
    pub warnings: Vec<String>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.errors.is_empty()
    }
}

impl fmt::Display for ValidationReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.errors.is_empty() && self.warnings.is_empty() {
            return writeln!(f, "ok");
        }
        for e in &self.errors {
            writeln!(f, "error: {e}")?;
        }
        for w in &self.warnings {
            writeln!(f, "warning: {w}")?;
        }
        Ok(())
    }
}

/// `validate <config>`: dry run with a stability audit. Never fails; problems
/// are listed in the report.
pub fn validate(config_path: &Path, opts: &RunOptions) -> ValidationReport {
    let mut report = ValidationReport::default();
    let loaded = match load(config_path, opts) {
        Ok(l) => l,
        Err(e) => {
            report.errors.push(e.to_string());
            return report;
        }
    };
    let state = match with_workers(opts.workers, || {
        balanced_state(&loaded.config, &loaded.run, opts.cache_dir.as_deref())
    }) {
        Ok(s) => s,
        Err(e) => {
            report.errors.push(e.to_string());
            return report;
        }
    };
    let eps_max = state.modes.energies().into_iter().fold(0.0, f64::max);
    let run = &loaded.run;
    if run.spec.temperature > eps_max {
        report.warnings.push(format!(
            "temperature {} exceeds the largest mode energy {eps_max}; the lattice cutoff is too low",
            run.spec.temperature
        ));
    }
    let ratio = run.plan.dt * eps_max / run.params.hbar;
    if ratio > 0.1 {
        report
            .warnings
            .push(format!("dt * eps_max / hbar = {ratio} exceeds 0.1; the time step is too coarse"));
    }
    report
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EscapeReport {
    pub representation: Representation,
    pub total: usize,
    pub escaped: usize,
    pub threshold: f64,
    pub trajectories: Vec<u64>,
}

/// Result of a completed `run`.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub out_dir: PathBuf,
    pub files: Vec<String>,
    pub escaped: usize,
}

#[derive(Serialize)]
struct Manifest<'a> {
    program: &'static str,
    version: &'static str,
    seed: u64,
    cache_key: String,
    config: &'a RunConfig,
    files: &'a [String],
}

#[derive(Serialize)]
struct Summary<'a> {
    representation: Representation,
    n_traj: usize,
    n_traj_effective: usize,
    escaped: usize,
    times: Vec<f64>,
    modes: &'a ModeSummary,
    occupations: Option<&'a observables::OccupationSpectrum>,
    number: Option<&'a observables::NumberSeries>,
    g2: Option<&'a ObservableSeries>,
    g2_unavailable: Option<String>,
    quadratures: Option<&'a [observables::QuadratureVariance]>,
    quadratures_unavailable: Option<String>,
}

struct Writer {
    dir: PathBuf,
    files: Vec<String>,
}

impl Writer {
    fn put(&mut self, name: &str, contents: &[u8]) -> Result<()> {
        fs::write(self.dir.join(name), contents)?;
        self.files.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        let mut bytes = serde_json::to_vec_pretty(value)?;
        bytes.push(b'\n');
        self.put(name, &bytes)
    }
}

fn series_tsv(series: &ObservableSeries) -> String {
    let mut s = format!("# {}\ntime\tvalue\tstderr\n", series.ordering_applied);
    for ((t, v), e) in series.times.iter().zip(&series.values).zip(&series.stderr) {
        let _ = writeln!(s, "{t}\t{v}\t{e}");
    }
    s
}

/// `run <config>`: the full pipeline, writing every output file.
pub fn run(config_path: &Path, opts: &RunOptions) -> Result<RunSummary> {
    let loaded = load(config_path, opts)?;
    let out_dir = opts
        .out_dir
        .clone()
        .unwrap_or_else(|| loaded.config.output.directory.clone());
    fs::create_dir_all(&out_dir)?;
    let mut writer = Writer {
        dir: out_dir.clone(),
        files: Vec::new(),
    };
    with_workers(opts.workers, || pipeline(&loaded, opts, &mut writer))?;
    Ok(RunSummary {
        out_dir,
        escaped: 0,
        files: writer.files,
    })
    .map(|mut s| {
        s.escaped = escaped_count(&s.out_dir);
        s
    })
}

fn escaped_count(dir: &Path) -> usize {
    fs::read_to_string(dir.join("escapes.json"))
        .ok()
        .and_then(|t| serde_json::from_str::<serde_json::Value>(&t).ok())
        .and_then(|v| v["escaped"].as_u64())
        .map_or(0, |n| n as usize)
}

fn pipeline(loaded: &Loaded, opts: &RunOptions, w: &mut Writer) -> Result<()> {
    let Loaded { config, run } = loaded;
    let out = &config.output;
    let tsv = out.formats.contains(&Format::Tsv);
    let json = out.formats.contains(&Format::Json);
    let wants = |o: Observable| out.observables.contains(&o);

    let state = balanced_state(config, run, opts.cache_dir.as_deref())?;
    let summary = ModeSummary::new(&state, &run.lattice);
    if json {
        w.json("modes.json", &summary)?;
    }
    if tsv {
        w.put("modes.tsv", summary.to_tsv().as_bytes())?;
    }

    let sampler = GaussianSampler::new(
        &state.modes,
        &run.lattice,
        &state.occupations,
        &run.spec,
        &state.condensate,
        &SamplerOptions::default(),
    )?;
    let samples = sampler.draw_ensemble(run.spec.seed, run.spec.n_traj);
    let evolved = run_ensemble(samples, &run.plan, &run.params, &run.lattice);
    if run.spec.representation == Representation::PositiveP {
        let report = match &evolved {
            Ok(e) => EscapeReport {
                representation: e.representation,
                total: e.n_total,
                escaped: e.escaped.len(),
                threshold: run.plan.escape_fraction,
                trajectories: e.escaped.clone(),
            },
            Err(Error::EscapeThreshold { escaped, total, threshold }) => EscapeReport {
                representation: Representation::PositiveP,
                total: *total,
                escaped: *escaped,
                threshold: *threshold,
                trajectories: Vec::new(),
            },
            Err(_) => EscapeReport {
                representation: Representation::PositiveP,
                total: run.spec.n_traj,
                escaped: 0,
                threshold: run.plan.escape_fraction,
                trajectories: Vec::new(),
            },
        };
        w.json("escapes.json", &report)?;
    }
    let ensemble: TrajectoryEnsemble = evolved?;

    let occupations = wants(Observable::Occupations)
        .then(|| observables::mode_occupations(&ensemble))
        .transpose()?;
    let number = wants(Observable::Number)
        .then(|| observables::number_statistics(&ensemble))
        .transpose()?;
    let (g2, g2_unavailable) = if wants(Observable::G2) {
        match observables::g2_zero(&ensemble) {
            Ok(s) => (Some(s), None),
            Err(Error::ZeroDensity) => (None, Some(Error::ZeroDensity.to_string())),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };
    let last = ensemble.snapshots.len() - 1;
    let (quadratures, quadratures_unavailable) = if wants(Observable::Quadratures) {
        match observables::quadrature_variances(&ensemble, &state.modes, last) {
            Ok(q) => (Some(q), None),
            Err(Error::NotHomogeneous) => (None, Some(Error::NotHomogeneous.to_string())),
            Err(e) => return Err(e),
        }
    } else {
        (None, None)
    };

    if tsv {
        if let Some(occ) = &occupations {
            w.put("zero_mode_occupation.tsv", series_tsv(&occ.zero_mode).as_bytes())?;
            let mut s = format!("# {}\ntime\tindex\tk\tvalue\tstderr\n", occ.zero_mode.ordering_applied);
            for (i, t) in occ.zero_mode.times.iter().enumerate() {
                for m in &occ.modes {
                    let k: Vec<String> = m.kvec.iter().map(f64::to_string).collect();
                    let _ = writeln!(
                        s,
                        "{t}\t{}\t{}\t{}\t{}",
                        m.index,
                        k.join(","),
                        m.series.values[i],
                        m.series.stderr[i]
                    );
                }
            }
            w.put("occupations.tsv", s.as_bytes())?;
        }
        if let Some(n) = &number {
            let mut s = format!(
                "# N: {}\n# dN2: {}\ntime\tN\tN_stderr\tdN2\tdN2_stderr\n",
                n.mean.ordering_applied, n.variance.ordering_applied
            );
            for i in 0..n.mean.times.len() {
                let _ = writeln!(
                    s,
                    "{}\t{}\t{}\t{}\t{}",
                    n.mean.times[i], n.mean.values[i], n.mean.stderr[i], n.variance.values[i], n.variance.stderr[i]
                );
            }
            w.put("number.tsv", s.as_bytes())?;
        }
        if let Some(g) = &g2 {
            w.put("g2.tsv", series_tsv(g).as_bytes())?;
        }
        if let Some(q) = &quadratures {
            let mut s = format!(
                "# time {}\nindex\tbranch\tvar_p\tvar_p_stderr\tvar_q\tvar_q_stderr\n",
                ensemble.snapshots[last].time
            );
            for row in q {
                let branch = match row.branch {
                    observables::Branch::Plus => "+",
                    observables::Branch::Minus => "-",
                };
                let _ = writeln!(
                    s,
                    "{}\t{branch}\t{}\t{}\t{}\t{}",
                    row.index, row.var_p.value, row.var_p.stderr, row.var_q.value, row.var_q.stderr
                );
            }
            w.put("quadratures.tsv", s.as_bytes())?;
        }
    }
    if json {
        let n_eff = ensemble.snapshots[0].samples.len();
        let summary = Summary {
            representation: ensemble.representation,
            n_traj: ensemble.n_total,
            n_traj_effective: n_eff,
            escaped: ensemble.escaped.len(),
            times: ensemble.times(),
            modes: &summary,
            occupations: occupations.as_ref(),
            number: number.as_ref(),
            g2: g2.as_ref(),
            g2_unavailable,
            quadratures: quadratures.as_deref(),
            quadratures_unavailable,
        };
        w.json("summary.json", &summary)?;
    }

    let mut files = w.files.clone();
    files.push("manifest.json".to_string());
    let manifest = Manifest {
        program: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        seed: run.spec.seed,
        cache_key: cache_key(config, run),
        config,
        files: &files,
    };
    w.json("manifest.json", &manifest)
}
