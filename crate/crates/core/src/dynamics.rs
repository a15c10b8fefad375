//! Split-step evolution of phase-space trajectories.
//!
//! Wigner fields follow `i hbar dPsi/dt = [-hbar^2 lap/2m + U + g|Psi|^2] Psi`.
//! Positive-P pairs follow the coupled Ito equations
//!
//! ```text
//! dPsi  = -i[-hbar lap/2m + g~ Psi+ Psi + U~] Psi  dt + i sqrt(i g~)  Psi  dW
//! dPsi+ = +i[-hbar lap/2m + g~ Psi+ Psi + U~] Psi+ dt - i sqrt(-i g~) Psi+ dW+
//! ```
//!
//! with `g~ = g/hbar`, `U~ = U/hbar` and independent real increments of
//! variance `dt/dV` per lattice point. The kinetic substep is exact in mode
//! space; the local substep integrates the linear SDE with `Psi+ Psi` frozen,
//! which is first order in `dt`.

use num_complex::Complex64;
use rand::Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::meanfield::SystemParams;
use crate::sampler::{FieldSample, RngStream};
use crate::thermal::Representation;

/// Parameter change applied at `t = 0`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Quench {
    pub g: Option<f64>,
    pub potential: Option<Vec<f64>>,
}

impl Quench {
    pub fn apply(&self, params: &SystemParams) -> SystemParams {
        let mut out = params.clone();
        if let Some(g) = self.g {
            out.g = g;
        }
        if let Some(u) = &self.potential {
            out.potential = u.clone();
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvolutionPlan {
    pub dt: f64,
    pub n_steps: usize,
    /// Snapshot stride; the final step is always recorded.
    pub save_every: usize,
    pub scheme: Representation,
    pub quench: Option<Quench>,
    /// Largest tolerated fraction of escaped trajectories.
    pub escape_fraction: f64,
    /// A trajectory escapes once `|Psi+ Psi|` exceeds this multiple of its
    /// initial peak density.
    pub escape_factor: f64,
}

impl EvolutionPlan {
    pub fn new(dt: f64, n_steps: usize, save_every: usize, scheme: Representation) -> Self {
        EvolutionPlan {
            dt,
            n_steps,
            save_every,
            scheme,
            quench: None,
            escape_fraction: 0.01,
            escape_factor: 1e6,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        if self.save_every == 0 {
            return Err(Error::param("save_every", "must be at least 1"));
        }
        if !(0.0..=1.0).contains(&self.escape_fraction) {
            return Err(Error::param("escape_fraction", "must lie in [0, 1]"));
        }
        if !(self.escape_factor > 1.0) {
            return Err(Error::param("escape_factor", "must exceed 1"));
        }
        Ok(())
    }

    /// Step indices at which snapshots are recorded.
    pub fn snapshot_steps(&self) -> Vec<usize> {
        let mut steps: Vec<usize> = (0..=self.n_steps).step_by(self.save_every.max(1)).collect();
        if steps.last() != Some(&self.n_steps) {
            steps.push(self.n_steps);
        }
        steps
    }
}

/// Precomputed propagators for one parameter set and time step.
#[derive(Debug, Clone)]
pub struct Integrator {
    lattice: Lattice,
    dt: f64,
    /// `exp(-i E_k dt / 2 hbar)`.
    half_kinetic: Vec<Complex64>,
    g_tilde: f64,
    u_tilde: Vec<f64>,
}

impl Integrator {
    pub fn new(params: &SystemParams, lattice: &Lattice, dt: f64) -> Result<Self> {
        params.validate(lattice)?;
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::param("dt", "must be positive"));
        }
        let half_kinetic = params
            .kinetic_energies(lattice)
            .iter()
            .map(|e| Complex64::from_polar(1.0, -0.5 * e * dt / params.hbar))
            .collect();
        Ok(Integrator {
            lattice: lattice.clone(),
            dt,
            half_kinetic,
            g_tilde: params.g / params.hbar,
            u_tilde: params.potential.iter().map(|u| u / params.hbar).collect(),
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    fn kinetic(&self, field: &mut [Complex64], conjugate: bool) {
        self.lattice.to_modes_inplace(field);
        if conjugate {
            field.iter_mut().zip(&self.half_kinetic).for_each(|(z, p)| *z *= p.conj());
        } else {
            field.iter_mut().zip(&self.half_kinetic).for_each(|(z, p)| *z *= p);
        }
        self.lattice.to_position_inplace(field);
    }

    /// One Strang step of the Wigner flow.
    pub fn step_wigner(&self, psi: &mut [Complex64]) {
        self.kinetic(psi, false);
        for (z, u) in psi.iter_mut().zip(&self.u_tilde) {
            let phase = (self.g_tilde * z.norm_sqr() + u) * self.dt;
            *z *= Complex64::from_polar(1.0, -phase);
        }
        self.kinetic(psi, false);
    }

    /// One positive-P step with given unit-variance normals `z`, `z_plus`
    /// (one per lattice point each).
    pub fn step_positive_p_with_noise(
        &self,
        psi: &mut [Complex64],
        psi_plus: &mut [Complex64],
        z: &[f64],
        z_plus: &[f64],
    ) {
        self.kinetic(psi, false);
        self.kinetic(psi_plus, true);

        let i = Complex64::i();
        let g = self.g_tilde;
        // c^2 = -i g~, c+^2 = +i g~.
        let c = i * (i * g).sqrt();
        let c_plus = -i * (-i * g).sqrt();
        let dv = self.lattice.dv();
        let amplitude = (self.dt / dv).sqrt();
        let ito = 0.5 * self.dt / dv;
        for x in 0..psi.len() {
            let n = psi_plus[x] * psi[x];
            let drift = -i * (g * n + self.u_tilde[x]) * self.dt;
            psi[x] *= (drift + c * (amplitude * z[x]) - c * c * ito).exp();
            psi_plus[x] *= (-drift + c_plus * (amplitude * z_plus[x]) - c_plus * c_plus * ito).exp();
        }

        self.kinetic(psi, false);
        self.kinetic(psi_plus, true);
    }

    pub fn step_positive_p<R: Rng>(&self, psi: &mut [Complex64], psi_plus: &mut [Complex64], rng: &mut R) {
        let m = psi.len();
        let z: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        let z_plus: Vec<f64> = (0..m).map(|_| rng.sample(StandardNormal)).collect();
        self.step_positive_p_with_noise(psi, psi_plus, &z, &z_plus);
    }
}

fn all_finite(field: &[Complex64]) -> bool {
    field.iter().all(|z| z.re.is_finite() && z.im.is_finite())
}

/// Advances a Wigner sample by one step.
pub fn step_wigner(sample: &mut FieldSample, params: &SystemParams, lattice: &Lattice, dt: f64) -> Result<()> {
    if sample.psi_plus.is_some() {
        return Err(Error::RepresentationMismatch("positive-P sample in a Wigner step".into()));
    }
    lattice.check_shape(sample.psi.len())?;
    Integrator::new(params, lattice, dt)?.step_wigner(&mut sample.psi);
    if !all_finite(&sample.psi) {
        return Err(Error::BlowUp(sample.traj_id as usize));
    }
    Ok(())
}

/// Advances a positive-P sample by one step with fresh noise from `rng`.
pub fn step_positive_p<R: Rng>(
    sample: &mut FieldSample,
    params: &SystemParams,
    lattice: &Lattice,
    dt: f64,
    rng: &mut R,
) -> Result<()> {
    lattice.check_shape(sample.psi.len())?;
    let integrator = Integrator::new(params, lattice, dt)?;
    let Some(psi_plus) = sample.psi_plus.as_mut() else {
        return Err(Error::RepresentationMismatch("Wigner sample in a positive-P step".into()));
    };
    integrator.step_positive_p(&mut sample.psi, psi_plus, rng);
    if !all_finite(&sample.psi) || !all_finite(psi_plus) {
        return Err(Error::BlowUp(sample.traj_id as usize));
    }
    Ok(())
}

/// Discrete energy `sum_k E_k |alpha_k|^2 + sum_x (U |Psi|^2 + g|Psi|^4/2) dV`.
pub fn energy(psi: &[Complex64], params: &SystemParams, lattice: &Lattice) -> Result<f64> {
    let modes = lattice.to_modes(psi)?;
    let kinetic: f64 = modes
        .iter()
        .zip(params.kinetic_energies(lattice))
        .map(|(a, e)| e * a.norm_sqr())
        .sum();
    let local: f64 = psi
        .iter()
        .zip(&params.potential)
        .map(|(z, u)| {
            let n = z.norm_sqr();
            u * n + 0.5 * params.g * n * n
        })
        .sum::<f64>()
        * lattice.dv();
    Ok(kinetic + local)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub time: f64,
    /// Surviving trajectories in ascending `traj_id` order.
    pub samples: Vec<FieldSample>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryEnsemble {
    pub representation: Representation,
    pub lattice: Lattice,
    pub snapshots: Vec<Snapshot>,
    /// Ids of positive-P trajectories dropped after escaping.
    pub escaped: Vec<u64>,
    pub n_total: usize,
}

impl TrajectoryEnsemble {
    /// Single-snapshot ensemble at `t = 0`.
    pub fn from_samples(samples: Vec<FieldSample>, lattice: &Lattice) -> Result<Self> {
        let representation = common_representation(&samples)?;
        Ok(TrajectoryEnsemble {
            representation,
            lattice: lattice.clone(),
            n_total: samples.len(),
            snapshots: vec![Snapshot { time: 0.0, samples }],
            escaped: Vec::new(),
        })
    }

    pub fn times(&self) -> Vec<f64> {
        self.snapshots.iter().map(|s| s.time).collect()
    }
}

fn common_representation(samples: &[FieldSample]) -> Result<Representation> {
    let first = samples
        .first()
        .ok_or_else(|| Error::param("samples", "ensemble is empty"))?
        .representation();
    if samples.iter().any(|s| s.representation() != first) {
        return Err(Error::RepresentationMismatch("ensemble mixes Wigner and positive-P samples".into()));
    }
    Ok(first)
}

enum Outcome {
    Done(Vec<FieldSample>),
    Escaped(u64),
}

/// Evolves every trajectory under the (possibly quenched) parameters.
/// Positive-P trajectories that escape are dropped from all snapshots.
pub fn run_ensemble(
    samples: Vec<FieldSample>,
    plan: &EvolutionPlan,
    params: &SystemParams,
    lattice: &Lattice,
) -> Result<TrajectoryEnsemble> {
    plan.validate()?;
    let representation = common_representation(&samples)?;
    if representation != plan.scheme {
        return Err(Error::RepresentationMismatch(format!(
            "plan uses {} but samples are {}",
            plan.scheme, representation
        )));
    }
    for s in &samples {
        lattice.check_shape(s.psi.len())?;
    }
    let evolved_params = match &plan.quench {
        Some(q) => q.apply(params),
        None => params.clone(),
    };
    let integrator = Integrator::new(&evolved_params, lattice, plan.dt)?;
    let steps = plan.snapshot_steps();
    let n_total = samples.len();

    let outcomes: Vec<Result<Outcome>> = samples
        .into_par_iter()
        .map(|sample| evolve_one(sample, &integrator, plan, lattice, &steps))
        .collect();

    let mut per_traj = Vec::with_capacity(n_total);
    let mut escaped = Vec::new();
    for outcome in outcomes {
        match outcome? {
            Outcome::Done(snaps) => per_traj.push(snaps),
            Outcome::Escaped(id) => escaped.push(id),
        }
    }
    if escaped.len() as f64 > plan.escape_fraction * n_total as f64 {
        return Err(Error::EscapeThreshold {
            escaped: escaped.len(),
            total: n_total,
            threshold: plan.escape_fraction,
        });
    }

    let mut snapshots: Vec<Snapshot> = steps
        .iter()
        .map(|&s| Snapshot {
            time: s as f64 * plan.dt,
            samples: Vec::with_capacity(per_traj.len()),
        })
        .collect();
    for traj in per_traj {
        for (snap, sample) in snapshots.iter_mut().zip(traj) {
            snap.samples.push(sample);
        }
    }
    Ok(TrajectoryEnsemble {
        representation,
        lattice: lattice.clone(),
        snapshots,
        escaped,
        n_total,
    })
}

fn evolve_one(
    mut sample: FieldSample,
    integrator: &Integrator,
    plan: &EvolutionPlan,
    lattice: &Lattice,
    steps: &[usize],
) -> Result<Outcome> {
    let mut saved = Vec::with_capacity(steps.len());
    let mut next = steps.iter().peekable();
    if next.peek() == Some(&&0) {
        saved.push(sample.clone());
        next.next();
    }
    match plan.scheme {
        Representation::Wigner => {
            for step in 1..=plan.n_steps {
                integrator.step_wigner(&mut sample.psi);
                if !all_finite(&sample.psi) {
                    return Err(Error::BlowUp(sample.traj_id as usize));
                }
                if next.peek() == Some(&&step) {
                    saved.push(sample.clone());
                    next.next();
                }
            }
        }
        Representation::PositiveP => {
            let stream = RngStream {
                seed: sample.seed_path.seed,
                stream: sample.seed_path.stream + 1,
            };
            let mut rng = stream.rng();
            let peak = {
                let plus = sample.psi_plus.as_ref().expect("positive-P sample");
                sample
                    .psi
                    .iter()
                    .zip(plus)
                    .map(|(a, b)| (a * b).norm())
                    .fold(1.0 / lattice.dv(), f64::max)
            };
            let limit = plan.escape_factor * peak;
            for step in 1..=plan.n_steps {
                let plus = sample.psi_plus.as_mut().expect("positive-P sample");
                integrator.step_positive_p(&mut sample.psi, plus, &mut rng);
                let escaped = sample.psi.iter().zip(plus.iter()).any(|(a, b)| {
                    let n = (a * b).norm();
                    !n.is_finite() || n > limit
                });
                if escaped {
                    return Ok(Outcome::Escaped(sample.traj_id));
                }
                if next.peek() == Some(&&step) {
                    saved.push(sample.clone());
                    next.next();
                }
            }
        }
    }
    Ok(Outcome::Done(saved))
}
