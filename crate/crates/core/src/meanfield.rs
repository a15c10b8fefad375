//! Stationary condensate and chemical-potential bookkeeping.
//!
//! The condensate solves `H Psi0 = mu_e Psi0` with the effective
//! single-particle operator `H = -hbar^2 lap / 2m + U + g n0`. That choice
//! cancels the term linear in the fluctuations.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{self, BdgOptions, ModeSet};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::thermal::{self, ZeroModeState};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SystemParams {
    /// Contact interaction strength (energy x volume).
    pub g: f64,
    pub mass: f64,
    pub hbar: f64,
    /// External potential sampled on the lattice, in energy units.
    pub potential: Vec<f64>,
    /// Desired mean total particle number.
    pub n_target: f64,
}

impl SystemParams {
    /// Uniform system with `U = 0`.
    pub fn homogeneous(lattice: &Lattice, g: f64, mass: f64, hbar: f64, n_target: f64) -> Self {
        SystemParams {
            g,
            mass,
            hbar,
            potential: vec![0.0; lattice.len()],
            n_target,
        }
    }

    pub fn validate(&self, lattice: &Lattice) -> Result<()> {
        if !self.g.is_finite() || self.g < 0.0 {
            return Err(Error::param(
                "g",
                format!("must be finite and non-negative (repulsive interactions only), got {}", self.g),
            ));
        }
        if !(self.mass > 0.0 && self.mass.is_finite()) {
            return Err(Error::param("mass", format!("must be positive, got {}", self.mass)));
        }
        if !(self.hbar > 0.0 && self.hbar.is_finite()) {
            return Err(Error::param("hbar", format!("must be positive, got {}", self.hbar)));
        }
        if !(self.n_target > 0.0 && self.n_target.is_finite()) {
            return Err(Error::param(
                "n_target",
                format!("must be positive, got {}", self.n_target),
            ));
        }
        lattice.check_shape(self.potential.len())?;
        if self.potential.iter().any(|u| !u.is_finite()) {
            return Err(Error::param("potential", "must be finite everywhere"));
        }
        Ok(())
    }

    /// True when the potential is the same constant at every point.
    pub fn is_uniform(&self) -> bool {
        self.potential.windows(2).all(|w| w[0] == w[1])
    }

    /// Free-particle energies `hbar^2 |k|^2 / 2m` on the lattice modes.
    pub fn kinetic_energies(&self, lattice: &Lattice) -> Vec<f64> {
        let scale = self.hbar * self.hbar / (2.0 * self.mass);
        lattice.k_squared().iter().map(|k2| scale * k2).collect()
    }
}

/// Harmonic potential `m/2 sum_i (omega_i x_i)^2` with `x` measured from the
/// box center.
pub fn harmonic_potential(lattice: &Lattice, mass: f64, omega: &[f64]) -> Result<Vec<f64>> {
    if omega.len() != lattice.ndim() {
        return Err(Error::param(
            "omega",
            format!("expected {} trap frequencies, got {}", lattice.ndim(), omega.len()),
        ));
    }
    Ok((0..lattice.len())
        .map(|p| {
            lattice
                .position(p)
                .iter()
                .zip(omega)
                .map(|(x, w)| 0.5 * mass * (w * x).powi(2))
                .sum()
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CondensateSolution {
    pub psi0: Vec<Complex64>,
    pub density: Vec<f64>,
    /// Condensate number `N0 = sum n0 dV`.
    pub number: f64,
    pub mu_e: f64,
    pub mu1: f64,
    pub mu2: f64,
    /// Zero-mode coefficient; `None` until the zero mode has been solved.
    pub alpha: Option<f64>,
    /// Relative residual `|(H - mu_e) Psi0| / |mu_e Psi0|` at exit.
    pub residual: f64,
    pub iterations: usize,
}

impl CondensateSolution {
    fn from_field(
        lattice: &Lattice,
        psi: Vec<f64>,
        mu_e: f64,
        residual: f64,
        iterations: usize,
    ) -> Self {
        let density: Vec<f64> = psi.iter().map(|p| p * p).collect();
        let number = density.iter().sum::<f64>() * lattice.dv();
        CondensateSolution {
            psi0: psi.iter().map(|&p| Complex64::new(p, 0.0)).collect(),
            density,
            number,
            mu_e,
            mu1: mu_e,
            mu2: 0.0,
            alpha: None,
            residual,
            iterations,
        }
    }

    /// Mode amplitudes of the condensate field.
    pub fn mode_amplitudes(&self, lattice: &Lattice) -> Vec<Complex64> {
        let mut modes = self.psi0.clone();
        lattice.to_modes_inplace(&mut modes);
        modes
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct StationaryOptions {
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for StationaryOptions {
    fn default() -> Self {
        StationaryOptions {
            tol: 1e-10,
            max_iter: 200_000,
        }
    }
}

/// Applies the spectral kinetic operator to a real field.
pub(crate) fn apply_kinetic(lattice: &Lattice, kinetic: &[f64], field: &[f64]) -> Vec<f64> {
    let mut work: Vec<Complex64> = field.iter().map(|&x| Complex64::new(x, 0.0)).collect();
    lattice.to_modes_inplace(&mut work);
    work.iter_mut().zip(kinetic).for_each(|(z, e)| *z *= e);
    lattice.to_position_inplace(&mut work);
    work.iter().map(|z| z.re).collect()
}

/// `(T + diag(w)) f` for a real field `f`.
pub(crate) fn apply_operator(lattice: &Lattice, kinetic: &[f64], local: &[f64], field: &[f64]) -> Vec<f64> {
    let mut out = apply_kinetic(lattice, kinetic, field);
    out.iter_mut()
        .zip(local.iter().zip(field))
        .for_each(|(o, (w, f))| *o += w * f);
    out
}

/// Energy scale used when `mu_e` itself is zero.
fn residual_scale(lattice: &Lattice, params: &SystemParams, mu: f64) -> f64 {
    let e_min = params.hbar * params.hbar * lattice.k_squared_min() / (2.0 * params.mass);
    mu.abs().max(e_min).max(f64::MIN_POSITIVE)
}

fn dot(lattice: &Lattice, a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * lattice.dv()
}

/// Relative residual of `H psi = mu psi` together with the Rayleigh quotient.
fn rayleigh(
    lattice: &Lattice,
    params: &SystemParams,
    kinetic: &[f64],
    psi: &[f64],
) -> (f64, Vec<f64>, f64) {
    let local: Vec<f64> = params
        .potential
        .iter()
        .zip(psi)
        .map(|(u, p)| u + params.g * p * p)
        .collect();
    let h_psi = apply_operator(lattice, kinetic, &local, psi);
    let norm = dot(lattice, psi, psi);
    let mu = dot(lattice, psi, &h_psi) / norm;
    let resid: Vec<f64> = h_psi.iter().zip(psi).map(|(h, p)| h - mu * p).collect();
    let rel = dot(lattice, &resid, &resid).sqrt()
        / (residual_scale(lattice, params, mu) * norm.sqrt());
    (mu, resid, rel)
}

/// `int psi T psi + U psi^2 + g psi^4 / 2`.
fn gp_energy(lattice: &Lattice, params: &SystemParams, kinetic: &[f64], psi: &[f64]) -> f64 {
    let t_psi = apply_kinetic(lattice, kinetic, psi);
    let local: f64 = params
        .potential
        .iter()
        .zip(psi)
        .map(|(u, p)| u * p * p + 0.5 * params.g * p.powi(4))
        .sum::<f64>()
        * lattice.dv();
    dot(lattice, psi, &t_psi) + local
}

/// Stationary condensate normalized to `n0` particles.
pub fn solve_stationary(
    params: &SystemParams,
    lattice: &Lattice,
    n0: f64,
    tol: f64,
) -> Result<CondensateSolution> {
    solve_stationary_with(
        params,
        lattice,
        n0,
        &StationaryOptions {
            tol,
            ..Default::default()
        },
    )
}

/// Imaginary-time relaxation with renormalization to `n0` after every step.
///
/// The flow is discretized as a Fourier-preconditioned gradient step
/// `psi <- psi - dtau (T + s)^-1 (H - mu) psi`, whose fixed point satisfies the
/// eigenvalue condition exactly rather than up to a splitting error.
pub fn solve_stationary_with(
    params: &SystemParams,
    lattice: &Lattice,
    n0: f64,
    opts: &StationaryOptions,
) -> Result<CondensateSolution> {
    params.validate(lattice)?;
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::ZeroNorm);
    }
    if !(opts.tol > 0.0) {
        return Err(Error::param("tol", "must be positive"));
    }

    if params.is_uniform() {
        let n = n0 / lattice.volume();
        let u0 = params.potential[0];
        let psi = vec![n.sqrt(); lattice.len()];
        return Ok(CondensateSolution::from_field(
            lattice,
            psi,
            u0 + params.g * n,
            0.0,
            0,
        ));
    }

    let kinetic = params.kinetic_energies(lattice);
    let mut psi = initial_guess(params, lattice, n0);
    normalize(lattice, &mut psi, n0)?;

    let mut dtau = 0.9;
    let (mut mu, mut resid, mut rel) = rayleigh(lattice, params, &kinetic, &psi);
    let mut energy = gp_energy(lattice, params, &kinetic, &psi);
    let mut iterations = 0;
    while rel > opts.tol {
        if iterations >= opts.max_iter {
            return Err(Error::NonConvergence {
                solver: "stationary condensate",
                iterations,
                residual: rel,
            });
        }
        iterations += 1;

        let w_max = params
            .potential
            .iter()
            .zip(&psi)
            .map(|(u, p)| u + params.g * p * p)
            .fold(f64::NEG_INFINITY, f64::max);
        let floor = residual_scale(lattice, params, mu) * 1e-3;
        let shift = (w_max - mu).max(0.0) + floor;

        let mut step: Vec<Complex64> = resid.iter().map(|&r| Complex64::new(r, 0.0)).collect();
        lattice.to_modes_inplace(&mut step);
        step.iter_mut()
            .zip(&kinetic)
            .for_each(|(z, e)| *z /= e + shift);
        lattice.to_position_inplace(&mut step);

        let candidate: Vec<f64> = psi
            .iter()
            .zip(&step)
            .map(|(p, s)| p - dtau * s.re)
            .collect();
        let mut candidate = candidate;
        normalize(lattice, &mut candidate, n0)?;
        let (mu_c, resid_c, rel_c) = rayleigh(lattice, params, &kinetic, &candidate);
        let energy_c = gp_energy(lattice, params, &kinetic, &candidate);
        // Far from the solution accepted steps never raise the energy, so the
        // flow cannot cycle; close to it energy changes drop below round-off
        // and the residual itself must shrink.
        let improves = if rel > 1e-5 {
            energy_c <= energy + 1e-13 * energy.abs()
        } else {
            rel_c < rel
        };
        if !rel_c.is_finite() || !improves {
            dtau *= 0.5;
            if dtau < 1e-12 {
                return Err(Error::NonConvergence {
                    solver: "stationary condensate",
                    iterations,
                    residual: rel,
                });
            }
            continue;
        }
        psi = candidate;
        mu = mu_c;
        resid = resid_c;
        rel = rel_c;
        energy = energy_c;
        dtau = (dtau * 1.25).min(0.9);
    }

    // Nodeless ground state: fix the global sign so the field is positive.
    if psi.iter().sum::<f64>() < 0.0 {
        psi.iter_mut().for_each(|p| *p = -*p);
    }
    Ok(CondensateSolution::from_field(lattice, psi, mu, rel, iterations))
}

fn normalize(lattice: &Lattice, psi: &mut [f64], n0: f64) -> Result<()> {
    let norm = psi.iter().map(|p| p * p).sum::<f64>() * lattice.dv();
    if !(norm > 0.0 && norm.is_finite()) {
        return Err(Error::ZeroNorm);
    }
    let scale = (n0 / norm).sqrt();
    psi.iter_mut().for_each(|p| *p *= scale);
    Ok(())
}

/// Thomas-Fermi profile with an exponential tail so the guess is positive
/// everywhere.
fn initial_guess(params: &SystemParams, lattice: &Lattice, n0: f64) -> Vec<f64> {
    let u = &params.potential;
    let u_min = u.iter().copied().fold(f64::INFINITY, f64::min);
    let u_max = u.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let spread = (u_max - u_min).max(f64::MIN_POSITIVE);

    let mu_tf = if params.g > 0.0 {
        let count = |mu: f64| -> f64 {
            u.iter().map(|x| (mu - x).max(0.0)).sum::<f64>() * lattice.dv() / params.g
        };
        let (mut lo, mut hi) = (u_min, u_min + spread);
        while count(hi) < n0 {
            hi = u_min + 2.0 * (hi - u_min);
        }
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if count(mid) < n0 {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        hi
    } else {
        u_min
    };
    let e_min = params.hbar * params.hbar * lattice.k_squared_min() / (2.0 * params.mass);
    let width = (mu_tf - u_min).max(e_min).max(1e-3 * spread);
    let background = n0 / lattice.volume();
    u.iter()
        .map(|x| {
            let tf = if params.g > 0.0 { (mu_tf - x).max(0.0) / params.g } else { 0.0 };
            (tf + background * (-(x - u_min) / width).exp()).sqrt()
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BalanceOptions {
    /// Relative tolerance on `N_target`.
    pub tol: f64,
    pub max_iter: usize,
    /// Weight of the new iterate in the damped update.
    pub mixing: f64,
    pub stationary: StationaryOptions,
    pub bdg: BdgOptions,
}

impl Default for BalanceOptions {
    fn default() -> Self {
        BalanceOptions {
            tol: 1e-10,
            max_iter: 500,
            mixing: 0.5,
            stationary: StationaryOptions::default(),
            bdg: BdgOptions::default(),
        }
    }
}

/// Self-consistent condensate, mode set and regularized chemical potential.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BalancedState {
    pub condensate: CondensateSolution,
    pub modes: ModeSet,
    pub occupations: Vec<f64>,
    /// Total depletion `N_target - N0` at the fixed point.
    pub depletion: f64,
    pub iterations: usize,
}

/// Finds `N0` such that `N_target = N0 + depletion(N0)`, iterating the
/// mean-field, Bogoliubov and occupation chain with a damped fixed-point
/// update.
pub fn solve_number_balance(
    params: &SystemParams,
    lattice: &Lattice,
    temperature: f64,
    zero_mode: &ZeroModeState,
    opts: &BalanceOptions,
) -> Result<BalancedState> {
    params.validate(lattice)?;
    if !(temperature >= 0.0 && temperature.is_finite()) {
        return Err(Error::param("temperature", "must be finite and non-negative"));
    }
    zero_mode.validate()?;
    let target = params.n_target;

    let evaluate = |n0: f64| -> Result<(CondensateSolution, ModeSet, Vec<f64>, f64)> {
        let mut condensate = solve_stationary_with(params, lattice, n0, &opts.stationary)?;
        let modes = bogoliubov::build_modes(params, lattice, &condensate, &opts.bdg)?;
        bogoliubov::nonlinear_mu2(&modes, &mut condensate)?;
        let occ = thermal::occupations(&modes, temperature);
        let depletion = thermal::depletion(&modes, &occ, zero_mode, lattice);
        Ok((condensate, modes, occ, depletion))
    };

    let mut n0 = target;
    for iteration in 1..=opts.max_iter {
        let (condensate, modes, occupations, depletion) = evaluate(n0)?;
        let mismatch = target - n0 - depletion;
        if mismatch.abs() <= opts.tol * target {
            return Ok(BalancedState {
                condensate,
                modes,
                occupations,
                depletion,
                iterations: iteration,
            });
        }
        let proposal = target - depletion;
        if proposal <= 0.0 {
            return Err(Error::BelowDepletion { target, depletion });
        }
        n0 = (1.0 - opts.mixing) * n0 + opts.mixing * proposal;
    }
    Err(Error::NonConvergence {
        solver: "number balance",
        iterations: opts.max_iter,
        residual: f64::NAN,
    })
}
