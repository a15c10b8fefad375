//! Phase-space samples of the thermal Bogoliubov state.
//!
//! Wigner samples draw `beta_q` with `<|beta_q|^2> = n_q + 1/2` and map them
//! through the Bogoliubov transformation. Positive-P samples draw real unit
//! Gaussians `zeta` and use a complex square root of the normal-ordered
//! covariance, so `alpha^+` is generally not `alpha^*`.
//!
//! Every trajectory owns two ChaCha streams derived from `(seed, traj_id)`:
//! `2 traj_id` for the initial state and `2 traj_id + 1` for dynamical noise.

use std::f64::consts::{FRAC_1_SQRT_2, PI};

use nalgebra::{DMatrix, SymmetricEigen};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::{ModeFunctions, ModeSet};
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::meanfield::CondensateSolution;
use crate::thermal::{self, Representation, ThermalEnsembleSpec, ZeroModeState};

/// Identifies one ChaCha stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngStream {
    pub seed: u64,
    pub stream: u64,
}

impl RngStream {
    pub fn sampling(seed: u64, traj_id: u64) -> Self {
        RngStream {
            seed,
            stream: 2 * traj_id,
        }
    }

    pub fn noise(seed: u64, traj_id: u64) -> Self {
        RngStream {
            seed,
            stream: 2 * traj_id + 1,
        }
    }

    pub fn rng(&self) -> ChaCha8Rng {
        let mut rng = ChaCha8Rng::seed_from_u64(self.seed);
        rng.set_stream(self.stream);
        rng
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldSample {
    pub psi: Vec<Complex64>,
    /// Present for positive-P samples only.
    pub psi_plus: Option<Vec<Complex64>>,
    pub global_phase: f64,
    pub traj_id: u64,
    pub seed_path: RngStream,
}

impl FieldSample {
    pub fn representation(&self) -> Representation {
        if self.psi_plus.is_some() {
            Representation::PositiveP
        } else {
            Representation::Wigner
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SamplerOptions {
    /// Use the dense projection path even for plane-wave mode sets.
    pub force_general: bool,
}

/// Lower-triangular factor of a 2x2 real covariance.
fn cholesky2(c: [[f64; 2]; 2]) -> [[f64; 2]; 2] {
    let l00 = c[0][0].sqrt();
    let l10 = if l00 > 0.0 { c[1][0] / l00 } else { 0.0 };
    let l11 = (c[1][1] - l10 * l10).max(0.0).sqrt();
    [[l00, 0.0], [l10, l11]]
}

/// Complex `sigma` with `sigma sigma^T = c` for a real symmetric 2x2 `c` that
/// may be indefinite.
fn complex_root2(c: [[f64; 2]; 2]) -> [[Complex64; 2]; 2] {
    let (a, b, d) = (c[0][0], c[0][1], c[1][1]);
    let mean = 0.5 * (a + d);
    let radius = (0.25 * (a - d) * (a - d) + b * b).sqrt();
    let (l1, l2) = (mean + radius, mean - radius);
    // Eigenvector of l1.
    let (vx, vy) = if b.abs() > 0.0 {
        let (x, y) = (l1 - d, b);
        let n = (x * x + y * y).sqrt();
        (x / n, y / n)
    } else if a >= d {
        (1.0, 0.0)
    } else {
        (0.0, 1.0)
    };
    let s1 = Complex64::new(l1, 0.0).sqrt();
    let s2 = Complex64::new(l2, 0.0).sqrt();
    [[s1 * vx, s2 * -vy], [s1 * vy, s2 * vx]]
}

fn complex_gaussian<R: Rng>(rng: &mut R, std: f64) -> Complex64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    Complex64::new(re, im) * (std * FRAC_1_SQRT_2)
}

#[derive(Debug, Clone)]
struct PairCoefficients {
    k: usize,
    partner: usize,
    /// `[sigma_p+, sigma_q+, sigma_p-, sigma_q-]`.
    sigmas: [Complex64; 4],
}

#[derive(Debug, Clone)]
enum Path {
    HomogeneousWigner {
        /// `(u, v, n)` per lattice mode; entry 0 unused.
        coeffs: Vec<(f64, f64, f64)>,
        zero: [[f64; 2]; 2],
    },
    GeneralWigner {
        u: DMatrix<Complex64>,
        v_conj: DMatrix<Complex64>,
        /// Standard deviations of `beta_q`, `q >= 1`.
        std: Vec<f64>,
        zero: [[f64; 2]; 2],
    },
    HomogeneousPositiveP {
        pairs: Vec<PairCoefficients>,
        zero: [[Complex64; 2]; 2],
    },
    GeneralPositiveP {
        /// `alpha - alpha0 = a zeta`, `alpha^+ - alpha0^* = b zeta`.
        a: DMatrix<Complex64>,
        b: DMatrix<Complex64>,
    },
}

/// Reusable sampler for one mode set, occupation table and zero-mode state.
#[derive(Debug, Clone)]
pub struct GaussianSampler {
    lattice: Lattice,
    representation: Representation,
    phase_average: bool,
    alpha0: Vec<Complex64>,
    path: Path,
}

impl GaussianSampler {
    pub fn new(
        modeset: &ModeSet,
        lattice: &Lattice,
        occupations: &[f64],
        spec: &ThermalEnsembleSpec,
        condensate: &CondensateSolution,
        opts: &SamplerOptions,
    ) -> Result<Self> {
        spec.validate()?;
        lattice.check_shape(condensate.psi0.len())?;
        if occupations.len() != modeset.modes.len() {
            return Err(Error::ShapeMismatch {
                expected: modeset.modes.len(),
                actual: occupations.len(),
            });
        }
        let homogeneous = modeset.homogeneous.is_some() && !opts.force_general;
        let path = match (spec.representation, homogeneous) {
            (Representation::Wigner, true) => homogeneous_wigner(modeset, lattice, occupations, &spec.zero_mode),
            (Representation::Wigner, false) => general_wigner(modeset, lattice, occupations, &spec.zero_mode)?,
            (Representation::PositiveP, true) => {
                homogeneous_positive_p(modeset, lattice, occupations, &spec.zero_mode)
            }
            (Representation::PositiveP, false) => {
                general_positive_p(modeset, lattice, occupations, &spec.zero_mode)?
            }
        };
        Ok(GaussianSampler {
            lattice: lattice.clone(),
            representation: spec.representation,
            phase_average: spec.phase_average,
            alpha0: condensate.mode_amplitudes(lattice),
            path,
        })
    }

    pub fn representation(&self) -> Representation {
        self.representation
    }

    /// Draws trajectory `traj_id` from its own stream.
    pub fn draw(&self, seed: u64, traj_id: u64) -> FieldSample {
        let seed_path = RngStream::sampling(seed, traj_id);
        let mut rng = seed_path.rng();
        let global_phase = if self.phase_average {
            rng.random_range(0.0..2.0 * PI)
        } else {
            0.0
        };
        let (mut alpha, alpha_plus) = self.amplitudes(&mut rng);
        let rotation = Complex64::from_polar(1.0, global_phase);
        alpha.iter_mut().for_each(|a| *a *= rotation);
        let psi_plus = alpha_plus.map(|mut ap| {
            ap.iter_mut().for_each(|a| *a = (*a * rotation.conj()).conj());
            self.lattice.to_position_inplace(&mut ap);
            ap.iter_mut().for_each(|a| *a = a.conj());
            ap
        });
        self.lattice.to_position_inplace(&mut alpha);
        FieldSample {
            psi: alpha,
            psi_plus,
            global_phase,
            traj_id,
            seed_path,
        }
    }

    /// Trajectories `0..n_traj`, in order, drawn in parallel.
    pub fn draw_ensemble(&self, seed: u64, n_traj: usize) -> Vec<FieldSample> {
        (0..n_traj as u64)
            .into_par_iter()
            .map(|id| self.draw(seed, id))
            .collect()
    }

    /// Mode amplitudes at zero global phase.
    fn amplitudes<R: Rng>(&self, rng: &mut R) -> (Vec<Complex64>, Option<Vec<Complex64>>) {
        let m = self.alpha0.len();
        match &self.path {
            Path::HomogeneousWigner { coeffs, zero } => {
                let mut beta = vec![Complex64::new(0.0, 0.0); m];
                beta[0] = zero_mode_wigner(rng, zero);
                for k in 1..m {
                    beta[k] = complex_gaussian(rng, (coeffs[k].2 + 0.5).sqrt());
                }
                let mut alpha = self.alpha0.clone();
                alpha[0] += beta[0];
                for k in 1..m {
                    let (u, v, _) = coeffs[k];
                    alpha[k] += u * beta[k] - v * beta[self.lattice.partner(k)].conj();
                }
                (alpha, None)
            }
            Path::GeneralWigner { u, v_conj, std, zero } => {
                let mut beta = Vec::with_capacity(std.len() + 1);
                beta.push(zero_mode_wigner(rng, zero));
                beta.extend(std.iter().map(|&s| complex_gaussian(rng, s)));
                let beta = nalgebra::DVector::from_vec(beta);
                let shift = u * &beta - v_conj * beta.map(|b| b.conj());
                let alpha = self.alpha0.iter().zip(shift.iter()).map(|(a, s)| a + s).collect();
                (alpha, None)
            }
            Path::HomogeneousPositiveP { pairs, zero } => {
                let mut alpha = self.alpha0.clone();
                let mut alpha_plus: Vec<Complex64> = self.alpha0.iter().map(|a| a.conj()).collect();
                let z0: f64 = rng.sample(StandardNormal);
                let z1: f64 = rng.sample(StandardNormal);
                let p = zero[0][0] * z0 + zero[0][1] * z1;
                let q = zero[1][0] * z0 + zero[1][1] * z1;
                let i = Complex64::i();
                alpha[0] += (p - i * q) * FRAC_1_SQRT_2;
                alpha_plus[0] += (p + i * q) * FRAC_1_SQRT_2;
                for pair in pairs {
                    let z: [f64; 4] = std::array::from_fn(|_| rng.sample(StandardNormal));
                    let [sp1, sq1, sp2, sq2] = pair.sigmas;
                    let (p1, q1) = (sp1 * z[0], sq1 * z[1]);
                    let plus = (p1 - i * q1) * FRAC_1_SQRT_2;
                    let plus_dag = (p1 + i * q1) * FRAC_1_SQRT_2;
                    if pair.k == pair.partner {
                        alpha[pair.k] += plus;
                        alpha_plus[pair.k] += plus_dag;
                        continue;
                    }
                    let (p2, q2) = (sp2 * z[2], sq2 * z[3]);
                    let minus = (p2 - i * q2) * FRAC_1_SQRT_2;
                    let minus_dag = (p2 + i * q2) * FRAC_1_SQRT_2;
                    alpha[pair.k] += (plus + minus) * FRAC_1_SQRT_2;
                    alpha[pair.partner] += (plus - minus) * FRAC_1_SQRT_2;
                    alpha_plus[pair.k] += (plus_dag + minus_dag) * FRAC_1_SQRT_2;
                    alpha_plus[pair.partner] += (plus_dag - minus_dag) * FRAC_1_SQRT_2;
                }
                (alpha, Some(alpha_plus))
            }
            Path::GeneralPositiveP { a, b } => {
                let zeta = nalgebra::DVector::<Complex64>::from_fn(a.ncols(), |_, _| {
                    Complex64::new(rng.sample(StandardNormal), 0.0)
                });
                let da = a * &zeta;
                let db = b * &zeta;
                let alpha = self.alpha0.iter().zip(da.iter()).map(|(x, d)| x + d).collect();
                let alpha_plus = self.alpha0.iter().zip(db.iter()).map(|(x, d)| x.conj() + d).collect();
                (alpha, Some(alpha_plus))
            }
        }
    }
}

/// `beta0 = (p - i q)/sqrt2` with `(p, q)` drawn from the Cholesky factor.
fn zero_mode_wigner<R: Rng>(rng: &mut R, chol: &[[f64; 2]; 2]) -> Complex64 {
    let z0: f64 = rng.sample(StandardNormal);
    let z1: f64 = rng.sample(StandardNormal);
    let p = chol[0][0] * z0;
    let q = chol[1][0] * z0 + chol[1][1] * z1;
    Complex64::new(p, -q) * FRAC_1_SQRT_2
}

fn plane_wave_coefficients(modeset: &ModeSet, lattice: &Lattice, occupations: &[f64]) -> Vec<(f64, f64, f64)> {
    let mut coeffs = vec![(1.0, 0.0, 0.0); lattice.len()];
    for (mode, n) in modeset.modes.iter().zip(occupations) {
        if let ModeFunctions::PlaneWave { u, v } = mode.functions {
            coeffs[mode.index] = (u, v, *n);
        }
    }
    coeffs
}

fn homogeneous_wigner(modeset: &ModeSet, lattice: &Lattice, occupations: &[f64], zero_mode: &ZeroModeState) -> Path {
    Path::HomogeneousWigner {
        coeffs: plane_wave_coefficients(modeset, lattice, occupations),
        zero: cholesky2(zero_mode.quadrature_covariance()),
    }
}

fn general_wigner(
    modeset: &ModeSet,
    lattice: &Lattice,
    occupations: &[f64],
    zero_mode: &ZeroModeState,
) -> Result<Path> {
    let proj = modeset.projections(lattice)?;
    Ok(Path::GeneralWigner {
        u: proj.u_matrix(),
        v_conj: proj.v_matrix().map(|z| z.conj()),
        std: occupations.iter().map(|n| (n + 0.5).sqrt()).collect(),
        zero: cholesky2(zero_mode.quadrature_covariance()),
    })
}

fn homogeneous_positive_p(
    modeset: &ModeSet,
    lattice: &Lattice,
    occupations: &[f64],
    zero_mode: &ZeroModeState,
) -> Path {
    let coeffs = plane_wave_coefficients(modeset, lattice, occupations);
    let root = |x: f64| Complex64::new(x, 0.0).sqrt();
    let pairs = (1..lattice.len())
        .filter(|&k| k <= lattice.partner(k))
        .map(|k| {
            let (u, v, n) = coeffs[k];
            let s = n + 0.5;
            let squeezed = s * (u - v) * (u - v) - 0.5;
            let stretched = s * (u + v) * (u + v) - 0.5;
            PairCoefficients {
                k,
                partner: lattice.partner(k),
                sigmas: [root(squeezed), root(stretched), root(stretched), root(squeezed)],
            }
        })
        .collect();
    let mut c = zero_mode.quadrature_covariance();
    c[0][0] -= 0.5;
    c[1][1] -= 0.5;
    Path::HomogeneousPositiveP {
        pairs,
        zero: complex_root2(c),
    }
}

/// Factorizes the normal-ordered quadrature covariance `Gamma = O L O^T` as
/// `sigma = O L^{1/2}` with complex roots of negative eigenvalues, then maps
/// `x + i y` and `x - i y` back to `alpha` and `alpha^+`.
fn general_positive_p(
    modeset: &ModeSet,
    lattice: &Lattice,
    occupations: &[f64],
    zero_mode: &ZeroModeState,
) -> Result<Path> {
    let sigma = thermal::correlation_matrix(modeset, lattice, occupations, zero_mode)?;
    let normal = thermal::normal_order(&sigma)?;
    let scale = normal.sigma.iter().fold(1.0f64, |a, z| a.max(z.norm()));
    let asymmetry = normal.structure_error();
    if asymmetry > 1e-10 * scale {
        return Err(Error::Factorization(format!(
            "normal-ordered correlations are not symmetric (error {asymmetry:.3e})"
        )));
    }
    let gamma = normal.quadrature_covariance();
    let eig = SymmetricEigen::try_new(gamma.clone(), f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::Factorization("eigen-decomposition did not converge".into()))?;
    let m = lattice.len();
    let roots = eig.eigenvalues.map(|l| Complex64::new(l, 0.0).sqrt());
    let o = eig.eigenvectors.map(|x| Complex64::new(x, 0.0));
    let root = &o * DMatrix::from_diagonal(&roots);

    let rebuilt = &root * root.transpose();
    let error = rebuilt
        .iter()
        .zip(gamma.iter())
        .fold(0.0f64, |a, (r, g)| a.max((r - g).norm()));
    if error > 1e-9 * scale {
        return Err(Error::Factorization(format!(
            "square root reproduces the covariance only to {error:.3e}"
        )));
    }

    let i = Complex64::i();
    let x = root.rows(0, m);
    let y = root.rows(m, m);
    let a = (x + y * i) * Complex64::new(FRAC_1_SQRT_2, 0.0);
    let b = (x - y * i) * Complex64::new(FRAC_1_SQRT_2, 0.0);
    Ok(Path::GeneralPositiveP { a, b })
}

/// One Wigner sample from a freshly built sampler. Prefer
/// [`GaussianSampler`] when drawing many trajectories.
pub fn sample_wigner(
    modeset: &ModeSet,
    lattice: &Lattice,
    occupations: &[f64],
    spec: &ThermalEnsembleSpec,
    condensate: &CondensateSolution,
    traj_id: u64,
) -> Result<FieldSample> {
    if spec.representation != Representation::Wigner {
        return Err(Error::RepresentationMismatch("spec selects positive-P".into()));
    }
    let sampler = GaussianSampler::new(modeset, lattice, occupations, spec, condensate, &SamplerOptions::default())?;
    Ok(sampler.draw(spec.seed, traj_id))
}

/// One positive-P sample from a freshly built sampler.
pub fn sample_positive_p(
    modeset: &ModeSet,
    lattice: &Lattice,
    occupations: &[f64],
    spec: &ThermalEnsembleSpec,
    condensate: &CondensateSolution,
    traj_id: u64,
) -> Result<FieldSample> {
    if spec.representation != Representation::PositiveP {
        return Err(Error::RepresentationMismatch("spec selects Wigner".into()));
    }
    let sampler = GaussianSampler::new(modeset, lattice, occupations, spec, condensate, &SamplerOptions::default())?;
    Ok(sampler.draw(spec.seed, traj_id))
}
