//! Bogoliubov quasiparticle modes, the condensate zero mode and `mu2`.
//!
//! Fluctuations expand as `dPsi(x) = sum_q [u_q(x) b_q - v_q(x)^* b_q^dag]`,
//! with the zero mode contributing `u0 = (psi0 + Phi0)/2`,
//! `v0 = (psi0 - Phi0)/2`. All energies are in energy units; `alpha` too.

use std::borrow::Cow;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::meanfield::{apply_operator, CondensateSolution, SystemParams};

/// Mode functions of one quasiparticle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ModeFunctions {
    /// `u e^{ikx}/sqrt(V)` and `v e^{ikx}/sqrt(V)` for the lattice mode `k`.
    PlaneWave { u: f64, v: f64 },
    Grid { u: Vec<Complex64>, v: Vec<Complex64> },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BogoliubovMode {
    /// Lattice mode index for plane waves; position in the energy ordering
    /// for grid modes.
    pub index: usize,
    pub energy: f64,
    pub functions: ModeFunctions,
}

impl BogoliubovMode {
    fn plane_wave(lattice: &Lattice, index: usize, amplitude: f64) -> Vec<Complex64> {
        let mut modes = vec![Complex64::new(0.0, 0.0); lattice.len()];
        modes[index] = Complex64::new(amplitude, 0.0);
        lattice.to_position_inplace(&mut modes);
        modes
    }

    pub fn u_field(&self, lattice: &Lattice) -> Vec<Complex64> {
        match &self.functions {
            ModeFunctions::PlaneWave { u, .. } => Self::plane_wave(lattice, self.index, *u),
            ModeFunctions::Grid { u, .. } => u.clone(),
        }
    }

    pub fn v_field(&self, lattice: &Lattice) -> Vec<Complex64> {
        match &self.functions {
            ModeFunctions::PlaneWave { v, .. } => Self::plane_wave(lattice, self.index, *v),
            ModeFunctions::Grid { v, .. } => v.clone(),
        }
    }

    /// `(int |u|^2, int |v|^2)`.
    pub fn norms(&self, lattice: &Lattice) -> (f64, f64) {
        match &self.functions {
            ModeFunctions::PlaneWave { u, v } => (u * u, v * v),
            ModeFunctions::Grid { u, v } => (
                lattice.norm_sqr(u),
                lattice.norm_sqr(v),
            ),
        }
    }
}

/// The condensate-mode pair. `psi0` is the normalized condensate and `Phi0`
/// its conjugate partner with `int [psi0 Phi0^* + c.c.] = 2`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ZeroMode {
    pub psi0: Vec<Complex64>,
    pub phi0: Vec<Complex64>,
    pub alpha: f64,
}

impl ZeroMode {
    pub fn u0(&self) -> Vec<Complex64> {
        self.psi0.iter().zip(&self.phi0).map(|(p, f)| 0.5 * (p + f)).collect()
    }

    pub fn v0(&self) -> Vec<Complex64> {
        self.psi0.iter().zip(&self.phi0).map(|(p, f)| 0.5 * (p - f)).collect()
    }
}

/// Parameters of a uniform condensate, kept so the closed forms stay exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Homogeneous {
    pub n0: f64,
    pub g: f64,
    pub volume: f64,
}

/// Overlaps of the quasiparticle functions with the free plane waves.
///
/// `u[k][q] = <psi_k|u_q>` and `v[k][q] = <psi_{-k}|v_q>`, so that
/// `da_k = sum_q (u[k][q] b_q - v[k][q]^* b_q^dag)`. Column 0 is the zero mode.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projections {
    pub rows: usize,
    pub cols: usize,
    /// Row-major `rows x cols`.
    pub u: Vec<Complex64>,
    pub v: Vec<Complex64>,
}

impl Projections {
    pub fn u(&self, k: usize, q: usize) -> Complex64 {
        self.u[k * self.cols + q]
    }

    pub fn v(&self, k: usize, q: usize) -> Complex64 {
        self.v[k * self.cols + q]
    }

    pub fn u_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.u)
    }

    pub fn v_matrix(&self) -> DMatrix<Complex64> {
        DMatrix::from_row_slice(self.rows, self.cols, &self.v)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSet {
    /// Nonzero-energy modes, ascending in energy for grid sets and in lattice
    /// order for plane-wave sets.
    pub modes: Vec<BogoliubovMode>,
    pub zero_mode: ZeroMode,
    pub projections: Option<Projections>,
    pub homogeneous: Option<Homogeneous>,
}

impl ModeSet {
    pub fn energies(&self) -> Vec<f64> {
        self.modes.iter().map(|m| m.energy).collect()
    }

    pub fn is_complete(&self, lattice: &Lattice) -> bool {
        self.modes.len() + 1 == lattice.len()
    }

    /// Free-mode projections, built on demand for plane-wave sets.
    pub fn projections(&self, lattice: &Lattice) -> Result<Cow<'_, Projections>> {
        if let Some(p) = &self.projections {
            return Ok(Cow::Borrowed(p));
        }
        if self.homogeneous.is_none() || !self.is_complete(lattice) {
            return Err(Error::MissingProjections);
        }
        let rows = lattice.len();
        let cols = self.modes.len() + 1;
        let zero = Complex64::new(0.0, 0.0);
        let mut u = vec![zero; rows * cols];
        let mut v = vec![zero; rows * cols];
        u[0] = Complex64::new(1.0, 0.0);
        for (j, mode) in self.modes.iter().enumerate() {
            let q = j + 1;
            let ModeFunctions::PlaneWave { u: uq, v: vq } = mode.functions else {
                return Err(Error::MissingProjections);
            };
            u[mode.index * cols + q] = Complex64::new(uq, 0.0);
            v[lattice.partner(mode.index) * cols + q] = Complex64::new(vq, 0.0);
        }
        Ok(Cow::Owned(Projections { rows, cols, u, v }))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BdgOptions {
    /// Number of lowest modes to keep; `None` keeps the complete set.
    pub n_modes: Option<usize>,
    /// Tolerance on the zero-mode null-vector check, relative to `mu_e`.
    pub zero_mode_tol: f64,
    /// Largest grid the dense solver accepts.
    pub max_points: usize,
    /// Use the dense solver even for uniform condensates.
    pub force_numeric: bool,
}

impl Default for BdgOptions {
    fn default() -> Self {
        BdgOptions {
            n_modes: None,
            zero_mode_tol: 1e-6,
            max_points: 2048,
            force_numeric: false,
        }
    }
}

/// Closed-form coefficients for one free energy `e_k` at interaction energy
/// `gn = g n0`: `(eps, u, v)`.
pub fn homogeneous_coefficients(e_k: f64, gn: f64) -> (f64, f64, f64) {
    let eps = (e_k * (e_k + 2.0 * gn)).sqrt();
    let root = (eps * e_k).sqrt();
    let u = (eps + e_k) / (2.0 * root);
    // eps - e_k rewritten to avoid cancellation at large e_k.
    let v = gn * e_k / ((eps + e_k) * root);
    (eps, u, v)
}

/// Plane-wave mode set of a uniform condensate of density `n0`.
pub fn homogeneous_modes(params: &SystemParams, lattice: &Lattice, n0: f64) -> Result<ModeSet> {
    if !(n0 > 0.0 && n0.is_finite()) {
        return Err(Error::param("n0", format!("uniform density must be positive, got {n0}")));
    }
    let gn = params.g * n0;
    let kinetic = params.kinetic_energies(lattice);
    let modes = (1..lattice.len())
        .map(|k| {
            let (eps, u, v) = homogeneous_coefficients(kinetic[k], gn);
            BogoliubovMode {
                index: k,
                energy: eps,
                functions: ModeFunctions::PlaneWave { u, v },
            }
        })
        .collect();
    let flat = Complex64::new(1.0 / lattice.volume().sqrt(), 0.0);
    Ok(ModeSet {
        modes,
        zero_mode: ZeroMode {
            psi0: vec![flat; lattice.len()],
            phi0: vec![flat; lattice.len()],
            alpha: gn,
        },
        projections: None,
        homogeneous: Some(Homogeneous {
            n0,
            g: params.g,
            volume: lattice.volume(),
        }),
    })
}

/// Closed forms for a uniform condensate, the dense solver otherwise.
pub fn build_modes(
    params: &SystemParams,
    lattice: &Lattice,
    condensate: &CondensateSolution,
    opts: &BdgOptions,
) -> Result<ModeSet> {
    if params.is_uniform() && !opts.force_numeric && opts.n_modes.is_none() {
        return homogeneous_modes(params, lattice, condensate.number / lattice.volume());
    }
    let n_modes = opts.n_modes.unwrap_or(lattice.len() - 1);
    solve_bdg_with(params, lattice, condensate, n_modes, opts)
}

/// Dense real-symmetric matrix of the spectral kinetic operator.
fn kinetic_matrix(params: &SystemParams, lattice: &Lattice) -> DMatrix<f64> {
    let m = lattice.len();
    let kinetic = params.kinetic_energies(lattice);
    let mut mat = DMatrix::zeros(m, m);
    let mut unit = vec![0.0; m];
    for col in 0..m {
        unit[col] = 1.0;
        let column = crate::meanfield::apply_kinetic(lattice, &kinetic, &unit);
        unit[col] = 0.0;
        for (row, value) in column.into_iter().enumerate() {
            mat[(row, col)] = value;
        }
    }
    // Symmetric up to transform round-off; make it exact.
    let transpose = mat.transpose();
    (mat + transpose) * 0.5
}

fn symmetric_eigen(mat: DMatrix<f64>) -> Result<SymmetricEigen<f64, nalgebra::Dyn>> {
    SymmetricEigen::try_new(mat, f64::EPSILON, 1_000_000)
        .ok_or_else(|| Error::EigenSolver("symmetric eigen-decomposition did not converge".into()))
}

fn real_field(field: &[Complex64]) -> Vec<f64> {
    field.iter().map(|z| z.re).collect()
}

/// Numerically solved BdG modes on a real condensate.
///
/// With `S = H - mu_e` (positive semi-definite, null vector `psi0`) and
/// `A + B = S + 2 g n0`, the pair equations reduce to the symmetric problem
/// `S^{1/2} (A+B) S^{1/2} w = eps^2 w`. Then `f = S^{1/2} w / eps`,
/// `h = (A+B) f / eps`, `u = (f + h)/2`, `v = (h - f)/2`, and orthonormal `w`
/// gives bi-orthonormal pairs.
pub fn solve_bdg(
    params: &SystemParams,
    lattice: &Lattice,
    condensate: &CondensateSolution,
    n_modes: usize,
    tol: f64,
) -> Result<ModeSet> {
    let opts = BdgOptions {
        zero_mode_tol: tol,
        ..Default::default()
    };
    solve_bdg_with(params, lattice, condensate, n_modes, &opts)
}

pub fn solve_bdg_with(
    params: &SystemParams,
    lattice: &Lattice,
    condensate: &CondensateSolution,
    n_modes: usize,
    opts: &BdgOptions,
) -> Result<ModeSet> {
    params.validate(lattice)?;
    lattice.check_shape(condensate.psi0.len())?;
    let m = lattice.len();
    if m > opts.max_points {
        return Err(Error::param(
            "max_points",
            format!("dense BdG solve limited to {} points, lattice has {m}", opts.max_points),
        ));
    }
    if n_modes == 0 || n_modes > m - 1 {
        return Err(Error::param(
            "n_modes",
            format!("must be between 1 and {}, got {n_modes}", m - 1),
        ));
    }
    if condensate.psi0.iter().any(|z| z.im.abs() > 1e-12 * z.norm().max(1.0)) {
        return Err(Error::param("condensate", "expected a real-gauge condensate"));
    }

    let zero_mode = solve_zero_mode(params, lattice, condensate, opts.zero_mode_tol)?;

    let kin = kinetic_matrix(params, lattice);
    let mut s = kin;
    for (x, (u, n)) in params.potential.iter().zip(&condensate.density).enumerate() {
        s[(x, x)] += u + params.g * n - condensate.mu_e;
    }
    let mut a_plus_b = s.clone();
    for (x, n) in condensate.density.iter().enumerate() {
        a_plus_b[(x, x)] += 2.0 * params.g * n;
    }

    let s_eig = symmetric_eigen(s)?;
    let scale = s_eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    let lowest = s_eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    if lowest < -1e-8 * scale.max(f64::MIN_POSITIVE) {
        return Err(Error::UnstableMode(lowest));
    }
    let roots = s_eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    let q = &s_eig.eigenvectors;
    let root_s = q * DMatrix::from_diagonal(&roots) * q.transpose();

    let mut reduced = &root_s * &a_plus_b * &root_s;
    let transpose = reduced.transpose();
    reduced = (reduced + transpose) * 0.5;
    let eig = symmetric_eigen(reduced)?;

    // The condensate direction is the null vector of S^{1/2}.
    let psi_unit = DVector::from_iterator(m, real_field(&zero_mode.psi0))
        .normalize();
    let zero_index = (0..m)
        .max_by(|&a, &b| {
            let oa = eig.eigenvectors.column(a).dot(&psi_unit).abs();
            let ob = eig.eigenvectors.column(b).dot(&psi_unit).abs();
            oa.total_cmp(&ob)
        })
        .expect("lattice is non-empty");

    let mut order: Vec<usize> = (0..m).filter(|&i| i != zero_index).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let eps_scale = eig.eigenvalues.iter().fold(0.0f64, |a, l| a.max(l.abs()));
    if let Some(&first) = order.first() {
        let e2 = eig.eigenvalues[first];
        if e2 <= 1e-14 * eps_scale {
            if e2 < -1e-8 * eps_scale {
                return Err(Error::UnstableMode(e2));
            }
            return Err(Error::EigenSolver(format!(
                "more than one zero-energy mode (eps^2 = {e2:.3e})"
            )));
        }
    }

    let dv = lattice.dv();
    let modes: Vec<BogoliubovMode> = order
        .iter()
        .take(n_modes)
        .enumerate()
        .map(|(rank, &i)| {
            let eps = eig.eigenvalues[i].sqrt();
            let w = eig.eigenvectors.column(i);
            // |w| = 1 gives int f h dV = dV / eps; rescale to unity.
            let f = (&root_s * w) * ((1.0 / eps) * (eps / dv).sqrt());
            let h = (&a_plus_b * &f) / eps;
            let mut u: Vec<f64> = f.iter().zip(h.iter()).map(|(f, h)| 0.5 * (f + h)).collect();
            let mut v: Vec<f64> = f.iter().zip(h.iter()).map(|(f, h)| 0.5 * (h - f)).collect();
            // Deterministic sign: the largest component of u is positive.
            let pivot = u
                .iter()
                .copied()
                .max_by(|a, b| a.abs().total_cmp(&b.abs()))
                .unwrap_or(0.0);
            if pivot < 0.0 {
                u.iter_mut().for_each(|x| *x = -*x);
                v.iter_mut().for_each(|x| *x = -*x);
            }
            BogoliubovMode {
                index: rank,
                energy: eps,
                functions: ModeFunctions::Grid {
                    u: u.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
                    v: v.into_iter().map(|x| Complex64::new(x, 0.0)).collect(),
                },
            }
        })
        .collect();

    let mut set = ModeSet {
        modes,
        zero_mode,
        projections: None,
        homogeneous: None,
    };
    if set.is_complete(lattice) {
        set.projections = Some(grid_projections(lattice, &set)?);
    }
    Ok(set)
}

fn grid_projections(lattice: &Lattice, set: &ModeSet) -> Result<Projections> {
    let rows = lattice.len();
    let cols = set.modes.len() + 1;
    let zero = Complex64::new(0.0, 0.0);
    let mut u = vec![zero; rows * cols];
    let mut v = vec![zero; rows * cols];
    let mut fill = |q: usize, uq: Vec<Complex64>, vq: Vec<Complex64>| -> Result<()> {
        let um = lattice.to_modes(&uq)?;
        let vm = lattice.to_modes(&vq)?;
        for k in 0..rows {
            u[k * cols + q] = um[k];
            v[k * cols + q] = vm[lattice.partner(k)];
        }
        Ok(())
    };
    fill(0, set.zero_mode.u0(), set.zero_mode.v0())?;
    for (j, mode) in set.modes.iter().enumerate() {
        fill(j + 1, mode.u_field(lattice), mode.v_field(lattice))?;
    }
    Ok(Projections { rows, cols, u, v })
}

/// Zero-mode pair of a real condensate.
///
/// Checks that `psi0 = Psi0/sqrt(N0)` is annihilated by `H - mu_e`, then solves
/// `(H - mu_e + 2 g n0) Phi~ = psi0` by preconditioned conjugate gradients and
/// sets `alpha = 1 / (2 int psi0 Phi~)`, `Phi0 = 2 alpha Phi~`.
pub fn solve_zero_mode(
    params: &SystemParams,
    lattice: &Lattice,
    condensate: &CondensateSolution,
    tol: f64,
) -> Result<ZeroMode> {
    lattice.check_shape(condensate.psi0.len())?;
    if !(condensate.number > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let root_n = condensate.number.sqrt();
    let psi0: Vec<f64> = condensate.psi0.iter().map(|z| z.re / root_n).collect();
    let kinetic = params.kinetic_energies(lattice);
    let mu = condensate.mu_e;

    let s_local: Vec<f64> = params
        .potential
        .iter()
        .zip(&condensate.density)
        .map(|(u, n)| u + params.g * n - mu)
        .collect();
    let s_psi = apply_operator(lattice, &kinetic, &s_local, &psi0);
    let e_min = params.hbar * params.hbar * lattice.k_squared_min() / (2.0 * params.mass);
    let norm = |f: &[f64]| (f.iter().map(|x| x * x).sum::<f64>() * lattice.dv()).sqrt();
    let null_residual = norm(&s_psi) / (mu.abs().max(e_min) * norm(&psi0));
    if !(null_residual <= tol) {
        return Err(Error::SingularZeroMode(null_residual));
    }

    let to_complex = |f: &[f64]| -> Vec<Complex64> { f.iter().map(|&x| Complex64::new(x, 0.0)).collect() };
    if params.g == 0.0 {
        let psi = to_complex(&psi0);
        return Ok(ZeroMode {
            psi0: psi.clone(),
            phi0: psi,
            alpha: 0.0,
        });
    }

    let local: Vec<f64> = s_local
        .iter()
        .zip(&condensate.density)
        .map(|(s, n)| s + 2.0 * params.g * n)
        .collect();
    let shift = (local.iter().sum::<f64>() / local.len() as f64).max(e_min);
    let phi_tilde = conjugate_gradient(lattice, &kinetic, &local, &psi0, shift)?;
    let overlap: f64 = psi0.iter().zip(&phi_tilde).map(|(a, b)| a * b).sum::<f64>() * lattice.dv();
    if !(overlap > 0.0) {
        return Err(Error::SingularZeroMode(overlap));
    }
    let alpha = 1.0 / (2.0 * overlap);
    let phi0: Vec<f64> = phi_tilde.iter().map(|p| 2.0 * alpha * p).collect();
    Ok(ZeroMode {
        psi0: to_complex(&psi0),
        phi0: to_complex(&phi0),
        alpha,
    })
}

/// Solves `(T + diag(local)) x = rhs` for a positive-definite operator, using
/// `(T + shift)^-1` as preconditioner.
fn conjugate_gradient(
    lattice: &Lattice,
    kinetic: &[f64],
    local: &[f64],
    rhs: &[f64],
    shift: f64,
) -> Result<Vec<f64>> {
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let precondition = |r: &[f64]| -> Vec<f64> {
        let mut work: Vec<Complex64> = r.iter().map(|&x| Complex64::new(x, 0.0)).collect();
        lattice.to_modes_inplace(&mut work);
        work.iter_mut().zip(kinetic).for_each(|(z, e)| *z /= e + shift);
        lattice.to_position_inplace(&mut work);
        work.iter().map(|z| z.re).collect()
    };
    let n = rhs.len();
    let rhs_norm = dot(rhs, rhs).sqrt();
    let mut x = vec![0.0; n];
    let mut r = rhs.to_vec();
    let mut z = precondition(&r);
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 20 * n + 1000;
    for _ in 0..max_iter {
        let ap = apply_operator(lattice, kinetic, local, &p);
        let curvature = dot(&p, &ap);
        if !(curvature > 0.0) {
            return Err(Error::SingularZeroMode(curvature));
        }
        let step = rz / curvature;
        x.iter_mut().zip(&p).for_each(|(x, p)| *x += step * p);
        r.iter_mut().zip(&ap).for_each(|(r, a)| *r -= step * a);
        if dot(&r, &r).sqrt() <= 1e-14 * rhs_norm {
            return Ok(x);
        }
        z = precondition(&r);
        let rz_next = dot(&r, &z);
        let beta = rz_next / rz;
        rz = rz_next;
        p.iter_mut().zip(&z).for_each(|(p, z)| *p = z + beta * *p);
    }
    let residual = dot(&r, &r).sqrt() / rhs_norm;
    if residual <= 1e-10 {
        return Ok(x);
    }
    Err(Error::NonConvergence {
        solver: "zero-mode conjugate gradient",
        iterations: max_iter,
        residual,
    })
}

/// Sets `mu2 = alpha / N0` (exactly `g / V` for a uniform condensate) and
/// `mu1 = mu_e - mu2 N0`.
pub fn nonlinear_mu2(modeset: &ModeSet, condensate: &mut CondensateSolution) -> Result<f64> {
    if !(condensate.number > 0.0) {
        return Err(Error::ZeroNorm);
    }
    let alpha = modeset.zero_mode.alpha;
    let mu2 = match modeset.homogeneous {
        Some(h) => h.g / h.volume,
        None => alpha / condensate.number,
    };
    condensate.alpha = Some(alpha);
    condensate.mu2 = mu2;
    condensate.mu1 = condensate.mu_e - mu2 * condensate.number;
    Ok(mu2)
}
