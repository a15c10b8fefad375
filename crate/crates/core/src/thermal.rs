//! Gaussian initial-state description: Bose occupations, the condensate-mode
//! state and the `2M x 2M` correlation matrices in the `[a, a^dag]` basis.
//!
//! The zero-mode operator is `b0 = (P - iQ)/sqrt(2)`. Temperatures are in
//! energy units.

use nalgebra::DMatrix;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::ModeSet;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::meanfield::CondensateSolution;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ZeroModeState {
    #[default]
    Vacuum,
    Thermal {
        occupation: f64,
    },
    /// Squeezed vacuum; `theta = 0` squeezes `P`.
    Squeezed {
        r: f64,
        #[serde(default)]
        theta: f64,
    },
}


impl ZeroModeState {
    pub fn validate(&self) -> Result<()> {
        match *self {
            ZeroModeState::Vacuum => Ok(()),
            ZeroModeState::Thermal { occupation } => {
                if occupation >= 0.0 && occupation.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("zero_mode.occupation", "must be finite and non-negative"))
                }
            }
            ZeroModeState::Squeezed { r, theta } => {
                if r.is_finite() && theta.is_finite() {
                    Ok(())
                } else {
                    Err(Error::param("zero_mode.r", "squeezing parameters must be finite"))
                }
            }
        }
    }

    /// Symmetric-ordered covariance of `(P, Q)`.
    pub fn quadrature_covariance(&self) -> [[f64; 2]; 2] {
        match *self {
            ZeroModeState::Vacuum => [[0.5, 0.0], [0.0, 0.5]],
            ZeroModeState::Thermal { occupation } => {
                let s = occupation + 0.5;
                [[s, 0.0], [0.0, s]]
            }
            ZeroModeState::Squeezed { r, theta } => {
                let small = 0.5 * (-2.0 * r).exp();
                let large = 0.5 * (2.0 * r).exp();
                let (sin, cos) = theta.sin_cos();
                [
                    [small * cos * cos + large * sin * sin, (small - large) * sin * cos],
                    [(small - large) * sin * cos, small * sin * sin + large * cos * cos],
                ]
            }
        }
    }

    /// `<P^2>`, symmetric-ordered.
    pub fn p_variance(&self) -> f64 {
        self.quadrature_covariance()[0][0]
    }

    /// `<{b0 b0^dag}>/2 + <{b0^dag b0}>/2`, i.e. `<b0^dag b0> + 1/2`.
    pub fn symmetric_occupation(&self) -> f64 {
        let c = self.quadrature_covariance();
        0.5 * (c[0][0] + c[1][1])
    }

    /// `<b0 b0>`.
    pub fn anomalous(&self) -> Complex64 {
        let c = self.quadrature_covariance();
        Complex64::new(0.5 * (c[0][0] - c[1][1]), -c[0][1])
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Representation {
    Wigner,
    #[serde(alias = "positive-p")]
    PositiveP,
}

impl std::fmt::Display for Representation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Representation::Wigner => "wigner",
            Representation::PositiveP => "positive_p",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ThermalEnsembleSpec {
    pub temperature: f64,
    #[serde(default)]
    pub zero_mode: ZeroModeState,
    pub representation: Representation,
    pub n_traj: usize,
    pub seed: u64,
    /// Draw a uniform global phase per trajectory.
    #[serde(default = "default_true")]
    pub phase_average: bool,
}

fn default_true() -> bool {
    true
}

impl ThermalEnsembleSpec {
    pub fn validate(&self) -> Result<()> {
        if !(self.temperature >= 0.0 && self.temperature.is_finite()) {
            return Err(Error::param("temperature", "must be finite and non-negative"));
        }
        if self.n_traj == 0 {
            return Err(Error::param("n_traj", "must be at least 1"));
        }
        self.zero_mode.validate()
    }
}

/// Bose factor `1/(e^{eps/T} - 1)`; zero at `T = 0`.
pub fn bose_occupation(energy: f64, temperature: f64) -> f64 {
    if temperature <= 0.0 {
        0.0
    } else {
        1.0 / (energy / temperature).exp_m1()
    }
}

/// Thermal occupations of the nonzero-energy modes, aligned with
/// `modeset.modes`.
pub fn occupations(modeset: &ModeSet, temperature: f64) -> Vec<f64> {
    modeset
        .modes
        .iter()
        .map(|m| bose_occupation(m.energy, temperature))
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Ordering {
    Symmetric,
    Normal,
}

/// Correlations `[[N, A], [A^*, N^*]]` with `N_kk' = <a_k a_k'^dag>` and
/// `A_kk' = <a_k a_k'>` in the stated ordering, fluctuations only.
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub sigma: DMatrix<Complex64>,
    pub ordering: Ordering,
}

impl CorrelationMatrix {
    pub fn modes(&self) -> usize {
        self.sigma.nrows() / 2
    }

    pub fn normal_block(&self) -> DMatrix<Complex64> {
        let m = self.modes();
        self.sigma.view((0, 0), (m, m)).into_owned()
    }

    pub fn anomalous_block(&self) -> DMatrix<Complex64> {
        let m = self.modes();
        self.sigma.view((0, m), (m, m)).into_owned()
    }

    /// Largest violation of `N = N^dag`, `A = A^T` and the conjugate blocks.
    pub fn structure_error(&self) -> f64 {
        let m = self.modes();
        let n = self.normal_block();
        let a = self.anomalous_block();
        let lower_left = self.sigma.view((m, 0), (m, m));
        let lower_right = self.sigma.view((m, m), (m, m));
        let mut worst: f64 = 0.0;
        for i in 0..m {
            for j in 0..m {
                worst = worst
                    .max((n[(i, j)] - n[(j, i)].conj()).norm())
                    .max((a[(i, j)] - a[(j, i)]).norm())
                    .max((lower_left[(i, j)] - a[(i, j)].conj()).norm())
                    .max((lower_right[(i, j)] - n[(i, j)].conj()).norm());
            }
        }
        worst
    }

    /// Real covariance of the quadratures `x = (a + a^dag)/sqrt2`,
    /// `y = (a - a^dag)/(i sqrt2)`, stacked as `[x; y]`, in the same ordering.
    pub fn quadrature_covariance(&self) -> DMatrix<f64> {
        let m = self.modes();
        let n = self.normal_block();
        let a = self.anomalous_block();
        let mut gamma = DMatrix::zeros(2 * m, 2 * m);
        for i in 0..m {
            for j in 0..m {
                // <a_i^dag a_j> in this ordering is N_ji.
                let nn = n[(j, i)];
                let aa = a[(i, j)];
                gamma[(i, j)] = aa.re + nn.re;
                gamma[(m + i, m + j)] = nn.re - aa.re;
                gamma[(i, m + j)] = aa.im + nn.im;
                gamma[(m + j, i)] = aa.im + nn.im;
            }
        }
        gamma
    }
}

/// Symmetric-ordered correlation matrix of the fluctuations at zero global
/// phase.
pub fn correlation_matrix(
    modeset: &ModeSet,
    lattice: &Lattice,
    occupations: &[f64],
    zero_mode: &ZeroModeState,
) -> Result<CorrelationMatrix> {
    if occupations.len() != modeset.modes.len() {
        return Err(Error::ShapeMismatch {
            expected: modeset.modes.len(),
            actual: occupations.len(),
        });
    }
    let proj = modeset.projections(lattice)?;
    let u = proj.u_matrix();
    let v_conj = proj.v_matrix().map(|z| z.conj());
    let m = proj.rows;

    let mut weights = Vec::with_capacity(proj.cols);
    weights.push(zero_mode.symmetric_occupation());
    weights.extend(occupations.iter().map(|n| n + 0.5));
    let s = DMatrix::from_diagonal(&nalgebra::DVector::from_iterator(
        weights.len(),
        weights.into_iter().map(|w| Complex64::new(w, 0.0)),
    ));

    let u_s = &u * &s;
    let vc_s = &v_conj * &s;
    let mut normal = &u_s * u.adjoint() + &vc_s * v_conj.adjoint();
    let mut anomalous = -(&u_s * v_conj.transpose() + &vc_s * u.transpose());

    // Zero-mode pieces carrying <b0 b0>.
    let a0 = zero_mode.anomalous();
    for k in 0..m {
        for l in 0..m {
            let (uk, ul) = (u[(k, 0)], u[(l, 0)]);
            let (vck, vcl) = (v_conj[(k, 0)], v_conj[(l, 0)]);
            normal[(k, l)] -= uk * vcl.conj() * a0 + vck * ul.conj() * a0.conj();
            anomalous[(k, l)] += uk * ul * a0 + vck * vcl * a0.conj();
        }
    }

    let mut sigma = DMatrix::zeros(2 * m, 2 * m);
    sigma.view_mut((0, 0), (m, m)).copy_from(&normal);
    sigma.view_mut((0, m), (m, m)).copy_from(&anomalous);
    sigma.view_mut((m, 0), (m, m)).copy_from(&anomalous.map(|z| z.conj()));
    sigma.view_mut((m, m), (m, m)).copy_from(&normal.map(|z| z.conj()));
    Ok(CorrelationMatrix {
        sigma,
        ordering: Ordering::Symmetric,
    })
}

/// `Sigma_N = Sigma_phi - I/2` on the normal blocks.
pub fn normal_order(symmetric: &CorrelationMatrix) -> Result<CorrelationMatrix> {
    if symmetric.ordering != Ordering::Symmetric {
        return Err(Error::WrongOrdering { expected: "symmetric" });
    }
    let mut sigma = symmetric.sigma.clone();
    for i in 0..sigma.nrows() {
        sigma[(i, i)] -= Complex64::new(0.5, 0.0);
    }
    Ok(CorrelationMatrix {
        sigma,
        ordering: Ordering::Normal,
    })
}

/// Mean number of non-condensed particles,
/// `sum_k int [|u_k|^2 n_k + |v_k|^2 (n_k + 1)]` plus the zero-mode
/// contribution of the chosen condensate-mode state.
pub fn depletion(
    modeset: &ModeSet,
    occupations: &[f64],
    zero_mode: &ZeroModeState,
    lattice: &Lattice,
) -> f64 {
    let excited: f64 = modeset
        .modes
        .iter()
        .zip(occupations)
        .map(|(mode, n)| {
            let (uu, vv) = mode.norms(lattice);
            uu * n + vv * (n + 1.0)
        })
        .sum();

    let zm = &modeset.zero_mode;
    let u0 = zm.u0();
    let v0 = zm.v0();
    let uu = lattice.norm_sqr(&u0);
    let vv = lattice.norm_sqr(&v0);
    let uv: Complex64 = u0.iter().zip(&v0).map(|(a, b)| a * b).sum::<Complex64>() * lattice.dv();
    let ns = zero_mode.symmetric_occupation();
    let zero = uu * (ns - 0.5) + vv * (ns + 0.5) - 2.0 * (uv * zero_mode.anomalous()).re;
    excited + zero
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NumberStatistics {
    pub mean: f64,
    pub variance: f64,
}

/// Analytic mean particle number and `dN^2 = 2 <P^2> N0`.
pub fn number_statistics(
    modeset: &ModeSet,
    lattice: &Lattice,
    occupations: &[f64],
    zero_mode: &ZeroModeState,
    condensate: &CondensateSolution,
) -> NumberStatistics {
    NumberStatistics {
        mean: condensate.number + depletion(modeset, occupations, zero_mode, lattice),
        variance: 2.0 * zero_mode.p_variance() * condensate.number,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bogoliubov::{homogeneous_modes, ModeFunctions};
    use crate::lattice::build_lattice;
    use crate::meanfield::{solve_stationary, SystemParams};
    use approx::assert_relative_eq;

    #[test]
    fn bose_factor_examples() {
        assert_relative_eq!(bose_occupation(2f64.ln(), 1.0), 1.0, max_relative = 1e-14);
        assert_eq!(bose_occupation(1.0, 0.0), 0.0);
        // 1/(e^3 - 1)
        assert!((bose_occupation(3.0, 1.0) - 0.052395).abs() < 1e-6);
    }

    fn homogeneous(g: f64, n: usize) -> (Lattice, SystemParams, ModeSet, CondensateSolution) {
        let lat = build_lattice(&[n], &[n as f64]).unwrap();
        let params = SystemParams::homogeneous(&lat, g, 1.0, 1.0, 10.0 * n as f64);
        let cond = solve_stationary(&params, &lat, params.n_target, 1e-12).unwrap();
        let set = homogeneous_modes(&params, &lat, 10.0).unwrap();
        (lat, params, set, cond)
    }

    #[test]
    fn free_vacuum_is_half_identity() {
        let (lat, _, set, _) = homogeneous(0.0, 8);
        let occ = occupations(&set, 0.0);
        let sigma = correlation_matrix(&set, &lat, &occ, &ZeroModeState::Vacuum).unwrap();
        for i in 0..16 {
            for j in 0..16 {
                let expected = if i == j { 0.5 } else { 0.0 };
                assert!((sigma.sigma[(i, j)] - Complex64::new(expected, 0.0)).norm() < 1e-15);
            }
        }
        let normal = normal_order(&sigma).unwrap();
        assert!(normal.sigma.iter().all(|z| z.norm() < 1e-15));
        assert!(matches!(normal_order(&normal), Err(Error::WrongOrdering { .. })));
    }

    #[test]
    fn pair_entries_match_closed_forms() {
        let (lat, _, set, _) = homogeneous(0.1, 8);
        let occ = occupations(&set, 0.0);
        let sigma = correlation_matrix(&set, &lat, &occ, &ZeroModeState::Vacuum).unwrap();
        let n = sigma.normal_block();
        let a = sigma.anomalous_block();
        for mode in &set.modes {
            let ModeFunctions::PlaneWave { u, v } = mode.functions else { unreachable!() };
            let k = mode.index;
            let p = lat.partner(k);
            assert_relative_eq!(n[(k, k)].re, 0.5 * (u * u + v * v), max_relative = 1e-13);
            // Both b_k and b_{-k} contribute -u v / 2 to <{a_k a_-k}>.
            assert_relative_eq!(a[(k, p)].re, -u * v, max_relative = 1e-13);
        }
        assert!(sigma.structure_error() < 1e-12);
    }

    #[test]
    fn temperature_raises_every_diagonal() {
        let (lat, _, set, _) = homogeneous(0.1, 8);
        let cold = correlation_matrix(&set, &lat, &occupations(&set, 0.0), &ZeroModeState::Vacuum).unwrap();
        let hot = correlation_matrix(&set, &lat, &occupations(&set, 2.0), &ZeroModeState::Vacuum).unwrap();
        for i in 0..16 {
            assert!(hot.sigma[(i, i)].re >= cold.sigma[(i, i)].re);
            assert!(cold.sigma[(i, i)].re >= 0.5 - 1e-15);
        }
    }

    #[test]
    fn normal_ordering_of_thermal_and_squeezed_entries() {
        let (lat, _, set, _) = homogeneous(0.0, 8);
        let occ = occupations(&set, 1.0);
        let sigma = correlation_matrix(&set, &lat, &occ, &ZeroModeState::Vacuum).unwrap();
        let normal = normal_order(&sigma).unwrap();
        for (j, mode) in set.modes.iter().enumerate() {
            let k = mode.index;
            assert_relative_eq!(normal.sigma[(k, k)].re, occ[j], max_relative = 1e-12);
        }
        // (n + 1/2) e^{-2r} - 1/2 goes negative for strong squeezing.
        let r: f64 = 1.0;
        assert!(0.6 * (-2.0 * r).exp() - 0.5 < 0.0);
    }

    #[test]
    fn zero_mode_number_variance() {
        let (lat, _, set, cond) = homogeneous(0.1, 8);
        let occ = occupations(&set, 0.0);
        let vac = number_statistics(&set, &lat, &occ, &ZeroModeState::Vacuum, &cond);
        assert_relative_eq!(vac.variance, cond.number, max_relative = 1e-14);
        let sq = number_statistics(&set, &lat, &occ, &ZeroModeState::Squeezed { r: 0.5, theta: 0.0 }, &cond);
        assert_relative_eq!(sq.variance, cond.number * (-1f64).exp(), max_relative = 1e-14);
        let th = number_statistics(&set, &lat, &occ, &ZeroModeState::Thermal { occupation: 2.0 }, &cond);
        assert_relative_eq!(th.variance, 5.0 * cond.number, max_relative = 1e-14);
    }

    #[test]
    fn zero_mode_moments() {
        let sq = ZeroModeState::Squeezed { r: 0.3, theta: 0.0 };
        assert_relative_eq!(sq.p_variance(), 0.5 * (-0.6f64).exp());
        // <b0 b0> = (<P^2> - <Q^2>)/2 = -sinh(2r)/2
        assert_relative_eq!(sq.anomalous().re, -0.5 * (0.6f64).sinh(), max_relative = 1e-14);
        assert_relative_eq!(sq.symmetric_occupation(), 0.5 * (0.6f64).cosh(), max_relative = 1e-14);
        let rotated = ZeroModeState::Squeezed { r: 0.3, theta: std::f64::consts::FRAC_PI_2 };
        assert_relative_eq!(rotated.p_variance(), 0.5 * (0.6f64).exp(), max_relative = 1e-12);
    }

    #[test]
    fn homogeneous_vacuum_depletion_is_sum_of_v_squared() {
        let (lat, _, set, _) = homogeneous(0.1, 16);
        let occ = occupations(&set, 0.0);
        let expected: f64 = set
            .modes
            .iter()
            .map(|m| match m.functions {
                ModeFunctions::PlaneWave { v, .. } => v * v,
                _ => unreachable!(),
            })
            .sum();
        let d = depletion(&set, &occ, &ZeroModeState::Vacuum, &lat);
        assert_relative_eq!(d, expected, max_relative = 1e-13);
    }
}
