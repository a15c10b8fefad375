//! Fixtures and moment estimators shared by the integration tests.
#![allow(dead_code)]

use num_complex::Complex64;
use thermal_bec::bogoliubov::ModeSet;
use thermal_bec::meanfield::{solve_number_balance, BalanceOptions, BalancedState, SystemParams};
use thermal_bec::observables::mode_amplitudes;
use thermal_bec::sampler::{FieldSample, GaussianSampler, SamplerOptions};
use thermal_bec::thermal::{bose_occupation, CorrelationMatrix, Representation, ThermalEnsembleSpec, ZeroModeState};
use thermal_bec::{build_lattice, Lattice};

pub struct Setup {
    pub lattice: Lattice,
    pub params: SystemParams,
    pub state: BalancedState,
}

pub fn homogeneous(points: usize, length: f64, g: f64, n_target: f64, temperature: f64, zero_mode: ZeroModeState) -> Setup {
    let lattice = build_lattice(&[points], &[length]).unwrap();
    let params = SystemParams::homogeneous(&lattice, g, 1.0, 1.0, n_target);
    let state = solve_number_balance(&params, &lattice, temperature, &zero_mode, &BalanceOptions::default()).unwrap();
    Setup { lattice, params, state }
}

/// Temperature at which the lowest quasiparticle mode holds `n` on average.
pub fn temperature_for_lowest(modes: &ModeSet, n: f64) -> f64 {
    let eps = modes.energies().into_iter().fold(f64::INFINITY, f64::min);
    let t = eps / (1.0 + 1.0 / n).ln();
    debug_assert!((bose_occupation(eps, t) - n).abs() < 1e-9);
    t
}

pub fn spec(temperature: f64, zero_mode: ZeroModeState, representation: Representation, n_traj: usize, seed: u64) -> ThermalEnsembleSpec {
    ThermalEnsembleSpec {
        temperature,
        zero_mode,
        representation,
        n_traj,
        seed,
        phase_average: true,
    }
}

pub fn draw(setup: &Setup, spec: &ThermalEnsembleSpec, force_general: bool) -> Vec<FieldSample> {
    let sampler = GaussianSampler::new(
        &setup.state.modes,
        &setup.lattice,
        &setup.state.occupations,
        spec,
        &setup.state.condensate,
        &SamplerOptions { force_general },
    )
    .unwrap();
    sampler.draw_ensemble(spec.seed, spec.n_traj)
}

/// Running sums for the mean and standard error of a complex statistic.
#[derive(Clone, Copy, Default)]
pub struct Acc {
    n: f64,
    re: f64,
    im: f64,
    re2: f64,
    im2: f64,
}

impl Acc {
    pub fn add(&mut self, z: Complex64) {
        self.n += 1.0;
        self.re += z.re;
        self.im += z.im;
        self.re2 += z.re * z.re;
        self.im2 += z.im * z.im;
    }

    pub fn mean(&self) -> Complex64 {
        Complex64::new(self.re / self.n, self.im / self.n)
    }

    pub fn stderr(&self) -> (f64, f64) {
        let var = |s: f64, s2: f64| ((s2 / self.n - (s / self.n).powi(2)) * self.n / (self.n - 1.0)).max(0.0);
        (
            (var(self.re, self.re2) / self.n).sqrt(),
            (var(self.im, self.im2) / self.n).sqrt(),
        )
    }

    /// Largest of the real and imaginary deviations from `target`, in
    /// standard errors. Errors are floored at `1e-12` so that entries which
    /// are deterministic up to round-off are compared absolutely.
    pub fn z_score(&self, target: Complex64) -> f64 {
        let m = self.mean();
        let (sr, si) = self.stderr();
        let z = |d: f64, s: f64| d.abs() / s.max(1e-12);
        z(m.re - target.re, sr).max(z(m.im - target.im, si))
    }
}

/// Fluctuation amplitudes `(delta alpha, delta alpha^+)` of a sample with
/// its global phase undone and the condensate amplitude removed.
pub fn fluctuations(sample: &FieldSample, lattice: &Lattice, alpha0: &[Complex64]) -> (Vec<Complex64>, Vec<Complex64>) {
    let (mut a, mut p) = mode_amplitudes(sample, lattice);
    let undo = Complex64::from_polar(1.0, -sample.global_phase);
    for k in 0..a.len() {
        a[k] = a[k] * undo - alpha0[k];
        p[k] = p[k] * undo.conj() - alpha0[k].conj();
    }
    (a, p)
}

pub struct MomentCheck {
    pub worst_z: f64,
    pub checks: usize,
    pub worst_entry: String,
}

/// Compares every second moment of the samples with `sigma` (symmetric
/// ordering for Wigner samples, normal ordering for positive-P samples).
/// Also checks that the de-rotated mean equals the condensate amplitude.
pub fn check_moments(samples: &[FieldSample], lattice: &Lattice, alpha0: &[Complex64], sigma: &CorrelationMatrix) -> MomentCheck {
    let m = lattice.len();
    let n_block = sigma.normal_block();
    let a_block = sigma.anomalous_block();
    let mut mean = vec![Acc::default(); m];
    let mut normal = vec![Acc::default(); m * m];
    let mut anomalous = vec![Acc::default(); m * m];
    let mut anomalous_plus = vec![Acc::default(); m * m];
    let positive_p = samples[0].representation() == Representation::PositiveP;
    for s in samples {
        let (a, p) = fluctuations(s, lattice, alpha0);
        for k in 0..m {
            mean[k].add(a[k]);
            for l in 0..m {
                // <a_k a_l^dag> (symmetric) or <a_l^dag a_k> (normal).
                normal[k * m + l].add(a[k] * p[l]);
                anomalous[k * m + l].add(a[k] * a[l]);
                if positive_p {
                    anomalous_plus[k * m + l].add(p[k] * p[l]);
                }
            }
        }
    }
    let mut worst = MomentCheck {
        worst_z: 0.0,
        checks: 0,
        worst_entry: String::new(),
    };
    let mut record = |z: f64, label: String| {
        worst.checks += 1;
        if z > worst.worst_z || z.is_nan() {
            worst.worst_z = z;
            worst.worst_entry = label;
        }
    };
    for k in 0..m {
        record(mean[k].z_score(Complex64::new(0.0, 0.0)), format!("mean[{k}]"));
        for l in 0..m {
            record(normal[k * m + l].z_score(n_block[(k, l)]), format!("N[{k},{l}]"));
            if l >= k {
                record(anomalous[k * m + l].z_score(a_block[(k, l)]), format!("A[{k},{l}]"));
                if positive_p {
                    record(
                        anomalous_plus[k * m + l].z_score(a_block[(k, l)].conj()),
                        format!("A+[{k},{l}]"),
                    );
                }
            }
        }
    }
    worst
}

/// `<a(t)>` for a coherent initial state `alpha` under `H = hbar kappa
/// a^dag a^dag a a / 2`, summed in the Fock basis.
pub fn kerr_coherence(alpha: Complex64, kappa: f64, t: f64) -> Complex64 {
    let mut total = Complex64::new(0.0, 0.0);
    let n_max = (alpha.norm_sqr() + 40.0 * alpha.norm() + 60.0) as usize;
    // c_n = exp(-|alpha|^2/2) alpha^n / sqrt(n!), built recursively.
    let mut c = Complex64::new((-alpha.norm_sqr() / 2.0).exp(), 0.0);
    for n in 0..n_max {
        let next = c * alpha / ((n + 1) as f64).sqrt();
        total += c.conj() * next * ((n + 1) as f64).sqrt() * Complex64::from_polar(1.0, -kappa * n as f64 * t);
        c = next;
    }
    total
}

/// Exact `Var(N)` of a Gaussian state with mode means `beta` and
/// normal-ordered fluctuation correlations `sigma`, by Wick's theorem:
/// `N = |beta|^2 + L + Q` with `L` linear and `Q` quadratic in the
/// fluctuations, `Cov(L, Q) = 0`.
pub fn gaussian_number_variance(beta: &[Complex64], sigma: &CorrelationMatrix) -> f64 {
    let m = beta.len();
    let nb = sigma.normal_block();
    let mb = sigma.anomalous_block();
    // n(k, l) = <a_k^dag a_l> = N_lk; mm(k, l) = <a_k a_l>.
    let n = |k: usize, l: usize| nb[(l, k)];
    let mm = |k: usize, l: usize| mb[(k, l)];
    let delta = |k: usize, l: usize| if k == l { 1.0 } else { 0.0 };
    let mut linear = Complex64::new(0.0, 0.0);
    let mut quadratic = Complex64::new(0.0, 0.0);
    for k in 0..m {
        for l in 0..m {
            let (bk, bl) = (beta[k], beta[l]);
            linear += bk.conj() * bl.conj() * mm(k, l)
                + bk * bl * mm(k, l).conj()
                + bk.conj() * bl * (delta(k, l) + n(l, k))
                + bk * bl.conj() * n(k, l);
            quadratic += n(k, l) * (delta(k, l) + n(l, k)) + mm(k, l).norm_sqr();
        }
    }
    (linear + quadratic).re
}
