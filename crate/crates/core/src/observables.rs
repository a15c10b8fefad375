//! Reduction of trajectory ensembles to ordering-corrected observables.
//!
//! Wigner moments are symmetric-ordered and positive-P moments are
//! normal-ordered; every correction between the two lives here. Standard
//! errors are delete-one jackknife estimates over trajectories.
//!
//! Wigner corrections used, per mode or per cell of volume `dV`:
//!
//! ```text
//! <n_k>        = <|alpha_k|^2> - 1/2
//! dN^2         = Var(sum_k |alpha_k|^2) - M/4
//! <n(x)>       = <|Psi|^2> - 1/(2 dV)
//! <:n(x)^2:>   = <|Psi|^4> - 2 <n(x)>/dV - 1/(2 dV^2)
//! ```

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bogoliubov::ModeSet;
use crate::dynamics::TrajectoryEnsemble;
use crate::error::{Error, Result};
use crate::lattice::Lattice;
use crate::sampler::FieldSample;
use crate::thermal::Representation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ObservableSeries {
    pub times: Vec<f64>,
    pub values: Vec<f64>,
    pub stderr: Vec<f64>,
    pub n_traj_effective: usize,
    pub ordering_applied: String,
}

impl ObservableSeries {
    fn new(times: Vec<f64>, n_traj_effective: usize, ordering_applied: &str) -> Self {
        ObservableSeries {
            values: Vec::with_capacity(times.len()),
            stderr: Vec::with_capacity(times.len()),
            times,
            n_traj_effective,
            ordering_applied: ordering_applied.to_string(),
        }
    }

    fn push(&mut self, estimate: Estimate) {
        self.values.push(estimate.value);
        self.stderr.push(estimate.stderr);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub value: f64,
    pub stderr: f64,
}

/// `f` of the sample means with its delete-one jackknife standard error.
/// `rows` holds one vector of per-trajectory statistics each. The error is
/// zero for fewer than two trajectories.
pub fn jackknife<F>(rows: &[Vec<f64>], f: F) -> Estimate
where
    F: Fn(&[f64]) -> f64,
{
    let n = rows.len();
    let width = rows.first().map_or(0, Vec::len);
    let mut total = vec![0.0; width];
    for row in rows {
        total.iter_mut().zip(row).for_each(|(t, x)| *t += x);
    }
    let mean: Vec<f64> = total.iter().map(|t| t / n as f64).collect();
    let value = f(&mean);
    if n < 2 {
        return Estimate { value, stderr: 0.0 };
    }
    let mut loo = vec![0.0; width];
    let partial: Vec<f64> = rows
        .iter()
        .map(|row| {
            loo.iter_mut()
                .zip(total.iter().zip(row))
                .for_each(|(l, (t, x))| *l = (t - x) / (n - 1) as f64);
            f(&loo)
        })
        .collect();
    let centre = partial.iter().sum::<f64>() / n as f64;
    let spread: f64 = partial.iter().map(|p| (p - centre).powi(2)).sum();
    Estimate {
        value,
        stderr: ((n - 1) as f64 / n as f64 * spread).sqrt(),
    }
}

fn check_ensemble(ensemble: &TrajectoryEnsemble) -> Result<()> {
    for snap in &ensemble.snapshots {
        if let Some(bad) = snap.samples.iter().find(|s| s.representation() != ensemble.representation) {
            return Err(Error::RepresentationMismatch(format!(
                "trajectory {} is not a {} sample",
                bad.traj_id, ensemble.representation
            )));
        }
        ensemble.lattice.check_shape(snap.samples.first().map_or(ensemble.lattice.len(), |s| s.psi.len()))?;
    }
    Ok(())
}

fn effective(ensemble: &TrajectoryEnsemble) -> usize {
    ensemble.snapshots.first().map_or(0, |s| s.samples.len())
}

/// `(alpha, alpha^+)` mode amplitudes of one sample, with `alpha^+ = alpha^*`
/// for Wigner samples.
pub fn mode_amplitudes(sample: &FieldSample, lattice: &Lattice) -> (Vec<Complex64>, Vec<Complex64>) {
    let alpha = lattice.to_modes(&sample.psi).expect("checked shape");
    let plus = match &sample.psi_plus {
        Some(p) => {
            let mut conj: Vec<Complex64> = p.iter().map(|z| z.conj()).collect();
            lattice.to_modes_inplace(&mut conj);
            conj.iter().map(|z| z.conj()).collect()
        }
        None => alpha.iter().map(|z| z.conj()).collect(),
    };
    (alpha, plus)
}

fn ordering_label(representation: Representation, wigner: &str) -> String {
    match representation {
        Representation::Wigner => wigner.to_string(),
        Representation::PositiveP => "normal-ordered estimator; no correction".to_string(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModeSeries {
    pub index: usize,
    pub kvec: Vec<f64>,
    pub series: ObservableSeries,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupationSpectrum {
    pub zero_mode: ObservableSeries,
    /// Lattice modes `k != 0` in lattice order.
    pub modes: Vec<ModeSeries>,
}

/// `<n_k>(t)` for every lattice mode.
pub fn mode_occupations(ensemble: &TrajectoryEnsemble) -> Result<OccupationSpectrum> {
    check_ensemble(ensemble)?;
    let lattice = &ensemble.lattice;
    let m = lattice.len();
    let times = ensemble.times();
    let label = ordering_label(ensemble.representation, "symmetric-ordered: <|alpha_k|^2> - 1/2");
    let n_eff = effective(ensemble);
    let mut all: Vec<ObservableSeries> = (0..m)
        .map(|_| ObservableSeries::new(times.clone(), n_eff, &label))
        .collect();
    let offset = match ensemble.representation {
        Representation::Wigner => 0.5,
        Representation::PositiveP => 0.0,
    };
    for snap in &ensemble.snapshots {
        let per_traj: Vec<Vec<f64>> = snap
            .samples
            .iter()
            .map(|s| {
                let (alpha, plus) = mode_amplitudes(s, lattice);
                alpha.iter().zip(&plus).map(|(a, p)| (p * a).re - offset).collect()
            })
            .collect();
        for (k, series) in all.iter_mut().enumerate() {
            let rows: Vec<Vec<f64>> = per_traj.iter().map(|r| vec![r[k]]).collect();
            series.push(jackknife(&rows, |x| x[0]));
        }
    }
    let mut iter = all.into_iter();
    let zero_mode = iter.next().expect("lattice is non-empty");
    let modes = iter
        .enumerate()
        .map(|(j, series)| ModeSeries {
            index: j + 1,
            kvec: lattice.kvec(j + 1).to_vec(),
            series,
        })
        .collect();
    Ok(OccupationSpectrum { zero_mode, modes })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NumberSeries {
    pub mean: ObservableSeries,
    pub variance: ObservableSeries,
}

/// Selects the `(alpha, alpha^+)` pair of one branch from mode amplitudes.
type Pick<'a> = dyn Fn(&[Complex64], &[Complex64]) -> (Complex64, Complex64) + 'a;

/// Total number `N(t)` and variance `dN^2(t)`.
pub fn number_statistics(ensemble: &TrajectoryEnsemble) -> Result<NumberSeries> {
    check_ensemble(ensemble)?;
    let lattice = &ensemble.lattice;
    let half_modes = 0.5 * lattice.len() as f64;
    let times = ensemble.times();
    let n_eff = effective(ensemble);
    let (mean_label, var_label) = match ensemble.representation {
        Representation::Wigner => (
            "symmetric-ordered: <W> - M/2, W = sum |alpha_k|^2".to_string(),
            "symmetric-ordered: Var(W) - M/4".to_string(),
        ),
        Representation::PositiveP => (
            "normal-ordered: Re <N>".to_string(),
            "normal-ordered: Re <N^2> + <N> - <N>^2".to_string(),
        ),
    };
    let mut mean = ObservableSeries::new(times.clone(), n_eff, &mean_label);
    let mut variance = ObservableSeries::new(times, n_eff, &var_label);
    for snap in &ensemble.snapshots {
        let rows: Vec<Vec<f64>> = snap
            .samples
            .iter()
            .map(|s| match &s.psi_plus {
                None => {
                    let w = lattice.norm_sqr(&s.psi);
                    vec![w, w * w]
                }
                Some(plus) => {
                    let n: Complex64 = s.psi.iter().zip(plus).map(|(a, b)| a * b).sum::<Complex64>() * lattice.dv();
                    vec![n.re, (n * n).re]
                }
            })
            .collect();
        match ensemble.representation {
            Representation::Wigner => {
                mean.push(jackknife(&rows, |x| x[0] - half_modes));
                variance.push(jackknife(&rows, |x| x[1] - x[0] * x[0] - 0.5 * half_modes));
            }
            Representation::PositiveP => {
                mean.push(jackknife(&rows, |x| x[0]));
                variance.push(jackknife(&rows, |x| x[1] + x[0] - x[0] * x[0]));
            }
        }
    }
    Ok(NumberSeries { mean, variance })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    Plus,
    Minus,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratureVariance {
    /// Lattice mode `k`; the pair is `(k, -k)`.
    pub index: usize,
    pub branch: Branch,
    pub var_p: Estimate,
    pub var_q: Estimate,
}

/// Symmetric-ordered variances of `P` and `Q` for the `a_{k+-} =
/// (a_k +- a_{-k})/sqrt2` combinations at one snapshot, after undoing each
/// trajectory's global phase. The zero mode and self-partnered modes appear
/// as a single `Plus` entry.
pub fn quadrature_variances(
    ensemble: &TrajectoryEnsemble,
    modeset: &ModeSet,
    snapshot: usize,
) -> Result<Vec<QuadratureVariance>> {
    if modeset.homogeneous.is_none() {
        return Err(Error::NotHomogeneous);
    }
    check_ensemble(ensemble)?;
    let lattice = &ensemble.lattice;
    let snap = ensemble
        .snapshots
        .get(snapshot)
        .ok_or_else(|| Error::param("snapshot", format!("index {snapshot} out of range")))?;
    let shift = match ensemble.representation {
        Representation::Wigner => 0.0,
        Representation::PositiveP => 0.5,
    };
    let amplitudes: Vec<(Vec<Complex64>, Vec<Complex64>)> = snap
        .samples
        .iter()
        .map(|s| {
            let (mut a, mut p) = mode_amplitudes(s, lattice);
            let undo = Complex64::from_polar(1.0, -s.global_phase);
            a.iter_mut().for_each(|z| *z *= undo);
            p.iter_mut().for_each(|z| *z *= undo.conj());
            (a, p)
        })
        .collect();

    let i = Complex64::i();
    let r = std::f64::consts::FRAC_1_SQRT_2;
    let variance = |pick: &Pick<'_>| -> (Estimate, Estimate) {
        let rows: Vec<Vec<f64>> = amplitudes
            .iter()
            .map(|(a, p)| {
                let (x, xp) = pick(a, p);
                let pq = (x + xp) * r;
                let qq = i * (x - xp) * r;
                vec![pq.re, (pq * pq).re, qq.re, (qq * qq).re]
            })
            .collect();
        (
            jackknife(&rows, |m| m[1] - m[0] * m[0] + shift),
            jackknife(&rows, |m| m[3] - m[2] * m[2] + shift),
        )
    };

    let mut out = Vec::new();
    for k in 0..lattice.len() {
        let partner = lattice.partner(k);
        if k == partner {
            let (var_p, var_q) = variance(&|a, p| (a[k], p[k]));
            out.push(QuadratureVariance {
                index: k,
                branch: Branch::Plus,
                var_p,
                var_q,
            });
        } else if k < partner {
            for (branch, sign) in [(Branch::Plus, 1.0), (Branch::Minus, -1.0)] {
                let (var_p, var_q) = variance(&|a, p| ((a[k] + sign * a[partner]) * r, (p[k] + sign * p[partner]) * r));
                out.push(QuadratureVariance {
                    index: k,
                    branch,
                    var_p,
                    var_q,
                });
            }
        }
    }
    Ok(out)
}

/// `g2(0) = <:n^2:> / <n>^2` with both moments averaged over the lattice.
pub fn g2_zero(ensemble: &TrajectoryEnsemble) -> Result<ObservableSeries> {
    check_ensemble(ensemble)?;
    let lattice = &ensemble.lattice;
    let dv = lattice.dv();
    let points = lattice.len() as f64;
    let label = ordering_label(
        ensemble.representation,
        "symmetric-ordered: <|Psi|^4> - 2<n>/dV - 1/(2 dV^2) over (<|Psi|^2> - 1/(2 dV))^2",
    );
    let mut series = ObservableSeries::new(ensemble.times(), effective(ensemble), &label);
    for snap in &ensemble.snapshots {
        let rows: Vec<Vec<f64>> = snap
            .samples
            .iter()
            .map(|s| match &s.psi_plus {
                None => {
                    let n1 = s.psi.iter().map(|z| z.norm_sqr()).sum::<f64>() / points;
                    let n2 = s.psi.iter().map(|z| z.norm_sqr().powi(2)).sum::<f64>() / points;
                    vec![n1, n2]
                }
                Some(plus) => {
                    let mut n1 = Complex64::new(0.0, 0.0);
                    let mut n2 = Complex64::new(0.0, 0.0);
                    for (a, b) in s.psi.iter().zip(plus) {
                        let n = a * b;
                        n1 += n;
                        n2 += n * n;
                    }
                    vec![n1.re / points, n2.re / points]
                }
            })
            .collect();
        let density = |x: &[f64]| match ensemble.representation {
            Representation::Wigner => x[0] - 0.5 / dv,
            Representation::PositiveP => x[0],
        };
        let pair = |x: &[f64]| match ensemble.representation {
            Representation::Wigner => {
                let n = x[0] - 0.5 / dv;
                x[1] - 2.0 * n / dv - 0.5 / (dv * dv)
            }
            Representation::PositiveP => x[1],
        };
        let n = jackknife(&rows, density);
        if !(n.value > 0.0) || n.value <= 5.0 * n.stderr {
            return Err(Error::ZeroDensity);
        }
        series.push(jackknife(&rows, |x| {
            let d = density(x);
            pair(x) / (d * d)
        }));
    }
    Ok(series)
}
