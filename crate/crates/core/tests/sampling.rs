mod common;

use num_complex::Complex64;
use thermal_bec::bogoliubov::{BdgOptions, ModeFunctions};
use thermal_bec::dynamics::TrajectoryEnsemble;
use thermal_bec::meanfield::{harmonic_potential, solve_number_balance, BalanceOptions, SystemParams};
use thermal_bec::observables::{g2_zero, mode_occupations, number_statistics, quadrature_variances, Branch};
use thermal_bec::sampler::{FieldSample, RngStream};
use thermal_bec::thermal::{correlation_matrix, normal_order, Representation, ZeroModeState};
use thermal_bec::{build_lattice, Lattice};

use common::{check_moments, draw, homogeneous, spec, temperature_for_lowest, Setup};

fn trapped(points: usize, n_target: f64, temperature: f64, zero_mode: ZeroModeState) -> Setup {
    let lattice = build_lattice(&[points], &[points as f64]).unwrap();
    let mut params = SystemParams::homogeneous(&lattice, 0.05, 1.0, 1.0, n_target);
    params.potential = harmonic_potential(&lattice, 1.0, &[0.25]).unwrap();
    let opts = BalanceOptions {
        bdg: BdgOptions::default(),
        ..BalanceOptions::default()
    };
    let state = solve_number_balance(&params, &lattice, temperature, &zero_mode, &opts).unwrap();
    Setup { lattice, params, state }
}

#[test]
fn trapped_wigner_moments_match_symmetric_matrix() {
    let zm = ZeroModeState::Thermal { occupation: 0.7 };
    let setup = trapped(16, 60.0, 0.3, zm);
    assert!(setup.state.modes.homogeneous.is_none());
    let sym = correlation_matrix(&setup.state.modes, &setup.lattice, &setup.state.occupations, &zm).unwrap();
    let alpha0 = setup.state.condensate.mode_amplitudes(&setup.lattice);
    let samples = draw(&setup, &spec(0.3, zm, Representation::Wigner, 40_000, 5), false);
    let check = check_moments(&samples, &setup.lattice, &alpha0, &sym);
    assert!(check.worst_z < 5.0, "{:.2} SE at {}", check.worst_z, check.worst_entry);
}

#[test]
fn trapped_positive_p_moments_match_normal_matrix() {
    let zm = ZeroModeState::Squeezed { r: 0.4, theta: 0.0 };
    let setup = trapped(16, 60.0, 0.3, zm);
    let sym = correlation_matrix(&setup.state.modes, &setup.lattice, &setup.state.occupations, &zm).unwrap();
    let normal = normal_order(&sym).unwrap();
    let alpha0 = setup.state.condensate.mode_amplitudes(&setup.lattice);
    let samples = draw(&setup, &spec(0.3, zm, Representation::PositiveP, 40_000, 6), false);
    let check = check_moments(&samples, &setup.lattice, &alpha0, &normal);
    assert!(check.worst_z < 5.0, "{:.2} SE at {}", check.worst_z, check.worst_entry);
}

#[test]
fn general_wigner_path_agrees_with_fast_path() {
    let zm = ZeroModeState::Vacuum;
    let probe = homogeneous(16, 16.0, 0.1, 200.0, 0.0, zm);
    let t = temperature_for_lowest(&probe.state.modes, 2.0);
    let setup = homogeneous(16, 16.0, 0.1, 200.0, t, zm);
    let sym = correlation_matrix(&setup.state.modes, &setup.lattice, &setup.state.occupations, &zm).unwrap();
    let alpha0 = setup.state.condensate.mode_amplitudes(&setup.lattice);
    for force_general in [false, true] {
        let samples = draw(&setup, &spec(t, zm, Representation::Wigner, 40_000, 7), force_general);
        let check = check_moments(&samples, &setup.lattice, &alpha0, &sym);
        assert!(
            check.worst_z < 5.0,
            "general={force_general}: {:.2} SE at {}",
            check.worst_z,
            check.worst_entry
        );
    }
}

#[test]
fn thermal_wigner_occupations_follow_bogoliubov_mapping() {
    let zm = ZeroModeState::Vacuum;
    let setup = homogeneous(16, 16.0, 0.1, 200.0, 0.8, zm);
    let samples = draw(&setup, &spec(0.8, zm, Representation::Wigner, 50_000, 8), false);
    let ensemble = TrajectoryEnsemble::from_samples(samples, &setup.lattice).unwrap();
    let occ = mode_occupations(&ensemble).unwrap();
    // Lattice mode k holds n_k u_k^2 + (n_-k + 1) v_-k^2 on average.
    let mut expected = vec![0.0; setup.lattice.len()];
    for (mode, n) in setup.state.modes.modes.iter().zip(&setup.state.occupations) {
        let ModeFunctions::PlaneWave { u, v } = mode.functions else { panic!() };
        expected[mode.index] += n * u * u;
        expected[setup.lattice.partner(mode.index)] += (n + 1.0) * v * v;
    }
    for m in &occ.modes {
        let s = &m.series;
        let z = (s.values[0] - expected[m.index]).abs() / s.stderr[0];
        assert!(z < 5.0, "mode {}: {} vs {} ({z:.2} SE)", m.index, s.values[0], expected[m.index]);
    }
}

#[test]
fn squeezed_thermal_occupation_uses_cosh_2r() {
    let zm = ZeroModeState::Vacuum;
    let setup = homogeneous(16, 16.0, 0.2, 400.0, 0.6, zm);
    let samples = draw(&setup, &spec(0.6, zm, Representation::Wigner, 50_000, 9), false);
    let ensemble = TrajectoryEnsemble::from_samples(samples, &setup.lattice).unwrap();
    let occ = mode_occupations(&ensemble).unwrap();
    let mode = &setup.state.modes.modes[0];
    let ModeFunctions::PlaneWave { v, .. } = mode.functions else { panic!() };
    let n = setup.state.occupations[0];
    let r = v.asinh();
    let sampled = occ.modes.iter().find(|m| m.index == mode.index).unwrap();
    let (value, se) = (sampled.series.values[0], sampled.series.stderr[0]);
    let cosh_2r = (0.5 + n) * (2.0 * r).cosh() - 0.5;
    let cosh_r = (0.5 + n) * r.cosh() - 0.5;
    let (z2, z1) = ((value - cosh_2r).abs() / se, (value - cosh_r).abs() / se);
    println!("sampled {value:.4} +- {se:.4}; cosh(2r) form {cosh_2r:.4} ({z2:.1} SE); cosh(r) form {cosh_r:.4} ({z1:.1} SE)");
    assert!(z2 < 5.0);
    assert!(z1 > 5.0, "the two closed forms are not distinguishable at this r");
}

#[test]
fn quadrature_variances_match_squeezed_thermal_forms() {
    for (rep, t) in [(Representation::Wigner, 0.0), (Representation::Wigner, 0.7), (Representation::PositiveP, 0.7)] {
        let zm = ZeroModeState::Vacuum;
        let setup = homogeneous(16, 16.0, 0.2, 400.0, t, zm);
        let samples = draw(&setup, &spec(t, zm, rep, 50_000, 10), false);
        let ensemble = TrajectoryEnsemble::from_samples(samples, &setup.lattice).unwrap();
        let rows = quadrature_variances(&ensemble, &setup.state.modes, 0).unwrap();
        for row in rows.iter().filter(|r| r.index != 0) {
            let pos = setup.state.modes.modes.iter().position(|m| m.index == row.index).unwrap();
            let ModeFunctions::PlaneWave { v, .. } = setup.state.modes.modes[pos].functions else { panic!() };
            let n = setup.state.occupations[pos];
            let r = v.asinh();
            // a_{k+} squeezes P; a_{k-} squeezes Q.
            let sign = if row.branch == Branch::Plus || setup.lattice.is_self_partnered(row.index) { 1.0 } else { -1.0 };
            let var_p = (n + 0.5) * (-2.0 * sign * r).exp();
            let var_q = (n + 0.5) * (2.0 * sign * r).exp();
            let zp = (row.var_p.value - var_p).abs() / row.var_p.stderr;
            let zq = (row.var_q.value - var_q).abs() / row.var_q.stderr;
            assert!(zp < 5.0 && zq < 5.0, "{rep} T={t} k={} {:?}: P {zp:.2} SE, Q {zq:.2} SE", row.index, row.branch);
            if t == 0.0 {
                let product = row.var_p.value * row.var_q.value;
                let se = product * ((row.var_p.stderr / row.var_p.value).powi(2) + (row.var_q.stderr / row.var_q.value).powi(2)).sqrt();
                assert!((product - 0.25).abs() < 5.0 * se, "uncertainty product {product} +- {se}");
            }
        }
    }
}

#[test]
fn sampled_number_matches_balance_target() {
    let zm = ZeroModeState::Thermal { occupation: 0.5 };
    let setup = homogeneous(16, 16.0, 0.1, 200.0, 0.8, zm);
    for rep in [Representation::Wigner, Representation::PositiveP] {
        let samples = draw(&setup, &spec(0.8, zm, rep, 40_000, 11), false);
        let ensemble = TrajectoryEnsemble::from_samples(samples, &setup.lattice).unwrap();
        let n = number_statistics(&ensemble).unwrap();
        let z = (n.mean.values[0] - 200.0).abs() / n.mean.stderr[0];
        assert!(z < 5.0, "{rep}: N = {} +- {}", n.mean.values[0], n.mean.stderr[0]);
    }
}

fn single_mode_thermal(n: f64, rep: Representation, count: u64) -> TrajectoryEnsemble {
    let lattice = Lattice::single_mode(2.0).unwrap();
    let scale = lattice.volume().sqrt();
    let samples: Vec<FieldSample> = (0..count)
        .map(|id| {
            let seed_path = RngStream::sampling(77, id);
            let mut rng = seed_path.rng();
            let std = match rep {
                Representation::Wigner => (n + 0.5).sqrt(),
                Representation::PositiveP => n.sqrt(),
            };
            use rand::Rng;
            let re: f64 = rng.sample(rand_distr::StandardNormal);
            let im: f64 = rng.sample(rand_distr::StandardNormal);
            let alpha = Complex64::new(re, im) * (std * std::f64::consts::FRAC_1_SQRT_2);
            let psi = alpha / scale;
            FieldSample {
                psi: vec![psi],
                psi_plus: (rep == Representation::PositiveP).then(|| vec![psi.conj()]),
                global_phase: 0.0,
                traj_id: id,
                seed_path,
            }
        })
        .collect();
    TrajectoryEnsemble::from_samples(samples, &lattice).unwrap()
}

#[test]
fn single_mode_thermal_g2_is_two() {
    for rep in [Representation::Wigner, Representation::PositiveP] {
        let ensemble = single_mode_thermal(4.0, rep, 100_000);
        let g2 = g2_zero(&ensemble).unwrap();
        let z = (g2.values[0] - 2.0).abs() / g2.stderr[0];
        assert!(z < 5.0, "{rep}: g2 = {} +- {}", g2.values[0], g2.stderr[0]);
        let occ = mode_occupations(&ensemble).unwrap();
        let z = (occ.zero_mode.values[0] - 4.0).abs() / occ.zero_mode.stderr[0];
        assert!(z < 5.0, "{rep}: n = {}", occ.zero_mode.values[0]);
    }
}

#[test]
fn ordering_consistency_between_representations() {
    let zm = ZeroModeState::Vacuum;
    let setup = homogeneous(16, 16.0, 0.1, 200.0, 0.6, zm);
    let occ: Vec<_> = [(Representation::Wigner, 12), (Representation::PositiveP, 13)]
        .into_iter()
        .map(|(rep, seed)| {
            let samples = draw(&setup, &spec(0.6, zm, rep, 40_000, seed), false);
            mode_occupations(&TrajectoryEnsemble::from_samples(samples, &setup.lattice).unwrap()).unwrap()
        })
        .collect();
    for (a, b) in occ[0].modes.iter().zip(&occ[1].modes) {
        let se = (a.series.stderr[0].powi(2) + b.series.stderr[0].powi(2)).sqrt();
        let z = (a.series.values[0] - b.series.values[0]).abs() / se;
        assert!(z < 5.0, "mode {}: {z:.2} combined SE", a.index);
    }
}
