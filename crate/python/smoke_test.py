"""Smoke test for the thermal_bec Python extension.

Build and install first:

    pip install --no-build-isolation -e crates/python
    python python/smoke_test.py
"""

import math
import os
import sys
import tempfile

import thermal_bec as tb


def check(cond, msg):
    if not cond:
        print("FAIL:", msg)
        sys.exit(1)
    print("ok:", msg)


def main():
    lat = tb.Lattice([16], [16.0])
    check(len(lat) == 16 and abs(lat.dv - 1.0) < 1e-15, "lattice geometry")

    field = [complex(math.cos(0.3 * x), math.sin(0.1 * x)) for x in range(16)]
    back = lat.to_position(lat.to_modes(field))
    check(max(abs(a - b) for a, b in zip(field, back)) < 1e-12, "mode transform round trip")

    g, n_target = 0.05, 100.0
    params = tb.SystemParams(lat, g, n_target)
    state = tb.solve_number_balance(params, lat, 0.2, tb.ZeroMode.vacuum())
    check(abs(state.n0 + state.depletion - n_target) < 1e-8, "number balance closes")
    check(abs(state.mu2 - g / lat.volume) < 1e-15, "mu2 = g / V for a uniform condensate")

    density = state.n0 / lat.volume
    for idx, eps in zip(state.mode_indices, state.energies):
        e = 0.5 * lat.kvec(idx)[0] ** 2
        check_eps = math.sqrt(e * (e + 2.0 * g * density))
        if abs(eps - check_eps) > 1e-10 * check_eps:
            check(False, f"Bogoliubov energy of mode {idx}")
    check(True, "Bogoliubov energies match the closed form")

    ens = state.sample("wigner", 2000, seed=7)
    occ = ens.mode_occupations()
    expected = [0.0] * len(lat)
    for idx, n, (u2, v2) in zip(state.mode_indices, state.occupations, state.mode_norms()):
        expected[idx] += n * u2
        expected[lat.partner(idx)] += (n + 1.0) * v2
    worst = max(abs(m["values"][0] - expected[m["index"]]) / m["stderr"][0] for m in occ["modes"])
    check(worst < 5.0, f"occupations match n u^2 + (n+1) v^2 (worst {worst:.2f} SE)")
    n_stats = ens.number_statistics()
    mean, se = n_stats["mean"]["values"][0], n_stats["mean"]["stderr"][0]
    check(abs(mean - n_target) < 5 * se + 1e-9, f"sampled N = {mean:.3f} +- {se:.3f}")

    evolved = ens.evolve(params, dt=0.01, n_steps=10, save_every=5)
    check(evolved.times == [0.0, 0.05, 0.1], "snapshot times")

    pp = state.sample("positive_p", 500, seed=8)
    g2 = pp.g2_zero()
    check(abs(g2["values"][0] - 1.0) < 0.05, f"near-coherent g2 = {g2['values'][0]:.4f}")

    try:
        tb.SystemParams(lat, -1.0, n_target)
        check(False, "negative g rejected")
    except ValueError as e:
        check("repulsive" in str(e), "negative g rejected")

    cov = tb.ZeroMode.squeezed(0.5).quadrature_covariance()
    check(abs(cov[0][0] * cov[1][1] - 0.25) < 1e-12, "squeezed zero mode is minimum uncertainty")

    with tempfile.TemporaryDirectory() as d:
        cfg = os.path.join(d, "run.toml")
        with open(cfg, "w") as f:
            f.write(
                "[lattice]\ndims = [16]\nlengths = [16.0]\n"
                "[physics]\ng = 0.05\nn_target = 100.0\n"
                "[thermal]\ntemperature = 0.2\nrepresentation = \"wigner\"\nn_traj = 20\nseed = 3\n"
                "[evolution]\ndt = 0.01\nn_steps = 4\nsave_every = 2\n"
            )
        errors, warnings = tb.validate_config(cfg)
        check(not errors and not warnings, "config validates cleanly")
        out, files, escaped = tb.run_config(cfg, out_dir=os.path.join(d, "out"))
        check("manifest.json" in files and escaped == 0, f"run wrote {len(files)} files")

    print("smoke test passed")


if __name__ == "__main__":
    main()
