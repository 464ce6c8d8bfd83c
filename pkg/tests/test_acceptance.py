"""Acceptance suite: one test per release criterion, each printing a
PASS line with the measured margin (run with -s to see them inline)."""

import json
import math
import time

import numpy as np

from pollink import apc, bounds as bnd, channel as chan, cli
from pollink import dispersion as disp
from pollink import polarization as pol
from pollink import source as src

from conftest import exact_counts, random_density_matrix, random_rotation


def report(n, text):
    print(f"\n[PASS] criterion {n}: {text}")


def test_criterion_1_bound_soundness():
    rng = np.random.default_rng(101)
    start = time.perf_counter()
    violations = 0
    worst_gap = math.inf
    for _ in range(1000):
        rho = random_density_matrix(rng)
        f = pol.fidelity_to_phi_plus(rho)
        b = bnd.bounds_from_counts(exact_counts(rho))
        if not (b.lower <= f + 1e-9 and f <= b.upper + 1e-9):
            violations += 1
        worst_gap = min(worst_gap, f - b.lower, b.upper - f)
    elapsed = time.perf_counter() - start
    assert violations == 0
    assert elapsed < 10.0
    report(1, f"0/1000 soundness violations (tightest margin {worst_gap:.2e}, "
              f"{elapsed:.1f} s)")


def test_criterion_2_analytic_anchors():
    assert src.fidelity_from_gsi(1.0) == 0.25
    assert abs(src.fidelity_from_gsi(1e15) - 1.0) < 1e-14
    for a in np.arange(0.0, 1.0001, 0.05):
        f = pol.fidelity_to_phi_plus(pol.werner_state(float(a)))
        assert abs(f - (1.0 + 3.0 * float(a)) / 4.0) <= 1e-12
    rng = np.random.default_rng(202)
    bell = pol.bell_phi_plus()
    worst = 0.0
    for _ in range(100):
        axis = rng.normal(size=3)
        axis /= np.linalg.norm(axis)
        theta = rng.uniform(0.0, math.pi)
        r = pol.PoincareRotation.from_axis_angle(axis, theta)
        f = pol.fidelity_to_phi_plus(pol.apply_one_sided(bell, r))
        worst = max(worst, abs(f - math.cos(theta / 2.0) ** 2))
    assert worst <= 1e-10
    report(2, f"gsi/werner anchors exact; one-sided fidelity matches "
              f"cos^2(theta/2) to {worst:.2e} over 100 axes")


def test_criterion_3_rate_vs_fidelity(tmp_path):
    start = time.perf_counter()
    assert cli.main(["rate-fidelity", "--out", str(tmp_path), "--seed", "7"]) == 0
    elapsed = time.perf_counter() - start
    import csv

    with open(tmp_path / "rate_fidelity.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 20
    low_point = rows[0]
    assert float(low_point["rate"]) == 2e4
    assert 0.975 <= float(low_point["lower"]) <= 1.0
    high_point = rows[-1]
    assert float(high_point["rate"]) == 5e5
    assert abs(float(high_point["theory_F"]) - 0.88) <= 0.01
    assert elapsed < 60.0
    report(3, f"lower(2e4)={float(low_point['lower']):.4f} in [0.975, 1], "
              f"theory(5e5)={float(high_point['theory_F']):.4f} = 0.88 +/- 0.01, "
              f"{elapsed:.1f} s")


def _long_run(seed, drift=None):
    rng = np.random.default_rng(seed)
    kwargs = {} if drift is None else {"drift": drift}
    channel = chan.synth_dispersive_channel(6, rng, **kwargs)
    return apc.run_long_term(
        channel,
        apc.APCConfig(),
        src.SourceModel(),
        2e5,
        src.MeasurementPlan(dwell_s=25.0),
        1296000.0,
        240.0,
        rng,
    )


def test_criterion_4_uptime_reproduction():
    start = time.perf_counter()
    res = _long_run(42)
    elapsed = time.perf_counter() - start
    up = res.uptime()
    assert 0.995 <= up <= 0.9995
    assert elapsed < 300.0

    still = chan.DriftProcess(walk_rad_per_sqrt_hour=0.0, jump_rate_per_day=0.0)
    res0 = _long_run(42, drift=still)
    analytic = 1.0 - 0.030 / 20.03
    assert all(c.path == "fast-check" for c in res0.cycles)
    assert abs(res0.uptime() - analytic) < 1e-6
    assert round(res0.uptime(), 5) == round(analytic, 5) == 0.99850
    report(4, f"default 15-day uptime {up:.5f} in [0.995, 0.9995] "
              f"({elapsed:.0f} s wall); zero-drift uptime {res0.uptime():.5f} "
              f"= 1 - 0.030/20.03 to 1e-6")


def test_criterion_5_compensated_vs_uncompensated():
    comp_means = []
    uncomp_mins = []
    for seed in range(1, 11):
        res = _long_run(seed)
        comp_means.append(res.comp_lower.mean())
        uncomp_mins.append(res.uncomp_lower.min())
    assert min(comp_means) >= 0.92
    assert max(uncomp_mins) <= 0.8
    report(5, f"10 runs: compensated mean lower in "
              f"[{min(comp_means):.4f}, {max(comp_means):.4f}] (>= 0.92); "
              f"every uncompensated min <= {max(uncomp_mins):.3f} (<= 0.8)")


def test_criterion_6_dispersion_pipeline_closure():
    rng = np.random.default_rng(606)
    bell = pol.bell_phi_plus()
    worst = 0.0
    for _ in range(5):
        ch = chan.synth_dispersive_channel(
            6, rng, polarimeter=chan.PolarimeterModel(stokes_noise=0.0)
        )
        sweep = disp.simulate_sweep(ch, rng, noise=0.0)
        rots = disp.rotations_vs_wavelength(sweep)
        curve = disp.corrected_fidelity_curve(rots, 1300.0)
        r0 = ch.rotation_field[ch.index_of(1300.0)]
        for lam, f in curve:
            rel = pol.PoincareRotation(
                r0.T @ ch.rotation_field[ch.index_of(lam)], validate=False
            )
            oracle = pol.fidelity_to_phi_plus(pol.apply_one_sided(bell, rel))
            worst = max(worst, abs(f - oracle))
    assert worst <= 1e-9

    widths = (0.0, 1.0, 2.0, 4.0, 6.0, 8.0, 10.0, 14.0, 20.0)
    for _ in range(50):
        ch = chan.synth_dispersive_channel(
            6, rng, polarimeter=chan.PolarimeterModel(stokes_noise=0.0)
        )
        curve = disp.corrected_fidelity_curve(
            disp.rotations_vs_wavelength(disp.simulate_sweep(ch, rng)), 1300.0
        )
        series = [disp.spectral_weighted_fidelity(curve, 1300.0, w) for w in widths]
        for a, b in zip(series, series[1:]):
            assert b <= a + 1e-9
    report(6, f"pipeline closure to {worst:.2e} (<= 1e-9); spectral average "
              f"non-increasing in width on 50/50 channels")


def test_criterion_7_rotation_estimation():
    rng = np.random.default_rng(707)
    worst = 0.0
    for _ in range(1000):
        true = random_rotation(rng)
        outputs = [
            pol.StokesVector.from_array(true.matrix @ p.vec)
            for p in pol.CANONICAL_PROBES
        ]
        est = chan.estimate_rotation(pol.CANONICAL_PROBES, outputs)
        rel = pol.PoincareRotation(est.matrix.T @ true.matrix, validate=False)
        worst = max(worst, pol.rotation_angle(rel))
    assert worst <= 1e-9

    errors = []
    for _ in range(1000):
        true = random_rotation(rng)
        outputs = []
        for p in pol.CANONICAL_PROBES:
            v = true.matrix @ p.vec + rng.normal(0.0, 0.01, 3)
            n = np.linalg.norm(v)
            outputs.append(pol.StokesVector.from_array(v / max(n, 1.0)))
        est = chan.estimate_rotation(pol.CANONICAL_PROBES, outputs)
        rel = pol.PoincareRotation(est.matrix.T @ true.matrix, validate=False)
        errors.append(pol.rotation_angle(rel))
    mean_err = float(np.mean(errors))
    assert mean_err <= 0.05
    report(7, f"noiseless recovery worst {worst:.2e} rad (<= 1e-9); "
              f"mean error {mean_err:.4f} rad at sigma=0.01 (<= 0.05)")


def test_criterion_8_loss_arithmetic():
    budget = chan.default_loss_budget()
    assert abs(budget.total_db - 17.47) < 1e-9
    fiber = next(e for e in budget.elements if "fiber" in e.name)
    assert fiber.db == 14.45
    t = chan.transmission(17.46)
    assert abs(t - 0.01795) <= 1e-5
    report(8, f"budget totals {budget.total_db:.2f} dB; "
              f"transmission(17.46 dB) = {t:.5f} = 0.01795 +/- 1e-5")
