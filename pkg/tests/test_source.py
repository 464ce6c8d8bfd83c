import numpy as np
import pytest

from pollink import polarization as pol
from pollink import source as src
from pollink.polarization import MeasurementMode as Mode

from conftest import random_rotation


class TestGsiModel:
    def test_long_run_operating_point(self):
        model = src.SourceModel()
        g = src.gsi_at_rate(model, 2e5)
        assert g == pytest.approx(28.5)
        assert src.fidelity_from_gsi(g) == pytest.approx(0.949, abs=5e-4)

    def test_high_rate_limit_is_white_noise(self):
        model = src.SourceModel(max_rate_pairs_per_s=1e12)
        assert src.gsi_at_rate(model, 1e12) == pytest.approx(1.0, abs=1e-5)

    def test_low_rate_operating_point(self):
        model = src.SourceModel()
        g = src.gsi_at_rate(model, 2e4)
        assert g == pytest.approx(276.0)
        assert src.fidelity_from_gsi(g) == pytest.approx(0.9946, abs=5e-4)

    def test_bad_rates_rejected(self):
        model = src.SourceModel()
        with pytest.raises(ValueError):
            src.gsi_at_rate(model, 0.0)
        with pytest.raises(ValueError):
            src.gsi_at_rate(model, -5.0)
        with pytest.raises(ValueError):
            src.gsi_at_rate(model, 2e6)


class TestFidelityFromGsi:
    def test_anchors(self):
        assert src.fidelity_from_gsi(1.0) == pytest.approx(0.25)
        assert src.fidelity_from_gsi(1e12) == pytest.approx(1.0, abs=1e-11)
        # a = 28/30 cross-checked through the state route
        assert src.fidelity_from_gsi(29.0) == pytest.approx(0.95, abs=1e-12)
        state = pol.werner_state(28.0 / 30.0)
        assert pol.fidelity_to_phi_plus(state) == pytest.approx(0.95, abs=1e-12)

    def test_below_one_rejected(self):
        with pytest.raises(ValueError):
            src.fidelity_from_gsi(0.99)

    def test_monotone_decreasing_in_rate(self):
        model = src.SourceModel()
        rates = np.geomspace(1e3, 1e6, 50)
        fids = [src.fidelity_from_gsi(src.gsi_at_rate(model, r)) for r in rates]
        assert all(b < a for a, b in zip(fids, fids[1:]))

    def test_werner_gsi_round_trip(self):
        for a in np.linspace(0.0, 0.999, 25):
            g = src.gsi_from_werner_a(float(a))
            assert src.werner_a_from_gsi(g) == pytest.approx(float(a), abs=1e-12)


class TestStateAtRate:
    def test_matches_fidelity_route(self):
        model = src.SourceModel()
        for rate in (1e4, 5e4, 2e5, 5e5):
            f_state = pol.fidelity_to_phi_plus(src.state_at_rate(model, rate))
            f_g = src.fidelity_from_gsi(src.gsi_at_rate(model, rate))
            assert f_state == pytest.approx(f_g, abs=1e-12)

    def test_source_limit_at_max_power(self):
        model = src.SourceModel()
        f = pol.fidelity_to_phi_plus(src.state_at_rate(model, 5e5))
        assert f == pytest.approx(1.0 - 3.0 / 26.0, abs=1e-12)
        assert f == pytest.approx(0.88, abs=0.01)

    def test_near_unit_gsi_is_near_mixed(self):
        model = src.SourceModel(kappa_pairs_per_s=1.0, max_rate_pairs_per_s=1e9)
        state = src.state_at_rate(model, 1e9)
        assert np.abs(state.matrix - np.eye(4) / 4.0).max() < 1e-9


class TestSimulateCounts:
    def test_bell_state_has_no_hv(self, rng):
        counts = src.simulate_counts(
            pol.bell_phi_plus(), 1e4, 1.0, src.default_detectors(),
            src.MeasurementPlan(dwell_s=10.0), rng,
        )
        assert counts.get("HV") == 0
        assert counts.get("VH") == 0

    def test_hh_mean_with_unit_efficiency(self):
        det = (src.DetectorModel(1.0), src.DetectorModel(1.0))
        plan = src.MeasurementPlan(dwell_s=1.0)
        for seed in range(20):
            rng = np.random.default_rng(seed)
            counts = src.simulate_counts(pol.bell_phi_plus(), 1e4, 1.0, det, plan, rng)
            assert abs(counts.get("HH") - 5000) <= 300  # 4 sigma

    def test_linear_basis_total(self, rng):
        det = src.default_detectors()
        plan = src.MeasurementPlan(dwell_s=2.0)
        counts = src.simulate_counts(pol.werner_state(0.9), 1e5, 0.5, det, plan, rng)
        total = sum(counts.counts[p] for p in src.LINEAR_MODE_PAIRS)
        mean = 1e5 * 0.5 * 0.68 * 0.90 * 2.0
        assert abs(total - mean) <= 5.0 * np.sqrt(mean)

    def test_only_product_of_thinnings_matters(self):
        plan = src.MeasurementPlan(dwell_s=1.0)
        a = src.simulate_counts(
            pol.werner_state(0.8), 1e5, 0.5,
            (src.DetectorModel(1.0), src.DetectorModel(1.0)),
            plan, np.random.default_rng(3),
        )
        b = src.simulate_counts(
            pol.werner_state(0.8), 1e5, 1.0,
            (src.DetectorModel(0.5), src.DetectorModel(1.0)),
            plan, np.random.default_rng(3),
        )
        assert a.counts == b.counts

    def test_one_sided_rotation_changes_statistics(self, rng):
        r = pol.PoincareRotation.from_axis_angle([0, 0, 1], np.pi)
        counts = src.simulate_counts(
            pol.bell_phi_plus(), 1e5, 1.0,
            (src.DetectorModel(1.0), src.DetectorModel(1.0)),
            src.MeasurementPlan(dwell_s=1.0), rng, channel_rotation=r,
        )
        # pi rotation about s3 sends phi+ to an orthogonal Bell state:
        # linear populations survive, diagonal ones swap to DA/AD
        assert counts.get("DD") == 0
        assert counts.get("AA") == 0
        assert counts.get("DA") > 1000

    def test_seed_determinism(self):
        plan = src.MeasurementPlan(dwell_s=1.0)
        first = src.simulate_counts(
            pol.werner_state(0.9), 1e5, 0.1, src.default_detectors(), plan,
            np.random.default_rng(55),
        )
        second = src.simulate_counts(
            pol.werner_state(0.9), 1e5, 0.1, src.default_detectors(), plan,
            np.random.default_rng(55),
        )
        assert first.counts == second.counts

    def test_bad_transmission_rejected(self, rng):
        with pytest.raises(ValueError):
            src.simulate_counts(
                pol.bell_phi_plus(), 1e4, 0.0, src.default_detectors(),
                src.MeasurementPlan(), rng,
            )


class TestPairRate:
    def test_unit_efficiency(self):
        counts = src.CoincidenceCounts(
            {p: c for p, c in zip(src.BOUNDS_MODE_PAIRS, (2500, 0, 0, 2500, 0, 0, 0, 0))},
            1.0,
        )
        assert src.pair_rate_from_counts(counts, 1.0, 1.0) == pytest.approx(5000.0)

    def test_reference_efficiencies(self):
        counts = src.CoincidenceCounts(
            {p: c for p, c in zip(src.BOUNDS_MODE_PAIRS, (1000, 710, 710, 1000, 0, 0, 0, 0))},
            1.0,
        )
        rate = src.pair_rate_from_counts(counts, 0.68, 0.90)
        assert rate == pytest.approx(3420 / 0.612, rel=1e-9)

    def test_round_trip_recovers_thinned_rate(self):
        model = src.SourceModel()
        det = src.default_detectors()
        plan = src.MeasurementPlan(dwell_s=30.0)
        rng = np.random.default_rng(8)
        counts = src.simulate_counts(
            src.state_at_rate(model, 2e5), 2e5, 0.02, det, plan, rng
        )
        est = src.pair_rate_from_counts(counts, 0.68, 0.90)
        mean = 2e5 * 0.02
        sigma = np.sqrt(mean * plan.dwell_s * 0.612) / (0.612 * plan.dwell_s)
        assert abs(est - mean) <= 5.0 * sigma

    def test_missing_mode_rejected(self):
        counts = src.CoincidenceCounts({src.BOUNDS_MODE_PAIRS[0]: 10}, 1.0)
        with pytest.raises(ValueError):
            src.pair_rate_from_counts(counts, 1.0, 1.0)


class TestCountsIO:
    def test_json_round_trip(self, tmp_path, rng):
        counts = src.simulate_counts(
            pol.werner_state(0.9), 1e5, 0.5, src.default_detectors(),
            src.MeasurementPlan(dwell_s=2.0), rng,
        )
        path = tmp_path / "counts.json"
        counts.to_json(path)
        back = src.CoincidenceCounts.from_json(path)
        assert back.counts == counts.counts
        assert back.dwell_s == counts.dwell_s

    def test_malformed_file_rejected(self, tmp_path):
        path = tmp_path / "bad.json"
        path.write_text('{"counts": {"XY": 3}}')
        with pytest.raises(src.SchemaError):
            src.CoincidenceCounts.from_json(path)
