import math

import numpy as np
import pytest

from cascade import metrics
from cascade.metrics import (WindowError, detect_drift, drift_estimate, effective_traffic_intensity,
                             idle_fraction, increment_drift, little_residual, overflow_bound_check,
                             station_row, tightness_diagnostic)
from cascade.simulate import replicate, run

from conftest import expo, single_station, two_station


@pytest.fixture(scope="module")
def reference():
    return run(two_station(seed=7), 2e5)


class TestIntensity:
    def test_busy_plus_idle_is_one(self, reference):
        for i in (1, 2):
            busy = effective_traffic_intensity(reference, i)
            idle = idle_fraction(reference, i)
            assert busy.value + idle.value == pytest.approx(1.0, abs=1e-12)
            assert busy.half_width == pytest.approx(idle.half_width)

    def test_station2_matches_load(self, reference):
        est = effective_traffic_intensity(reference, 2)
        assert est.low - est.half_width < 0.5 < est.high + est.half_width
        assert est.batches == 32 and est.warmup == 0.1

    def test_station_range(self, reference):
        with pytest.raises(IndexError):
            effective_traffic_intensity(reference, 3)

    def test_window_too_short(self):
        rec = run(two_station(), 100.0, bins=20)
        with pytest.raises(WindowError):
            effective_traffic_intensity(rec, 1)

    def test_bad_warmup(self, reference):
        with pytest.raises(ValueError):
            effective_traffic_intensity(reference, 1, warmup=1.0)


class TestZeroArrivals:
    def test_station_never_busy(self):
        rec = run(single_station(expo(1e-9), expo(1.0)), 1e4)
        assert effective_traffic_intensity(rec, 1).value == 0.0
        assert little_residual(rec, 1) is None
        assert drift_estimate(rec, 1) == 0.0


class TestTightness:
    def test_level_zero_is_idle(self, reference):
        for i in (1, 2):
            assert tightness_diagnostic(reference, i, 0).value == pytest.approx(idle_fraction(reference, i).value)

    def test_infinite_level(self, reference):
        assert tightness_diagnostic(reference, 1, math.inf).value == pytest.approx(1.0)

    def test_monotone(self, reference):
        vals = [tightness_diagnostic(reference, 1, level).value for level in range(10)]
        assert all(a <= b for a, b in zip(vals, vals[1:]))

    def test_level_beyond_cap(self, reference):
        with pytest.raises(ValueError):
            tightness_diagnostic(reference, 1, reference.level_cap)


class TestLittle:
    def test_small_on_long_path(self, reference):
        assert little_residual(reference, 1) < 0.01
        assert little_residual(reference, 2) < 0.01

    def test_single_station(self):
        rec = run(single_station(expo(0.5), expo(1.0)), 1e5)
        assert little_residual(rec, 1) < 0.01


class TestOverflow:
    def test_bound_holds(self, reference):
        check = overflow_bound_check(reference, 1, mu_overflow=1.0)
        assert check.passed and check.rate <= check.bound + 0.01

    def test_no_transfers_with_huge_threshold(self):
        rec = run(two_station(lam1=0.5, c1=10**6), 2e4)
        check = overflow_bound_check(rec, 1)
        assert rec.A_ov[0] == 0 and check.rate == 0.0 and check.passed

    def test_needs_downstream_station(self, reference):
        with pytest.raises(IndexError):
            overflow_bound_check(reference, 2)


class TestDrift:
    def test_stable_not_drifting(self):
        recs = replicate(two_station(seed=3), 2e4, 8)
        assert not detect_drift(recs, 1).drifting

    def test_unstable_drifts(self):
        recs = replicate(two_station(lam1=1.8, seed=3), 2e4, 8)
        verdict = detect_drift(recs, 1)
        assert verdict.drifting
        assert verdict.mean == pytest.approx(0.3, abs=0.05)
        assert np.mean([drift_estimate(r, 1) for r in recs]) == pytest.approx(0.3, abs=0.05)

    def test_increment_drift_definition(self, reference):
        half = reference.q_at(0.5)[0]
        expected = (reference.q_final[0] - half) / (0.5 * reference.horizon)
        assert increment_drift(reference, 1) == pytest.approx(expected)

    def test_single_record_never_drifts(self, reference):
        assert detect_drift([reference]).std_error == math.inf


def test_station_row_columns(reference):
    row = station_row(reference, 1)
    assert set(row) == {"rho_star", "ci", "idle", "drift", "little_residual", "overflow_slack", "tight_l0"}
    assert station_row(reference, 2)["overflow_slack"] is None


def test_path_rates(reference):
    rates = metrics.path_rates(reference)
    assert rates["arrival_rate"][0] == pytest.approx(1.2, rel=0.02)
    assert len(rates["transfer_rate"]) == 1


def test_mean_and_se():
    assert metrics.mean_and_se([1.0, 3.0]) == (2.0, 1.0)
    assert math.isnan(metrics.mean_and_se([1.0])[1])
