import numpy as np
import pytest

from cascade.oracles import (CtmcSpec, _transitions, cascade_ctmc_generator, ctmc_spec_from_config,
                             lindley_waiting, mm1_marginal, mm1_mean_wait, oracle_rho_star, solve_cascade,
                             stationary_solve)
from cascade.model import Station, SystemConfig
from cascade.variates import DistributionSpec, VariateStream

from conftest import expo, two_station


class Fixed:
    def __init__(self, values):
        self.values = np.asarray(values, dtype=float)

    def draws(self, n):
        return self.values[:n]


class TestLindley:
    def test_hand_example(self):
        w = lindley_waiting(Fixed([1.0, 1.0]), Fixed([2.0, 0.5]), 3)
        np.testing.assert_allclose(w, [0.0, 1.0, 0.5])

    def test_idle_restarts_at_zero(self):
        w = lindley_waiting(Fixed([3.0, 1.0]), Fixed([1.0, 1.0]), 3)
        np.testing.assert_allclose(w, [0.0, 0.0, 0.0])

    def test_mm1_mean_wait(self):
        n = 1_000_000
        w = lindley_waiting(VariateStream(expo(0.5), 1, 0), VariateStream(expo(1.0), 1, 1), n)
        assert mm1_mean_wait(0.5, 1.0) == 1.0
        assert w[n // 10:].mean() == pytest.approx(1.0, rel=0.02)

    def test_rejects_unstable(self):
        with pytest.raises(ValueError):
            mm1_mean_wait(1.0, 1.0)


class TestCtmcSpec:
    def test_truncation_margin(self):
        with pytest.raises(ValueError, match="exceed"):
            CtmcSpec(1.2, 0.5, 1, 1, 1, c1=5, truncation=12)

    def test_transfers_off(self):
        CtmcSpec(0.5, 0.5, 1, 1, 0.0, c1=40, truncation=40)

    def test_from_config(self):
        spec = ctmc_spec_from_config(two_station(), 50)
        assert (spec.lam1, spec.lam2, spec.mu12, spec.c1) == (pytest.approx(1.2), pytest.approx(0.5), 1.0, 1)

    def test_from_config_needs_exponential(self):
        cfg = SystemConfig((Station(DistributionSpec("erlang", {"shape": 2, "mean": 1.0}), expo(1), 1, expo(1)),
                            Station(expo(0.5), expo(1))))
        with pytest.raises(ValueError, match="station 1 arrival"):
            ctmc_spec_from_config(cfg)


class TestGenerator:
    spec = CtmcSpec(1.2, 0.5, 1.0, 1.0, 1.0, c1=1, truncation=30)

    def test_rows_sum_to_zero(self):
        gen = cascade_ctmc_generator(self.spec)
        np.testing.assert_allclose(np.asarray(gen.matrix.sum(axis=1)).ravel(), 0.0, atol=1e-12)

    def test_arrival_at_threshold_transfers(self):
        assert (1.2, (1, 0, 1)) in list(_transitions(self.spec, 1, 0, 0))

    def test_station2_departure_keeps_overflow(self):
        assert (1.0, (3, 0, 1)) in list(_transitions(self.spec, 3, 1, 1))

    def test_overflow_departure_pulls_next(self):
        assert (1.0, (2, 0, 1)) in list(_transitions(self.spec, 3, 0, 1))

    def test_no_forbidden_states(self):
        gen = cascade_ctmc_generator(self.spec)
        q1, q2, b = gen.states.T
        assert not np.any((q1 > 1) & (q2 == 0) & (b == 0))

    def test_no_mass_on_forbidden_states(self):
        table = solve_cascade(self.spec)
        p = table.prob
        assert p[2:, 0, 0].sum() == 0.0
        assert table.prob.sum() == pytest.approx(1.0)


class TestStationary:
    def test_decoupled_product_form(self):
        N = 60
        table = solve_cascade(CtmcSpec(0.6, 0.5, 1.0, 1.0, 0.0, c1=N, truncation=N))
        g1 = mm1_marginal(0.6, N + 1)
        g2 = mm1_marginal(0.5, N + 1)
        expected = np.outer(g1 / g1.sum(), g2 / g2.sum())
        np.testing.assert_allclose(table.prob[:, :, 0], expected, atol=1e-8)
        assert table.overflow_occupancy == 0.0

    def test_power_matches_direct(self):
        gen = cascade_ctmc_generator(CtmcSpec(0.9, 0.4, 1.0, 1.0, 0.7, c1=2, truncation=20))
        direct = stationary_solve(gen, "direct")
        power = stationary_solve(gen, "power", tol=1e-13)
        assert 0.5 * np.abs(direct.prob - power.prob).sum() < 1e-9

    def test_unknown_method(self):
        with pytest.raises(ValueError):
            stationary_solve(cascade_ctmc_generator(self.spec_small()), "lu")

    @staticmethod
    def spec_small():
        return CtmcSpec(0.5, 0.5, 1.0, 1.0, 1.0, c1=1, truncation=15)

    def test_empty_limit(self):
        table = solve_cascade(CtmcSpec(1e-4, 1e-4, 1.0, 1.0, 1.0, c1=1, truncation=15))
        assert table.prob[0, 0, 0] > 0.999

    def test_truncation_doubling(self):
        a = oracle_rho_star(solve_cascade(CtmcSpec(1.2, 0.5, 1, 1, 1, 1, truncation=90)), 1)
        b = oracle_rho_star(solve_cascade(CtmcSpec(1.2, 0.5, 1, 1, 1, 1, truncation=180)), 1)
        assert abs(a - b) < 1e-6


class TestReferenceChain:
    @pytest.fixture(scope="class")
    @staticmethod
    def table():
        return solve_cascade(CtmcSpec(1.2, 0.5, 1.0, 1.0, 1.0, c1=1, truncation=200))

    def test_station2_is_mm1(self, table):
        np.testing.assert_allclose(table.marginal(2)[:50], mm1_marginal(0.5, 50), atol=1e-10)

    def test_rho_star_2(self, table):
        assert oracle_rho_star(table, 2) == pytest.approx(0.5, abs=1e-10)

    def test_truncation_mass(self, table):
        assert table.truncation_mass < 1e-6

    def test_rho_star_1_below_load(self, table):
        # transfers relieve station 1, so it is busy less often than lambda/mu
        assert 0.8 < oracle_rho_star(table, 1) < 0.9
