import io

import numpy as np
import pytest

from cascade.model import STREAMS_PER_STATION, Station, StateFault, SystemConfig, subsystem
from cascade.simulate import EventLog, Simulation, replicate, run
from cascade.variates import DistributionSpec, VariateStream

from conftest import expo, single_station, two_station

ARRAYS = ("duration", "busy", "queue_area", "levels", "busy_ov", "j_time", "k_time", "q_snapshot",
          "arrivals", "departures", "transfers", "ov_departures")


def same_record(a, b):
    for name in ARRAYS:
        np.testing.assert_array_equal(getattr(a, name), getattr(b, name), err_msg=name)
    assert a.t_end == b.t_end and a.n_events == b.n_events
    np.testing.assert_array_equal(a.q_final, b.q_final)
    np.testing.assert_array_equal(a.ov_final, b.ov_final)


def three_station(seed=5, **kwargs):
    return SystemConfig(
        (Station(expo(1.0), expo(1.0), 2, expo(0.8)),
         Station(DistributionSpec("erlang", {"shape": 2, "mean": 2.0}), expo(1.3), 1, expo(1.1)),
         Station(expo(0.4), DistributionSpec("lognormal", {"mean": 1.0, "sigma": 0.5}))),
        seed=seed, **kwargs,
    )


def counted(stream, total):
    """Number of partial sums of ``stream`` that fit in ``total``."""
    n, acc = 0, 0.0
    while True:
        acc += stream.draw()
        if acc > total:
            return n
        n += 1


class TestKernelAgainstStepper:
    @pytest.mark.parametrize("make", [two_station, three_station,
                                      lambda: single_station(expo(0.7), expo(1.0), seed=9)])
    def test_identical_records(self, make):
        cfg = make()
        fast = run(cfg, 500.0, bins=50)
        slow = run(cfg, 500.0, [lambda e, s: None], bins=50)
        same_record(fast, slow)

    def test_identical_with_initial_backlog(self):
        cfg = two_station(lam1=1.6, initial_queues=(12, 3), initial_overflow=(1,), seed=2)
        same_record(run(cfg, 300.0, bins=30), run(cfg, 300.0, [lambda e, s: None], bins=30))


class TestDeterminism:
    def test_same_seed_same_record(self):
        same_record(run(two_station(seed=4), 1e4), run(two_station(seed=4), 1e4))

    def test_different_seed_differs(self):
        assert run(two_station(seed=4), 1e4).A[0] != run(two_station(seed=5), 1e4).A[0]

    def test_replicate_uses_derived_seeds(self):
        a, b = replicate(two_station(seed=1), 1e3, 2)
        assert a.A[0] != b.A[0]
        same_record(a, replicate(two_station(seed=1), 1e3, 1)[0])

    def test_workers_do_not_change_results(self):
        serial = replicate(two_station(seed=1), 2e3, 3)
        parallel = replicate(two_station(seed=1), 2e3, 3, workers=2)
        for a, b in zip(serial, parallel):
            same_record(a, b)


class TestSegments:
    def test_merge_equals_one_shot(self):
        cfg = three_station()
        whole = run(cfg, 1000.0, bins=40)
        sim = Simulation(cfg, 1000.0, bins=40)
        parts = []
        for t in (130.0, 400.0, 1000.0):
            sim.advance(t)
            parts.append(sim.take_record())
        merged = parts[0].merge(parts[1]).merge(parts[2])
        for name in ARRAYS:
            np.testing.assert_allclose(getattr(merged, name), getattr(whole, name), rtol=1e-12, atol=1e-9,
                                       err_msg=name)
        np.testing.assert_array_equal(merged.q_final, whole.q_final)
        assert merged.n_events == whole.n_events

    def test_merge_rejects_gap(self):
        sim = Simulation(two_station(), 100.0, bins=10)
        first = sim.advance(10.0)
        sim.take_record()
        sim.advance(20.0)
        later = sim.take_record()
        with pytest.raises(ValueError):
            later.merge(first)

    def test_cannot_go_back(self):
        sim = Simulation(two_station(), 100.0)
        sim.advance(10.0)
        with pytest.raises(ValueError):
            sim.advance(5.0)


class TestFlowBalance:
    def test_every_event(self):
        cfg = three_station(initial_queues=(4, 0, 2))
        sim = Simulation(cfg, 200.0, bins=20)
        q0 = np.array(sim.state.q)
        ov0 = np.array(sim.state.ov)
        counts = {"A": np.zeros(3, int), "D": np.zeros(3, int), "T": np.zeros(2, int), "O": np.zeros(2, int)}
        checked = []

        def observe(event, state):
            i = event.station - 1
            {"arrival": counts["A"], "service": counts["D"],
             "transfer": counts["T"], "overflow": counts["O"]}[event.kind][i] += 1
            if event.seq != state.seq - 1:
                return  # observers see the state after the whole batch
            shifted = np.append(counts["T"], 0)
            assert list(q0 + counts["A"] - counts["D"] - shifted) == state.q
            assert list(ov0 + counts["T"] - counts["O"]) == state.ov
            assert not state.forbidden()
            checked.append(event.seq)

        rec = sim.advance(200.0, [observe])
        assert len(checked) > 100
        q, ov = rec.flow_balance_queues()
        np.testing.assert_array_equal(q, rec.q_final)
        np.testing.assert_array_equal(ov, rec.ov_final)

    def test_record_identities(self):
        rec = run(three_station(), 2e4)
        T = rec.horizon
        np.testing.assert_allclose(rec.B + rec.I, T)
        np.testing.assert_allclose(rec.J + rec.K <= T + 1e-9, True)
        np.testing.assert_allclose(rec.levels.sum(axis=(0, 2)), T)
        np.testing.assert_allclose(rec.levels[:, :, 0].sum(axis=0), rec.I)
        assert (rec.B_ov <= rec.I[1:] + 1e-9).all()


class TestCountingByWork:
    def test_departures_match_service_stream(self):
        cfg = three_station(seed=11)
        rec = run(cfg, 5e3)
        for i in range(3):
            base = STREAMS_PER_STATION * i
            arrivals = VariateStream(cfg.stations[i].arrival, cfg.seed, base)
            services = VariateStream(cfg.stations[i].service, cfg.seed, base + 1)
            assert rec.A[i] == counted(arrivals, rec.t_end)
            assert rec.D[i] == counted(services, rec.B[i] * (1 + 1e-12))
            if i < 2:
                overflow = VariateStream(cfg.stations[i].overflow_service, cfg.seed, base + 2)
                assert rec.D_ov[i] == counted(overflow, rec.B_ov[i] * (1 + 1e-12))


class TestSuffixAutonomy:
    def test_suffix_replays_exactly(self):
        cfg = three_station(seed=21)
        full = run(cfg, 3e3, bins=60)
        for i in (2, 3):
            sub = run(subsystem(cfg, i), 3e3, bins=60)
            j = i - 1
            np.testing.assert_array_equal(sub.arrivals, full.arrivals[:, j:])
            np.testing.assert_array_equal(sub.departures, full.departures[:, j:])
            np.testing.assert_array_equal(sub.busy, full.busy[:, j:])
            np.testing.assert_array_equal(sub.q_final, full.q_final[j:])


class TestEventLog:
    def test_format(self):
        buf = io.StringIO()
        run(two_station(), 20.0, [EventLog(buf, 2)])
        lines = buf.getvalue().splitlines()
        assert lines[0] == "seq,t,kind,station,Q1,Q2,Q12"
        rows = [ln.split(",") for ln in lines[1:]]
        assert [int(r[0]) for r in rows] == list(range(len(rows)))
        times = [float(r[1]) for r in rows]
        assert times == sorted(times) and times[-1] <= 20.0
        assert {r[2] for r in rows} <= {"arrival", "service", "overflow", "transfer"}

    def test_reproducible(self):
        logs = []
        for _ in range(2):
            buf = io.StringIO()
            run(two_station(seed=8), 50.0, [EventLog(buf, 2)])
            logs.append(buf.getvalue())
        assert logs[0] == logs[1]


class TestEventCap:
    def test_truncates(self):
        rec = run(two_station(), 1e5, event_cap=1000)
        assert rec.truncated and rec.n_events == 1000 and rec.t_end < 1e5

    def test_truncates_stepper(self):
        rec = run(two_station(), 1e5, [lambda e, s: None], event_cap=100)
        assert rec.truncated and rec.n_events == 100


def test_mm1_idle_fraction():
    rec = run(single_station(expo(0.5), expo(1.0), seed=3), 2e5)
    assert rec.I[0] / rec.horizon == pytest.approx(0.5, abs=0.01)


def test_zero_horizon_rejected():
    with pytest.raises(ValueError):
        run(two_station(), 0.0)


def test_state_fault_is_an_exception():
    assert issubclass(StateFault, Exception)
