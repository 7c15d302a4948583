"""Running the cascade: segmented simulation, replications, event logs."""
from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Sequence

import numpy as np

from . import _kernel
from .model import (ARRIVAL, OVERFLOW, SERVICE, TRANSFER, Event, StateFault, SystemConfig,
                    SystemState, apply_event, init, next_event)
from .record import TrajectoryRecord
from .variates import derive_seed

log = logging.getLogger(__name__)

DEFAULT_BINS = 640
DEFAULT_LEVELS = 64
DEFAULT_EVENT_CAP = 2_000_000_000

Observer = Callable[[Event, SystemState], None]


class Simulation:
    """One replication, advanced in segments.

    ``grid_horizon`` fixes the bin grid of the records; segments taken with
    :meth:`take_record` share it and merge back into the whole-path record.
    With observers attached, :meth:`advance` runs the Python stepper and calls
    every observer after each applied event (transfers included); otherwise
    the compiled loop runs.
    """

    def __init__(self, config: SystemConfig, grid_horizon: float, *, bins: int = DEFAULT_BINS,
                 levels: int = DEFAULT_LEVELS, event_cap: int = DEFAULT_EVENT_CAP, check: bool = True):
        if not grid_horizon > 0:
            raise ValueError("horizon must be positive")
        self.config = config
        self.state = init(config)
        self.grid_horizon = float(grid_horizon)
        self.bins = bins
        self.level_cap = levels
        self.event_cap = int(event_cap)
        self.check = check
        self.total_events = 0
        self.truncated = False
        self.record = self._fresh_record()
        self._thresholds = np.array(config.thresholds + [np.iinfo(np.int64).max // 4], dtype=np.int64)
        self._cur_bin = np.zeros(1, dtype=np.int64)

    def _fresh_record(self) -> TrajectoryRecord:
        s = self.state
        return TrajectoryRecord.empty(s.k, s.thresholds, self.grid_horizon, self.bins, self.level_cap,
                                      s.t, s.q, s.ov)

    def take_record(self) -> TrajectoryRecord:
        """Hand over the record accumulated so far and start a new segment."""
        rec = self.record
        self.record = self._fresh_record()
        return rec

    def advance(self, until: float, observers: Sequence[Observer] = ()) -> TrajectoryRecord:
        if until < self.state.t:
            raise ValueError(f"cannot advance backwards to {until} from {self.state.t}")
        if self.truncated:
            return self.record
        if observers:
            self._advance_python(until, observers)
        else:
            self._advance_kernel(until)
        self.record.q_final = np.array(self.state.q, dtype=np.int64)
        self.record.ov_final = np.array(self.state.ov, dtype=np.int64)
        self.record.t_end = self.state.t
        if self.truncated:
            self.record.truncated = True
            log.warning("event cap %d reached at t=%g; record truncated", self.event_cap, self.state.t)
        return self.record

    # compiled path
    def _advance_kernel(self, until: float) -> None:
        s, rec = self.state, self.record
        k = s.k
        q = np.array(s.q, dtype=np.int64)
        ov = np.zeros(k, dtype=np.int64)
        ov[: k - 1] = s.ov
        sched = np.zeros((5, k))
        sched[0] = s.next_arrival
        sched[1] = s.service_end
        sched[2, : k - 1] = s.ov_work
        sched[3, : k - 1] = s.ov_done
        sched[4, : k - 1] = s.ov_start
        clock = np.array([s.t])
        n_events = np.array([self.total_events], dtype=np.int64)
        bank = s.bank
        while True:
            status = _kernel.advance(
                float(until), self.event_cap, self._thresholds, q, ov, sched, clock, self._cur_bin,
                n_events, bank.buffers, bank.positions, rec.bin_width, rec.duration, rec.busy,
                rec.queue_area, rec.levels, rec.busy_ov, rec.j_time, rec.k_time, rec.q_snapshot,
                rec.arrivals, rec.departures, rec.transfers, rec.ov_departures, self.check,
            )
            if status == _kernel.REFILL:
                bank.refill_exhausted()
                continue
            break
        rec.n_events += int(n_events[0]) - self.total_events
        self.total_events = int(n_events[0])
        s.t = float(clock[0])
        s.q = [int(v) for v in q]
        s.ov = [int(v) for v in ov[: k - 1]]
        s.next_arrival = sched[0].tolist()
        s.service_end = sched[1].tolist()
        s.ov_work = sched[2, : k - 1].tolist()
        s.ov_done = sched[3, : k - 1].tolist()
        s.ov_start = sched[4, : k - 1].tolist()
        if status == _kernel.CAP:
            self.truncated = True
        elif status == _kernel.FAULT:
            raise StateFault(f"invariant violated at t={s.t}: Q={s.q}, overflow={s.ov}")

    # reference path
    def _accumulate(self, t1: float) -> None:
        s, rec = self.state, self.record
        q = np.array(s.q, dtype=np.int64)
        ov = np.zeros(s.k, dtype=np.int64)
        ov[: s.k - 1] = s.ov
        _kernel.accumulate.py_func(
            s.t, t1, q, ov, self._thresholds, self._cur_bin, rec.bin_width, rec.duration, rec.busy,
            rec.queue_area, rec.levels, rec.busy_ov, rec.j_time, rec.k_time, rec.q_snapshot,
        )

    def _advance_python(self, until: float, observers: Sequence[Observer]) -> None:
        s, rec = self.state, self.record
        while True:
            ev = next_event(s)
            if ev.time > until:
                self._accumulate(until)
                s.t = until
                return
            if self.total_events >= self.event_cap:
                self.truncated = True
                return
            self._accumulate(ev.time)
            b = self._cur_bin[0]
            applied = apply_event(s, ev)
            for e in applied:
                i = e.station - 1
                if e.kind == ARRIVAL:
                    rec.arrivals[b, i] += 1
                elif e.kind == SERVICE:
                    rec.departures[b, i] += 1
                elif e.kind == OVERFLOW:
                    rec.ov_departures[b, i] += 1
                elif e.kind == TRANSFER:
                    rec.transfers[b, i] += 1
            self.total_events += 1
            rec.n_events += 1
            if self.check:
                s.check()
            for e in applied:
                for obs in observers:
                    obs(e, s)


def run(config: SystemConfig, horizon: float, observers: Sequence[Observer] = (), *,
        bins: int = DEFAULT_BINS, levels: int = DEFAULT_LEVELS, event_cap: int = DEFAULT_EVENT_CAP,
        check: bool = True) -> TrajectoryRecord:
    """Simulate ``config`` on ``[0, horizon]`` and return the accumulated record."""
    if not horizon > 0:
        raise ValueError("horizon must be positive")
    sim = Simulation(config, horizon, bins=bins, levels=levels, event_cap=event_cap, check=check)
    return sim.advance(horizon, observers)


def _run_replication(args):
    config, horizon, kwargs = args
    return run(config, horizon, **kwargs)


def replicate(config: SystemConfig, horizon: float, reps: int, *, workers: int = 1,
              **kwargs) -> list[TrajectoryRecord]:
    """Independent replications; replication ``r`` runs with seed ``derive_seed(config.seed, r)``.

    Records come back in replication order whatever the worker count.
    """
    if reps < 1:
        raise ValueError("need at least one replication")
    jobs = [(config.with_seed(derive_seed(config.seed, r)), horizon, kwargs) for r in range(reps)]
    if workers <= 1 or reps == 1:
        return [_run_replication(job) for job in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_replication, jobs))


class EventLog:
    """Observer writing ``seq,t,kind,station,Q1..Qk,Q12..Q(k-1)k`` lines."""

    def __init__(self, stream, k: int):
        self.stream = stream
        header = ["seq", "t", "kind", "station"] + [f"Q{i}" for i in range(1, k + 1)]
        header += [f"Q{i}{i + 1}" for i in range(1, k)]
        stream.write(",".join(header) + "\n")

    def __call__(self, event: Event, state: SystemState) -> None:
        row = [str(event.seq), repr(event.time), event.kind, str(event.station)]
        row += [str(v) for v in state.q] + [str(v) for v in state.ov]
        self.stream.write(",".join(row) + "\n")
