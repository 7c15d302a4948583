"""k-station cascade: configuration, Markov state and the reference event stepper.

Station numbers are 1-based in everything user-facing (``Event.station``,
``subsystem``); lists inside :class:`SystemState` are 0-based. Transfer class
``i|(i+1)`` is indexed by its source station ``i``.

The functions here are the readable definition of the dynamics. The compiled
loop in :mod:`cascade._kernel` implements the same rules and is checked
against this stepper record for record.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

from .variates import DistributionSpec, StreamBank, VariateStream, check_spread_out

ARRIVAL = "arrival"
SERVICE = "service"
OVERFLOW = "overflow"
TRANSFER = "transfer"

# stream slots per station: arrival, service, overflow service of class i|(i+1)
STREAMS_PER_STATION = 3

_PLACEHOLDER = DistributionSpec("deterministic", {"value": 1.0})


class ConfigError(ValueError):
    """Invalid system configuration; ``errors`` lists every violation found."""

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class StateFault(RuntimeError):
    """Simulator state broke a structural invariant."""


@dataclass(frozen=True)
class Station:
    arrival: DistributionSpec
    service: DistributionSpec
    threshold: Optional[int] = None
    overflow_service: Optional[DistributionSpec] = None


@dataclass(frozen=True)
class SystemConfig:
    stations: tuple
    seed: int = 0
    initial_queues: Optional[tuple] = None
    initial_overflow: Optional[tuple] = None
    stream_offset: int = 0

    def __post_init__(self):
        object.__setattr__(self, "stations", tuple(self.stations))
        if self.initial_queues is not None:
            object.__setattr__(self, "initial_queues", tuple(int(v) for v in self.initial_queues))
        if self.initial_overflow is not None:
            object.__setattr__(self, "initial_overflow", tuple(int(v) for v in self.initial_overflow))
        errors = self.validate()
        if errors:
            raise ConfigError(errors)

    def validate(self) -> list[str]:
        errors = []
        k = len(self.stations)
        if k < 1:
            return ["k: at least one station is required"]
        for n, st in enumerate(self.stations, start=1):
            for name in ("arrival", "service"):
                if not isinstance(getattr(st, name), DistributionSpec):
                    errors.append(f"station {n}: {name} must be a DistributionSpec")
            if n < k:
                c = st.threshold
                if c is None or isinstance(c, bool) or not isinstance(c, int) or c < 1:
                    errors.append(f"station {n}: threshold must be >= 1 (got {c!r})")
                if not isinstance(st.overflow_service, DistributionSpec):
                    errors.append(f"station {n}: overflow_service is required for transfers to station {n + 1}")
        if self.initial_queues is not None:
            if len(self.initial_queues) != k or min(self.initial_queues) < 0:
                errors.append(f"initial_queues: need {k} nonnegative integers")
        if self.initial_overflow is not None:
            if len(self.initial_overflow) != k - 1 or any(v not in (0, 1) for v in self.initial_overflow):
                errors.append(f"initial_overflow: need {k - 1} values in {{0, 1}}")
        return errors

    @property
    def k(self) -> int:
        return len(self.stations)

    @property
    def thresholds(self) -> list[int]:
        return [st.threshold for st in self.stations[:-1]]

    def with_seed(self, seed: int) -> "SystemConfig":
        return replace(self, seed=int(seed))

    def admissibility_warnings(self) -> list[str]:
        warnings = []
        for n, st in enumerate(self.stations, start=1):
            report = check_spread_out(st.arrival)
            if not report.admissible:
                missing = []
                if not report.unbounded_support:
                    missing.append("unbounded support")
                if not report.density_component:
                    missing.append("density component")
                warnings.append(
                    f"station {n}: {st.arrival.family} arrivals are not spread out "
                    f"({' and '.join(missing)} missing); stability criteria may not apply"
                )
        return warnings

    def streams(self) -> list[VariateStream]:
        """Streams in local slot order ``3*i + {0: arrival, 1: service, 2: overflow}``."""
        out = []
        for i, st in enumerate(self.stations):
            base = STREAMS_PER_STATION * (self.stream_offset + i)
            out.append(VariateStream(st.arrival, self.seed, base))
            out.append(VariateStream(st.service, self.seed, base + 1))
            out.append(VariateStream(st.overflow_service or _PLACEHOLDER, self.seed, base + 2))
        return out


def subsystem(config: SystemConfig, i: int) -> SystemConfig:
    """Stations ``i..k`` as a stand-alone cascade, with station ``i`` fed only exogenously.

    Stream addresses are kept, so with the same seed the suffix replays the
    exact class-``i..k`` sample path of the full system.
    """
    if not 1 <= i <= config.k:
        raise IndexError(f"station index {i} out of range 1..{config.k}")
    if i == 1:
        return config
    stations = list(config.stations[i - 1:])
    last = stations[-1]
    stations[-1] = Station(last.arrival, last.service)
    queues = config.initial_queues[i - 1:] if config.initial_queues else None
    overflow = config.initial_overflow[i - 1:] if config.initial_overflow else None
    return SystemConfig(tuple(stations), config.seed, queues, overflow, config.stream_offset + i - 1)


@dataclass(frozen=True)
class Event:
    seq: int
    time: float
    kind: str
    station: int


@dataclass
class SystemState:
    """Markov state of the cascade plus the streams that drive it.

    Times are absolute schedules; remaining times are derived. A preempted
    overflow customer carries ``ov_work`` (total requirement) and ``ov_done``
    (work received); ``ov_start`` is when its current service stint began.
    """

    t: float
    q: list
    ov: list
    next_arrival: list
    service_end: list
    ov_work: list
    ov_done: list
    ov_start: list
    thresholds: list
    bank: StreamBank = field(repr=False, compare=False)
    seq: int = 0

    @property
    def k(self) -> int:
        return len(self.q)

    @property
    def residual_arrival(self) -> list:
        return [a - self.t for a in self.next_arrival]

    @property
    def residual_service(self) -> list:
        return [s - self.t if n > 0 else 0.0 for s, n in zip(self.service_end, self.q)]

    @property
    def residual_overflow(self) -> list:
        out = []
        for i, b in enumerate(self.ov):
            if not b:
                out.append(0.0)
            elif self.overflow_in_service(i):
                out.append(self.ov_work[i] - self.ov_done[i] - (self.t - self.ov_start[i]))
            else:
                out.append(self.ov_work[i] - self.ov_done[i])
        return out

    def overflow_in_service(self, i: int) -> bool:
        """Whether the class-(i+1)|(i+2) customer (0-based source ``i``) is being served."""
        return self.ov[i] == 1 and self.q[i + 1] == 0

    def forbidden(self) -> bool:
        return any(
            self.q[i] > self.thresholds[i] and self.q[i + 1] == 0 and self.ov[i] == 0
            for i in range(self.k - 1)
        )

    def check(self) -> None:
        for i in range(self.k):
            busy = self.service_end[i] != math.inf
            if busy != (self.q[i] >= 1):
                raise StateFault(f"station {i + 1}: server busy={busy} with Q={self.q[i]}")
            if self.next_arrival[i] < self.t:
                raise StateFault(f"station {i + 1}: arrival scheduled in the past")
        for i, b in enumerate(self.ov):
            if b not in (0, 1):
                raise StateFault(f"overflow occupancy {b} at station {i + 2}")
        if self.forbidden():
            raise StateFault("state left with a pending transfer")

    def snapshot(self) -> tuple:
        return (self.t, tuple(self.q), tuple(self.ov))


def _draw(state: SystemState, i: int, slot: int) -> float:
    return state.bank.draw(STREAMS_PER_STATION * i + slot)


def init(config: SystemConfig) -> SystemState:
    """State at time 0: configured queues, fresh residual arrivals, pending transfers applied."""
    k = config.k
    bank = StreamBank(config.streams())
    q = list(config.initial_queues or [0] * k)
    ov = list(config.initial_overflow or [0] * (k - 1))
    state = SystemState(
        t=0.0, q=q, ov=ov,
        next_arrival=[0.0] * k, service_end=[math.inf] * k,
        ov_work=[0.0] * (k - 1), ov_done=[0.0] * (k - 1), ov_start=[0.0] * (k - 1),
        thresholds=config.thresholds, bank=bank,
    )
    for i in range(k):
        state.next_arrival[i] = _draw(state, i, 0)
        if q[i] > 0:
            state.service_end[i] = _draw(state, i, 1)
    for i in range(k - 1):
        if ov[i]:
            state.ov_work[i] = _draw(state, i, 2)
    # initial transfers shape X(0); they are not counted as arrivals of class i|(i+1)
    apply_transfer_rule(state)
    state.seq = 0
    return state


def next_event(state: SystemState) -> Event:
    """Earliest pending event; ties go service < overflow < arrival, then lower station."""
    best_time, best_kind, best_station = math.inf, None, 0
    for i in range(state.k):
        if state.q[i] > 0 and state.service_end[i] < best_time:
            best_time, best_kind, best_station = state.service_end[i], SERVICE, i
    for i in range(state.k - 1):
        if state.overflow_in_service(i):
            end = state.ov_start[i] + (state.ov_work[i] - state.ov_done[i])
            if end < best_time:
                best_time, best_kind, best_station = end, OVERFLOW, i
    for i in range(state.k):
        if state.next_arrival[i] < best_time:
            best_time, best_kind, best_station = state.next_arrival[i], ARRIVAL, i
    return Event(state.seq, best_time, best_kind, best_station + 1)


def apply_event(state: SystemState, event: Event) -> list[Event]:
    """Advance to ``event.time`` and apply it, then any transfers it enables.

    Returns the applied event followed by the transfer events, all sharing
    the same timestamp.
    """
    if event.time < state.t:
        raise StateFault(f"event at {event.time} precedes clock {state.t}")
    t = event.time
    state.t = t
    i = event.station - 1
    if event.kind == ARRIVAL:
        state.next_arrival[i] = t + _draw(state, i, 0)
        if state.q[i] == 0:
            state.service_end[i] = t + _draw(state, i, 1)
            if i >= 1 and state.ov[i - 1]:
                # class-i arrival preempts the overflow customer from station i-1
                state.ov_done[i - 1] += t - state.ov_start[i - 1]
        state.q[i] += 1
    elif event.kind == SERVICE:
        if state.q[i] < 1:
            raise StateFault(f"service completion at empty station {i + 1}")
        state.q[i] -= 1
        if state.q[i] > 0:
            state.service_end[i] = t + _draw(state, i, 1)
        else:
            state.service_end[i] = math.inf
            if i >= 1 and state.ov[i - 1]:
                state.ov_start[i - 1] = t
    elif event.kind == OVERFLOW:
        if not state.overflow_in_service(i):
            raise StateFault(f"overflow completion with no overflow customer in service at station {i + 2}")
        state.ov[i] = 0
        state.ov_work[i] = state.ov_done[i] = 0.0
    else:
        raise StateFault(f"cannot apply event kind {event.kind!r}")
    applied = [replace(event, seq=state.seq)]
    state.seq += 1
    return applied + apply_transfer_rule(state)


def apply_transfer_rule(state: SystemState) -> list[Event]:
    """Move waiting customers down while ``Q_i > c_i`` and station ``i+1`` is empty."""
    emitted = []
    changed = True
    while changed:
        changed = False
        for i in range(state.k - 1):
            if state.q[i] > state.thresholds[i] and state.q[i + 1] == 0 and state.ov[i] == 0:
                # a waiting customer leaves; the one in service keeps its schedule
                state.q[i] -= 1
                state.ov[i] = 1
                state.ov_work[i] = _draw(state, i, 2)
                state.ov_done[i] = 0.0
                state.ov_start[i] = state.t
                emitted.append(Event(state.seq, state.t, TRANSFER, i + 1))
                state.seq += 1
                changed = True
    return emitted
