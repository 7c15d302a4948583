"""Estimators and sample-path checks computed from :class:`TrajectoryRecord`.

Stations are numbered from 1. Windowed estimators drop the leading
``warmup`` fraction of the bin grid and split the remaining bins into equal
batches for a batch-means confidence interval.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy import stats

from .record import TrajectoryRecord

DEFAULT_WARMUP = 0.1
DEFAULT_BATCHES = 32
CONFIDENCE = 0.95


@dataclass(frozen=True)
class Estimate:
    value: float
    half_width: float
    batches: int
    warmup: float

    @property
    def low(self) -> float:
        return self.value - self.half_width

    @property
    def high(self) -> float:
        return self.value + self.half_width

    def to_dict(self) -> dict:
        return {"value": self.value, "half_width": self.half_width,
                "batches": self.batches, "warmup": self.warmup}


class WindowError(ValueError):
    pass


def _window(record: TrajectoryRecord, warmup: float, batches: int) -> tuple[int, int]:
    """First bin and bins-per-batch of the post-warm-up window."""
    if not 0.0 <= warmup < 1.0:
        raise ValueError("warmup fraction must lie in [0, 1)")
    if batches < 2:
        raise ValueError("need at least two batches")
    # a segment only covers the bins between its start and end times
    covered = np.flatnonzero(record.duration)
    if covered.size == 0:
        raise WindowError("record covers no time")
    lo, hi = int(covered[0]), int(covered[-1]) + 1
    start = lo + int(round(warmup * (hi - lo)))
    per_batch = (hi - start) // batches
    if per_batch < 1:
        raise WindowError(
            f"window of {hi - start} bins cannot hold {batches} batches; "
            "use a longer horizon or a finer bin grid"
        )
    return hi - per_batch * batches, per_batch


def _batched(values: np.ndarray, durations: np.ndarray, start: int, per_batch: int, batches: int,
             warmup: float) -> Estimate:
    v = values[start:start + per_batch * batches].reshape(batches, per_batch).sum(axis=1)
    d = durations[start:start + per_batch * batches].reshape(batches, per_batch).sum(axis=1)
    means = v / d
    value = float(v.sum() / d.sum())
    sd = float(np.std(means, ddof=1))
    half = float(stats.t.ppf(0.5 + CONFIDENCE / 2, batches - 1) * sd / math.sqrt(batches))
    return Estimate(value, half, batches, warmup)


def _station(record: TrajectoryRecord, i: int) -> int:
    if not 1 <= i <= record.k:
        raise IndexError(f"station {i} out of range 1..{record.k}")
    return i - 1


def _transfer(record: TrajectoryRecord, i: int) -> int:
    if not 1 <= i < record.k:
        raise IndexError(f"transfer class {i}|{i + 1} out of range for k={record.k}")
    return i - 1


def time_fraction(record: TrajectoryRecord, integrand: np.ndarray, warmup: float = DEFAULT_WARMUP,
                  batches: int = DEFAULT_BATCHES) -> Estimate:
    """Windowed time average of a per-bin integral with its batch-means CI."""
    start, per_batch = _window(record, warmup, batches)
    return _batched(integrand, record.duration, start, per_batch, batches, warmup)


def effective_traffic_intensity(record: TrajectoryRecord, i: int, warmup: float = DEFAULT_WARMUP,
                                batches: int = DEFAULT_BATCHES) -> Estimate:
    """Fraction of post-warm-up time with ``Q_i >= 1``."""
    j = _station(record, i)
    return time_fraction(record, record.busy[:, j], warmup, batches)


def idle_fraction(record: TrajectoryRecord, i: int, warmup: float = DEFAULT_WARMUP,
                  batches: int = DEFAULT_BATCHES) -> Estimate:
    """Fraction of post-warm-up time with ``Q_i = 0``."""
    j = _station(record, i)
    return time_fraction(record, record.duration - record.busy[:, j], warmup, batches)


def drift_estimate(record: TrajectoryRecord, i: int) -> float:
    """``Q_i(T) / T`` over the record."""
    j = _station(record, i)
    if record.horizon <= 0:
        return 0.0
    return float(record.q_final[j] / record.horizon)


def increment_drift(record: TrajectoryRecord, i: int) -> float:
    """``(Q_i(T) - Q_i(T/2)) / (T/2)``; centred at zero on stable paths."""
    j = _station(record, i)
    half = record.t_start + 0.5 * record.horizon
    mid = record.q_at(0.5)[j]
    return float((record.q_final[j] - mid) / (record.t_end - half))


@dataclass(frozen=True)
class DriftVerdict:
    mean: float
    std_error: float
    drifting: bool


def detect_drift(records: Sequence[TrajectoryRecord], i: int = 1, z: float = 3.0) -> DriftVerdict:
    """Declare station ``i`` drifting when the mean half-horizon increment rate exceeds ``z`` SEs."""
    values = np.array([increment_drift(r, i) for r in records])
    mean = float(values.mean())
    se = float(values.std(ddof=1) / math.sqrt(len(values))) if len(values) > 1 else math.inf
    return DriftVerdict(mean, se, bool(mean > z * se))


def little_residual(record: TrajectoryRecord, i: int = 1) -> Optional[float]:
    """``|mu_hat * rho_hat - (A_i - A_{i|i+1}) / T|`` with ``mu_hat = D_i / B_i``.

    ``None`` when station ``i`` never served anyone.
    """
    j = _station(record, i)
    B = record.B[j]
    T = record.horizon
    if B <= 0 or T <= 0:
        return None
    mu_hat = record.D[j] / B
    rho_hat = B / T
    transferred = record.A_ov[j] if j < record.k - 1 else 0
    return float(abs(mu_hat * rho_hat - (record.A[j] - transferred) / T))


@dataclass(frozen=True)
class OverflowCheck:
    passed: bool
    slack: float
    rate: float
    bound: float


def overflow_bound_check(record: TrajectoryRecord, i: int = 1, warmup: float = DEFAULT_WARMUP,
                         batches: int = DEFAULT_BATCHES, mu_overflow: Optional[float] = None,
                         n_half_widths: float = 3.0) -> OverflowCheck:
    """Check ``D_{i|i+1} / T <= mu_{i|i+1} * idle_{i+1}`` on the post-warm-up window.

    ``mu_overflow`` defaults to the path estimate ``D_{i|i+1} / B_{i|i+1}``;
    the tolerance is ``n_half_widths`` CI half-widths of the bound.
    """
    j = _transfer(record, i)
    start, per_batch = _window(record, warmup, batches)
    sl = slice(start, start + per_batch * batches)
    window = record.duration[sl].sum()
    departures = record.ov_departures[sl, j].sum()
    if mu_overflow is None:
        served = record.busy_ov[sl, j].sum()
        mu_overflow = departures / served if served > 0 else 0.0
    idle = idle_fraction(record, i + 1, warmup, batches)
    rate = float(departures / window)
    bound = float(mu_overflow * idle.value)
    tolerance = n_half_widths * mu_overflow * idle.half_width
    slack = bound - rate
    return OverflowCheck(bool(slack >= -tolerance), slack, rate, bound)


def tightness_diagnostic(record: TrajectoryRecord, i: int, level: float, warmup: float = DEFAULT_WARMUP,
                         batches: int = DEFAULT_BATCHES) -> Estimate:
    """Fraction of post-warm-up time with ``Q_i <= level``."""
    j = _station(record, i)
    if level < 0:
        raise ValueError("level must be >= 0")
    if math.isinf(level):
        return time_fraction(record, record.duration, warmup, batches)
    level = int(level)
    if level >= record.level_cap:
        raise ValueError(f"level {level} beyond the recorded cap {record.level_cap - 1}")
    return time_fraction(record, record.levels[:, j, :level + 1].sum(axis=1), warmup, batches)


def path_rates(record: TrajectoryRecord) -> dict:
    """Sample-path rates behind the relaxed stability argument: arrivals, idle station k."""
    T = record.horizon
    return {
        "arrival_rate": (record.A / T).tolist(),
        "departure_rate": (record.D / T).tolist(),
        "transfer_rate": (record.A_ov / T).tolist(),
        "overflow_departure_rate": (record.D_ov / T).tolist(),
        "idle_fraction": (record.I / T).tolist(),
    }


def station_row(record: TrajectoryRecord, i: int, warmup: float = DEFAULT_WARMUP,
                batches: int = DEFAULT_BATCHES) -> dict:
    """One CSV row of per-station metrics."""
    rho = effective_traffic_intensity(record, i, warmup, batches)
    idle = idle_fraction(record, i, warmup, batches)
    little = little_residual(record, i)
    slack = overflow_bound_check(record, i, warmup, batches).slack if i < record.k else None
    return {
        "rho_star": rho.value,
        "ci": rho.half_width,
        "idle": idle.value,
        "drift": drift_estimate(record, i),
        "little_residual": little,
        "overflow_slack": slack,
        "tight_l0": tightness_diagnostic(record, i, 0, warmup, batches).value,
    }


def mean_and_se(values: Sequence[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size < 2:
        return float(arr.mean()), math.nan
    return float(arr.mean()), float(arr.std(ddof=1) / math.sqrt(arr.size))
