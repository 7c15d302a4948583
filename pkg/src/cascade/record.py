"""Counting processes and time integrals accumulated along one sample path.

Integrals are kept per time bin on a fixed grid of width ``bin_width``, so
warm-up windows and batch means can be cut after the run. Totals are bin sums.
Transfer-class arrays (``*_ov``, ``j_time``, ``k_time``) are indexed by the
source station of class ``i|(i+1)`` and have length ``k - 1``.
"""
from __future__ import annotations

from dataclasses import dataclass, fields

import numpy as np


@dataclass
class TrajectoryRecord:
    k: int
    thresholds: tuple
    t_start: float
    t_end: float
    bin_width: float
    truncated: bool
    n_events: int
    q_initial: np.ndarray    # (k,)
    ov_initial: np.ndarray   # (k-1,)
    q_final: np.ndarray
    ov_final: np.ndarray
    # per-bin integrals
    duration: np.ndarray     # (bins,)
    busy: np.ndarray         # (bins, k)      1(Q_i > 0)
    queue_area: np.ndarray   # (bins, k)      Q_i
    levels: np.ndarray       # (bins, k, L+1) 1(Q_i = l), last column 1(Q_i >= L)
    busy_ov: np.ndarray      # (bins, k-1)    1(Q_{i|i+1} > 0, Q_{i+1} = 0)
    j_time: np.ndarray       # (bins, k-1)    1(Q_i > c_i, Q_{i+1} = 0)
    k_time: np.ndarray       # (bins, k-1)    1(Q_i <= c_i)
    q_snapshot: np.ndarray   # (bins, k)      Q_i at the end of each bin
    # per-bin event counts
    arrivals: np.ndarray     # (bins, k)   A_i
    departures: np.ndarray   # (bins, k)   D_i
    transfers: np.ndarray    # (bins, k-1) A_{i|i+1}
    ov_departures: np.ndarray  # (bins, k-1) D_{i|i+1}

    _ARRAYS = ("duration", "busy", "queue_area", "levels", "busy_ov", "j_time", "k_time",
               "arrivals", "departures", "transfers", "ov_departures")

    @classmethod
    def empty(cls, k: int, thresholds, grid_horizon: float, bins: int, level_cap: int,
              t_start: float, q_initial, ov_initial) -> "TrajectoryRecord":
        if grid_horizon <= 0 or bins < 1:
            raise ValueError("grid needs a positive horizon and at least one bin")
        f, i = np.float64, np.int64
        q0 = np.array(q_initial, dtype=i)
        return cls(
            k=k, thresholds=tuple(thresholds), t_start=float(t_start), t_end=float(t_start),
            bin_width=grid_horizon / bins, truncated=False, n_events=0,
            q_initial=q0, ov_initial=np.array(ov_initial, dtype=i).reshape(k - 1),
            q_final=q0.copy(), ov_final=np.array(ov_initial, dtype=i).reshape(k - 1),
            duration=np.zeros(bins, f), busy=np.zeros((bins, k), f), queue_area=np.zeros((bins, k), f),
            levels=np.zeros((bins, k, level_cap + 1), f), busy_ov=np.zeros((bins, k - 1), f),
            j_time=np.zeros((bins, k - 1), f), k_time=np.zeros((bins, k - 1), f),
            q_snapshot=np.zeros((bins, k), i),
            arrivals=np.zeros((bins, k), i), departures=np.zeros((bins, k), i),
            transfers=np.zeros((bins, k - 1), i), ov_departures=np.zeros((bins, k - 1), i),
        )

    @property
    def horizon(self) -> float:
        return self.t_end - self.t_start

    @property
    def bins(self) -> int:
        return self.duration.shape[0]

    @property
    def level_cap(self) -> int:
        return self.levels.shape[2] - 1

    # totals over the whole record
    @property
    def A(self) -> np.ndarray:
        return self.arrivals.sum(axis=0)

    @property
    def D(self) -> np.ndarray:
        return self.departures.sum(axis=0)

    @property
    def A_ov(self) -> np.ndarray:
        return self.transfers.sum(axis=0)

    @property
    def D_ov(self) -> np.ndarray:
        return self.ov_departures.sum(axis=0)

    @property
    def B(self) -> np.ndarray:
        return self.busy.sum(axis=0)

    @property
    def I(self) -> np.ndarray:
        return self.duration.sum() - self.B

    @property
    def B_ov(self) -> np.ndarray:
        return self.busy_ov.sum(axis=0)

    @property
    def J(self) -> np.ndarray:
        return self.j_time.sum(axis=0)

    @property
    def K(self) -> np.ndarray:
        return self.k_time.sum(axis=0)

    def flow_balance_queues(self) -> tuple[np.ndarray, np.ndarray]:
        """Q(T) and Q_{i|i+1}(T) rebuilt from the counting processes."""
        A_ov = self.A_ov
        shifted = np.zeros(self.k, dtype=np.int64)
        shifted[: self.k - 1] = A_ov
        q = self.q_initial + self.A - self.D - shifted
        ov = self.ov_initial + A_ov - self.D_ov
        return q, ov

    def q_at(self, fraction: float) -> np.ndarray:
        """Queue lengths at the end of the bin closest to ``fraction`` of the grid."""
        if fraction >= 1.0:
            return self.q_final.copy()
        b = min(self.bins - 1, max(0, int(round(fraction * self.bins)) - 1))
        return self.q_snapshot[b].copy()

    def merge(self, later: "TrajectoryRecord") -> "TrajectoryRecord":
        """Concatenate with a record of the same path continuing from ``self.t_end``."""
        if later.k != self.k or later.bins != self.bins or later.bin_width != self.bin_width:
            raise ValueError("records are on different grids")
        if later.t_start != self.t_end:
            raise ValueError(f"later segment starts at {later.t_start}, expected {self.t_end}")
        kwargs = {f.name: getattr(self, f.name) for f in fields(self)}
        for name in self._ARRAYS:
            kwargs[name] = getattr(self, name) + getattr(later, name)
        snap = self.q_snapshot.copy()
        touched = later.duration > 0
        snap[touched] = later.q_snapshot[touched]
        kwargs.update(
            t_end=later.t_end, truncated=self.truncated or later.truncated,
            n_events=self.n_events + later.n_events, q_final=later.q_final.copy(),
            ov_final=later.ov_final.copy(), q_snapshot=snap,
        )
        return TrajectoryRecord(**kwargs)

    def summary(self) -> dict:
        return {
            "k": self.k,
            "t_start": self.t_start,
            "t_end": self.t_end,
            "truncated": self.truncated,
            "events": self.n_events,
            "A": self.A.tolist(), "D": self.D.tolist(),
            "A_ov": self.A_ov.tolist(), "D_ov": self.D_ov.tolist(),
            "B": self.B.tolist(), "I": self.I.tolist(), "B_ov": self.B_ov.tolist(),
            "J": self.J.tolist(), "K": self.K.tolist(),
            "Q_initial": self.q_initial.tolist(), "Q_final": self.q_final.tolist(),
            "Q_ov_final": self.ov_final.tolist(),
        }
