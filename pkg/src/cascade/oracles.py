"""Ground truth independent of the simulator.

* Lindley recursion for a stand-alone GI/G/1 station.
* M/M/1 closed forms.
* Truncated CTMC of the fully exponential two-station cascade, solved for
  its stationary law. State is ``(q1, q2, b)`` with ``b`` the occupancy of
  the transferred-customer slot at station 2; instantaneous transfers are
  folded into the transition that triggers them.
"""
from __future__ import annotations

import logging
from collections import deque
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .variates import VariateStream

log = logging.getLogger(__name__)

TRUNCATION_WARNING = 1e-6


class ConvergenceError(RuntimeError):
    pass


def lindley_waiting(arrivals: VariateStream, services: VariateStream, n: int) -> np.ndarray:
    """Waiting times of the first ``n`` customers of a FIFO GI/G/1 queue started empty."""
    if n < 1:
        raise ValueError("n must be >= 1")
    s = services.draws(n - 1)
    t = arrivals.draws(n - 1)
    w = np.zeros(n)
    prev = 0.0
    for j, step in enumerate(s - t):
        prev = prev + step
        if prev < 0.0:
            prev = 0.0
        w[j + 1] = prev
    return w


def mm1_mean_wait(lam: float, mu: float) -> float:
    """Mean time in queue (excluding service) of a stable M/M/1 queue."""
    if not lam < mu:
        raise ValueError("M/M/1 queue is unstable")
    return (lam / mu) / (mu - lam)


def mm1_marginal(rho: float, size: int) -> np.ndarray:
    """P(Q = n), n = 0..size-1, for a stable M/M/1 queue."""
    return (1.0 - rho) * rho ** np.arange(size)


@dataclass(frozen=True)
class CtmcSpec:
    lam1: float
    lam2: float
    mu1: float
    mu2: float
    mu12: float
    c1: int
    truncation: int = 200

    def __post_init__(self):
        errors = []
        for name in ("lam1", "lam2", "mu1", "mu2"):
            if not getattr(self, name) > 0:
                errors.append(f"{name} must be positive")
        if not self.mu12 >= 0:
            errors.append("mu12 must be nonnegative")
        if not isinstance(self.c1, int) or self.c1 < 1:
            errors.append("c1 must be an integer >= 1")
        # c1 >= N switches transfers off entirely, which is also a valid oracle
        elif not (self.truncation > self.c1 + 10 or self.c1 >= self.truncation):
            errors.append(f"truncation {self.truncation} must exceed c1 + 10 = {self.c1 + 10}")
        if errors:
            raise ValueError("; ".join(errors))


@dataclass
class CascadeGenerator:
    spec: CtmcSpec
    states: np.ndarray      # (n, 3) rows (q1, q2, b)
    matrix: sp.csr_matrix   # rate matrix, rows sum to zero

    @property
    def size(self) -> int:
        return self.states.shape[0]


def _transitions(spec: CtmcSpec, q1: int, q2: int, b: int):
    N, c = spec.truncation, spec.c1
    if c >= N:
        c = N + 1  # transfers switched off

    def settle(x1, x2, xb):
        if x1 > c and x2 == 0 and xb == 0:
            return x1 - 1, 0, 1
        return x1, x2, xb

    # class-1 arrival; the arriving customer counts toward the threshold
    if q1 >= c and q2 == 0 and b == 0:
        yield spec.lam1, (q1, q2, 1)
    elif q1 < N:
        yield spec.lam1, (q1 + 1, q2, b)
    if q1 >= 1:
        yield spec.mu1, (q1 - 1, q2, b)
    if q2 < N:
        yield spec.lam2, (q1, q2 + 1, b)
    if q2 >= 1:
        yield spec.mu2, settle(q1, q2 - 1, b)
    if b == 1 and q2 == 0 and spec.mu12 > 0:
        yield spec.mu12, settle(q1, 0, 0)


def cascade_ctmc_generator(spec: CtmcSpec) -> CascadeGenerator:
    """Rate matrix on the states reachable from the empty system."""
    index = {(0, 0, 0): 0}
    order = [(0, 0, 0)]
    rows, cols, vals = [], [], []
    queue = deque([(0, 0, 0)])
    while queue:
        x = queue.popleft()
        src = index[x]
        for rate, y in _transitions(spec, *x):
            if y == x:
                continue
            dst = index.get(y)
            if dst is None:
                dst = index[y] = len(order)
                order.append(y)
                queue.append(y)
            rows.append(src)
            cols.append(dst)
            vals.append(rate)
    n = len(order)
    off = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    off.sum_duplicates()
    exit_rates = np.asarray(off.sum(axis=1)).ravel()
    matrix = (off - sp.diags(exit_rates)).tocsr()
    return CascadeGenerator(spec, np.array(order, dtype=np.int64), matrix)


@dataclass
class StationaryTable:
    spec: CtmcSpec
    prob: np.ndarray   # (N+1, N+1, 2)

    @property
    def truncation_mass(self) -> float:
        """Probability within two states of either truncation cap."""
        N = self.spec.truncation
        p = self.prob
        return float(p[N - 1:, :, :].sum() + p[:N - 1, N - 1:, :].sum())

    def marginal(self, station: int) -> np.ndarray:
        if station == 1:
            return self.prob.sum(axis=(1, 2))
        if station == 2:
            return self.prob.sum(axis=(0, 2))
        raise ValueError("station must be 1 or 2")

    @property
    def overflow_occupancy(self) -> float:
        return float(self.prob[:, :, 1].sum())


def stationary_solve(generator: CascadeGenerator, method: str = "direct", *,
                     tol: float = 1e-12, max_iter: int = 1_000_000) -> StationaryTable:
    """Stationary law of the truncated chain.

    ``direct`` fixes the mass of the empty state, solves the other balance
    equations by sparse LU and normalizes. ``power`` uniformizes with the largest exit rate and
    iterates until successive iterates are within ``tol`` in total variation.
    """
    Q = generator.matrix
    n = generator.size
    if method == "direct":
        # pin the empty state to 1 and solve the remaining balance equations;
        # a dense normalization row would wreck the LU fill-in
        At = Q.T.tocsc()
        pi = np.empty(n)
        pi[0] = 1.0
        pi[1:] = spla.spsolve(At[1:, 1:], -At[1:, 0].toarray().ravel())
    elif method == "power":
        rate = float(-Q.diagonal().min())
        P = (sp.identity(n, format="csr") + Q / rate).T.tocsr()
        pi = np.full(n, 1.0 / n)
        for _ in range(max_iter):
            nxt = P @ pi
            if 0.5 * np.abs(nxt - pi).sum() < tol:
                pi = nxt
                break
            pi = nxt
        else:
            raise ConvergenceError(f"power iteration did not converge in {max_iter} steps")
    else:
        raise ValueError(f"unknown method {method!r}")
    pi = np.clip(pi, 0.0, None)
    pi /= pi.sum()
    N = generator.spec.truncation
    prob = np.zeros((N + 1, N + 1, 2))
    s = generator.states
    prob[s[:, 0], s[:, 1], s[:, 2]] = pi
    table = StationaryTable(generator.spec, prob)
    if table.truncation_mass > TRUNCATION_WARNING:
        log.warning("truncation mass %.3g exceeds %.0e; raise the truncation level",
                    table.truncation_mass, TRUNCATION_WARNING)
    return table


def oracle_rho_star(table: StationaryTable, i: int) -> float:
    """Stationary probability that station ``i`` holds a class-``i`` customer."""
    return 1.0 - float(table.marginal(i)[0])


def solve_cascade(spec: CtmcSpec, method: str = "direct") -> StationaryTable:
    return stationary_solve(cascade_ctmc_generator(spec), method)


def ctmc_spec_from_config(config, truncation: int = 200) -> CtmcSpec:
    """Exponential two-station :class:`~cascade.model.SystemConfig` as a CTMC spec."""
    if config.k != 2:
        raise ValueError("the CTMC oracle covers two stations only")
    s1, s2 = config.stations
    laws = {"station 1 arrival": s1.arrival, "station 1 service": s1.service,
            "overflow service": s1.overflow_service, "station 2 arrival": s2.arrival,
            "station 2 service": s2.service}
    bad = [name for name, law in laws.items() if law.family != "exponential"]
    if bad:
        raise ValueError(f"CTMC oracle needs exponential laws; not exponential: {', '.join(bad)}")
    return CtmcSpec(s1.arrival.rate, s2.arrival.rate, s1.service.rate, s2.service.rate,
                    s1.overflow_service.rate, s1.threshold, truncation)
