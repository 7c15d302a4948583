"""Stability criteria for the cascade.

For two stations the criterion is closed form: station 2 is an autonomous
GI/G/1 queue, so its busy fraction is rho_2. For k >= 3 the busy fractions of
stations 2..k-1 are not available in closed form; :func:`backward_induction`
estimates each from a simulation of the suffix subsystem, working from
station k up to station 1.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from scipy import stats

from .metrics import DriftVerdict, Estimate, detect_drift, effective_traffic_intensity
from .model import SystemConfig, subsystem
from .simulate import replicate

DEFAULT_MARGIN = 0.02

STABLE = "stable"
UNSTABLE = "unstable"
BOUNDARY = "boundary"
UNCHECKED = "unchecked"


def rho_tilde(lam: float, mu: float, mu_overflow: float, rho_star_next: float) -> float:
    """Criterion value ``lam / (mu + mu_overflow * (1 - rho_star_next))``."""
    if not mu > 0:
        raise ValueError("service rate must be positive")
    if mu_overflow < 0:
        raise ValueError("overflow service rate must be nonnegative")
    if not 0.0 <= rho_star_next <= 1.0:
        raise ValueError(f"busy fraction of the next station must lie in [0, 1], got {rho_star_next}")
    return lam / (mu + mu_overflow * (1.0 - rho_star_next))


@dataclass(frozen=True)
class SimBudget:
    horizon: float = 1e5
    reps: int = 10
    warmup: float = 0.1
    workers: int = 1


@dataclass
class StationVerdict:
    station: int
    lam: float
    mu: float
    mu_overflow: Optional[float]
    rho: float
    rho_star: Optional[float] = None          # busy fraction of this station used downstream
    rho_star_half_width: float = 0.0
    rho_star_source: str = ""
    rho_tilde: Optional[float] = None
    rho_tilde_low: Optional[float] = None
    rho_tilde_high: Optional[float] = None
    rho_tilde_naive: Optional[float] = None   # with the next station's criterion value in place of its busy fraction
    classification: str = UNCHECKED


@dataclass
class StabilityVerdict:
    stations: list
    classification: str
    margin: float
    unstable_station: Optional[int] = None
    notes: list = field(default_factory=list)
    drift: Optional[DriftVerdict] = None

    def to_dict(self) -> dict:
        out = asdict(self)
        if self.drift is not None:
            out["drift"] = asdict(self.drift)
        return out

    def table(self) -> str:
        head = f"{'i':>2} {'lambda':>8} {'mu':>8} {'mu_ov':>8} {'rho':>8} {'rho*':>8} {'+-':>7} {'rho~':>8} {'class':>9}"
        lines = [head]
        for s in self.stations:
            lines.append(
                f"{s.station:>2} {s.lam:8.4f} {s.mu:8.4f} {_fmt(s.mu_overflow)} {s.rho:8.4f} "
                f"{_fmt(s.rho_star)} {s.rho_star_half_width:7.4f} {_fmt(s.rho_tilde)} {s.classification:>9}"
            )
        where = f" at station {self.unstable_station}" if self.unstable_station else ""
        lines.append(f"verdict: {self.classification}{where} (margin {self.margin})")
        lines.extend(f"note: {n}" for n in self.notes)
        return "\n".join(lines)


def _fmt(x: Optional[float]) -> str:
    return f"{'-':>8}" if x is None else f"{x:8.4f}"


def _clip(x: float) -> float:
    return min(max(x, 0.0), 1.0)


def _classify(low: float, high: float, margin: float) -> str:
    if high < 1.0 - margin:
        return STABLE
    if low > 1.0 + margin:
        return UNSTABLE
    return BOUNDARY


def _base_verdicts(config: SystemConfig) -> list:
    out = []
    for n, st in enumerate(config.stations, start=1):
        mu_ov = st.overflow_service.rate if n < config.k else None
        out.append(StationVerdict(n, st.arrival.rate, st.service.rate, mu_ov, st.arrival.rate / st.service.rate))
    return out


def estimate_rho_star(config: SystemConfig, i: int, budget: SimBudget) -> Estimate:
    """Busy fraction of station ``i`` from replications of the suffix subsystem ``i..k``."""
    sub = subsystem(config, i)
    records = replicate(sub, budget.horizon, budget.reps, workers=budget.workers)
    per_rep = [effective_traffic_intensity(r, 1, budget.warmup) for r in records]
    if len(per_rep) == 1:
        return per_rep[0]
    values = np.array([e.value for e in per_rep])
    half = stats.t.ppf(0.975, len(values) - 1) * values.std(ddof=1) / math.sqrt(len(values))
    return Estimate(float(values.mean()), float(half), per_rep[0].batches, budget.warmup)


def _settle_last(verdicts: list, margin: float) -> str:
    last = verdicts[-1]
    last.rho_tilde = last.rho_tilde_low = last.rho_tilde_high = last.rho
    last.classification = _classify(last.rho, last.rho, margin)
    if last.classification == STABLE:
        last.rho_star, last.rho_star_source = last.rho, "analytic"
    return last.classification


def classify_two_station(config: SystemConfig, sim_budget: Optional[SimBudget] = None,
                         margin: float = DEFAULT_MARGIN) -> StabilityVerdict:
    """Closed-form verdict for k = 2, optionally cross-checked by a drift simulation."""
    if config.k != 2:
        raise ValueError("classify_two_station needs exactly two stations")
    v1, v2 = verdicts = _base_verdicts(config)
    notes = config.admissibility_warnings()
    _settle_last(verdicts, margin)
    # a saturated station 2 is busy all the time
    busy2 = min(v2.rho, 1.0)
    v1.rho_tilde = v1.rho_tilde_low = v1.rho_tilde_high = rho_tilde(v1.lam, v1.mu, v1.mu_overflow, busy2)
    v1.classification = _classify(v1.rho_tilde, v1.rho_tilde, margin)
    verdict = _overall(verdicts, margin, notes)
    if sim_budget is not None:
        records = replicate(config, sim_budget.horizon, sim_budget.reps, workers=sim_budget.workers)
        verdict.drift = detect_drift(records, 1)
    return verdict


def _overall(verdicts: list, margin: float, notes: list) -> StabilityVerdict:
    unstable = [v.station for v in verdicts if v.classification == UNSTABLE]
    if unstable:
        return StabilityVerdict(verdicts, UNSTABLE, margin, max(unstable), notes)
    if all(v.classification == STABLE for v in verdicts):
        return StabilityVerdict(verdicts, STABLE, margin, None, notes)
    return StabilityVerdict(verdicts, BOUNDARY, margin, None, notes)


def backward_induction(config: SystemConfig, sim_budget: SimBudget = SimBudget(),
                       margin: float = DEFAULT_MARGIN) -> StabilityVerdict:
    """Check stations k, k-1, ..., 1, feeding each estimated busy fraction upward.

    The busy fraction of station k is rho_k. For 2 <= i < k it is estimated
    from the suffix subsystem ``i..k``, which is only simulated once that
    suffix has been classified stable. Confidence half-widths are carried
    into an interval for each criterion value.
    """
    k = config.k
    if k < 2:
        raise ValueError("backward induction needs at least two stations")
    verdicts = _base_verdicts(config)
    notes = config.admissibility_warnings()
    notes.append("busy fractions estimated from the empty initial state")
    if _settle_last(verdicts, margin) != STABLE:
        return _overall(verdicts, margin, notes)

    last = verdicts[-1]
    check = estimate_rho_star(config, k, sim_budget)
    notes.append(f"simulated busy fraction of station {k}: {check.value:.5f} +- {check.half_width:.5f} "
                 f"(analytic {last.rho:.5f})")

    for i in range(k - 1, 0, -1):
        nxt, cur = verdicts[i], verdicts[i - 1]
        if nxt.rho_star is None:
            est = estimate_rho_star(config, i + 1, sim_budget)
            nxt.rho_star = est.value
            nxt.rho_star_half_width = est.half_width
            nxt.rho_star_source = f"subsystem {i + 1}..{k}, {sim_budget.reps} x T={sim_budget.horizon:g}"
        r, h = nxt.rho_star, nxt.rho_star_half_width
        cur.rho_tilde = rho_tilde(cur.lam, cur.mu, cur.mu_overflow, _clip(r))
        cur.rho_tilde_low = rho_tilde(cur.lam, cur.mu, cur.mu_overflow, _clip(r - h))
        cur.rho_tilde_high = rho_tilde(cur.lam, cur.mu, cur.mu_overflow, _clip(r + h))
        if k >= 3:
            cur.rho_tilde_naive = rho_tilde(cur.lam, cur.mu, cur.mu_overflow, _clip(nxt.rho_tilde))
        cur.classification = _classify(cur.rho_tilde_low, cur.rho_tilde_high, margin)
        if cur.classification == UNSTABLE:
            break
        if cur.classification == BOUNDARY:
            notes.append(f"station {i}: criterion interval [{cur.rho_tilde_low:.4f}, {cur.rho_tilde_high:.4f}] "
                         f"meets the boundary band; raise the simulation budget")
            break
    return _overall(verdicts, margin, notes)


def classify(config: SystemConfig, sim_budget: Optional[SimBudget] = None,
             margin: float = DEFAULT_MARGIN) -> StabilityVerdict:
    """Closed form for k <= 2, backward induction otherwise."""
    if config.k == 1:
        verdicts = _base_verdicts(config)
        _settle_last(verdicts, margin)
        return _overall(verdicts, margin, config.admissibility_warnings())
    if config.k == 2:
        return classify_two_station(config, sim_budget, margin)
    return backward_induction(config, sim_budget or SimBudget(), margin)
