"""Seeded renewal variates: distribution specs, reproducible streams, admissibility.

Every stream is addressed by ``(seed, stream_index)`` and backed by its own
PCG64 generator derived through :class:`numpy.random.SeedSequence`, so the
draws do not depend on creation order or on any global generator state.
Draws are produced in fixed-size blocks; the simulator kernels read the
same blocks, which keeps the Python stepper and the compiled loop in lockstep.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Any, Mapping

import numpy as np

FAMILIES = ("exponential", "erlang", "hyperexponential", "uniform", "deterministic", "lognormal")

BLOCK_SIZE = 4096

_TINY = np.finfo(float).tiny


class DistributionError(ValueError):
    """Invalid distribution family or parameters."""

    def __init__(self, field_name: str, message: str):
        super().__init__(f"{field_name}: {message}")
        self.field = field_name


def _positive(params: Mapping[str, Any], name: str) -> float:
    if name not in params:
        raise DistributionError(name, "missing parameter")
    try:
        value = float(params[name])
    except (TypeError, ValueError):
        raise DistributionError(name, f"not a number: {params[name]!r}") from None
    if not (value > 0 and math.isfinite(value)):
        raise DistributionError(name, f"must be a positive finite number, got {value}")
    return value


def _mean_param(params: Mapping[str, Any]) -> float:
    # `rate` is accepted as an alias of 1/mean in scenario files
    if "mean" in params and "rate" in params:
        raise DistributionError("rate", "give either mean or rate, not both")
    if "rate" in params:
        return 1.0 / _positive(params, "rate")
    return _positive(params, "mean")


@dataclass(frozen=True)
class DistributionSpec:
    """Law of an interarrival or service time.

    Parameters by family (``mean`` may be replaced by ``rate`` = 1/mean):

    ============== ==========================================
    exponential    mean
    erlang         shape (positive int), mean
    hyperexponential  probs (sum to 1), means
    uniform        low (>= 0), high (> low)
    deterministic  value (or mean)
    lognormal      mean, sigma (std. dev. of the log)
    ============== ==========================================
    """

    family: str
    params: tuple = field(default=())

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise DistributionError("family", f"unknown family {self.family!r}; expected one of {FAMILIES}")
        if isinstance(self.params, Mapping):
            object.__setattr__(self, "params", _normalize(self.family, self.params))

    @classmethod
    def from_dict(cls, record: Mapping[str, Any]) -> "DistributionSpec":
        """Build from a ``{family, params}`` record or a flat ``{family, mean, ...}`` one."""
        if "family" not in record:
            raise DistributionError("family", "missing")
        if "params" in record:
            params = dict(record["params"])
        else:
            params = {key: value for key, value in record.items() if key != "family"}
        return cls(str(record["family"]), params)

    def to_dict(self) -> dict:
        return {"family": self.family, "params": {key: (list(v) if isinstance(v, tuple) else v) for key, v in self.params}}

    @property
    def param_dict(self) -> dict:
        return dict(self.params)

    @property
    def mean(self) -> float:
        p = self.param_dict
        if self.family == "hyperexponential":
            return float(np.dot(p["probs"], p["means"]))
        if self.family == "uniform":
            return 0.5 * (p["low"] + p["high"])
        if self.family == "deterministic":
            return p["value"]
        return p["mean"]

    @property
    def rate(self) -> float:
        return 1.0 / self.mean

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        """Draw ``size`` i.i.d. strictly positive variates from ``rng``."""
        p = self.param_dict
        if self.family == "exponential":
            x = rng.exponential(p["mean"], size)
        elif self.family == "erlang":
            x = rng.gamma(p["shape"], p["mean"] / p["shape"], size)
        elif self.family == "hyperexponential":
            branch = rng.choice(len(p["probs"]), size=size, p=np.asarray(p["probs"]))
            x = rng.exponential(1.0, size) * np.asarray(p["means"])[branch]
        elif self.family == "uniform":
            # 1 - u lies in (0, 1], so draws stay strictly above `low`
            x = p["low"] + (p["high"] - p["low"]) * (1.0 - rng.random(size))
        elif self.family == "deterministic":
            x = np.full(size, p["value"])
        else:
            sigma = p["sigma"]
            x = rng.lognormal(math.log(p["mean"]) - 0.5 * sigma * sigma, sigma, size)
        return np.maximum(x, _TINY)


def _normalize(family: str, params: Mapping[str, Any]) -> tuple:
    if family == "exponential":
        out = {"mean": _mean_param(params)}
    elif family == "erlang":
        shape = params.get("shape")
        if not isinstance(shape, (int, np.integer)) or isinstance(shape, bool) or shape < 1:
            raise DistributionError("shape", f"Erlang shape must be a positive integer, got {shape!r}")
        out = {"shape": int(shape), "mean": _mean_param(params)}
    elif family == "hyperexponential":
        try:
            probs = tuple(float(v) for v in params["probs"])
            means = tuple(float(v) for v in params["means"])
        except KeyError as exc:
            raise DistributionError(exc.args[0], "missing parameter") from None
        if len(probs) == 0 or len(probs) != len(means):
            raise DistributionError("probs", "probs and means must be non-empty and of equal length")
        if any(v < 0 for v in probs) or abs(sum(probs) - 1.0) > 1e-9:
            raise DistributionError("probs", "must be nonnegative and sum to 1")
        if any(not (m > 0 and math.isfinite(m)) for m in means):
            raise DistributionError("means", "must be positive finite numbers")
        out = {"probs": probs, "means": means}
    elif family == "uniform":
        if "low" not in params:
            raise DistributionError("low", "missing parameter")
        low = float(params["low"])
        high = _positive(params, "high")
        if low < 0:
            raise DistributionError("low", "must be >= 0")
        if not low < high:
            raise DistributionError("low", f"lower bound {low} must be < upper bound {high}")
        out = {"low": low, "high": high}
    elif family == "deterministic":
        key = "value" if "value" in params else "mean"
        if key == "mean" and "rate" in params:
            out = {"value": _mean_param(params)}
        else:
            out = {"value": _positive(params, key)}
    else:
        out = {"mean": _mean_param(params), "sigma": _positive(params, "sigma")}
    return tuple(sorted(out.items()))


def rate_of(spec: DistributionSpec) -> float:
    """Rate 1/E[tau] of the law."""
    return spec.rate


@dataclass(frozen=True)
class SpreadOutReport:
    unbounded_support: bool
    density_component: bool

    @property
    def admissible(self) -> bool:
        return self.unbounded_support and self.density_component


# (unbounded support, absolutely continuous component with j = 1)
_SPREAD_TABLE = {
    "exponential": (True, True),
    "erlang": (True, True),
    "hyperexponential": (True, True),
    "lognormal": (True, True),
    "uniform": (False, True),
    "deterministic": (False, False),
}


def check_spread_out(spec: DistributionSpec) -> SpreadOutReport:
    """Static admissibility of an interarrival law.

    Requires P(tau > x) > 0 for every x > 0 and a density component of some
    finite convolution power; both are decided per family.
    """
    return SpreadOutReport(*_SPREAD_TABLE[spec.family])


def _seed_sequence(seed: int, stream_index: int) -> np.random.SeedSequence:
    return np.random.SeedSequence(int(seed) & 0xFFFF_FFFF_FFFF_FFFF, spawn_key=(int(stream_index),))


class VariateStream:
    """I.i.d. draws from ``spec`` addressed by ``(seed, stream_index)``."""

    def __init__(self, spec: DistributionSpec, seed: int, stream_index: int, block_size: int = BLOCK_SIZE):
        self.spec = spec
        self.seed = int(seed)
        self.stream_index = int(stream_index)
        self.block_size = block_size
        self._rng = np.random.Generator(np.random.PCG64(_seed_sequence(seed, stream_index)))
        self._block = np.empty(0)
        self._pos = 0

    def next_block(self) -> np.ndarray:
        """Return the next ``block_size`` draws of the stream."""
        return self.spec.sample(self._rng, self.block_size)

    def draw(self) -> float:
        if self._pos >= self._block.size:
            self._block = self.next_block()
            self._pos = 0
        value = self._block[self._pos]
        self._pos += 1
        return float(value)

    def draws(self, n: int) -> np.ndarray:
        return np.array([self.draw() for _ in range(n)]) if n < 64 else self._draws_fast(n)

    def _draws_fast(self, n: int) -> np.ndarray:
        out = np.empty(n)
        filled = 0
        while filled < n:
            if self._pos >= self._block.size:
                self._block = self.next_block()
                self._pos = 0
            take = min(n - filled, self._block.size - self._pos)
            out[filled:filled + take] = self._block[self._pos:self._pos + take]
            self._pos += take
            filled += take
        return out

    def __iter__(self):
        while True:
            yield self.draw()


def make_stream(spec: DistributionSpec, seed: int, stream_index: int) -> VariateStream:
    if not isinstance(spec, DistributionSpec):
        spec = DistributionSpec.from_dict(spec)
    return VariateStream(spec, seed, stream_index)


class StreamBank:
    """A set of streams sharing one block buffer, read by index.

    ``buffers[j]`` holds the current block of stream ``j`` and ``positions[j]``
    the next unread slot; the compiled kernel consumes these arrays directly
    and hands control back when a row runs dry.
    """

    def __init__(self, streams: list[VariateStream]):
        self.streams = streams
        size = streams[0].block_size if streams else BLOCK_SIZE
        if any(s.block_size != size for s in streams):
            raise ValueError("all streams in a bank must share a block size")
        self.block_size = size
        self.buffers = np.empty((len(streams), size))
        self.positions = np.zeros(len(streams), dtype=np.int64)
        for j, stream in enumerate(streams):
            self.buffers[j] = stream.next_block()

    def refill_exhausted(self) -> None:
        for j in np.flatnonzero(self.positions >= self.block_size):
            self.buffers[j] = self.streams[j].next_block()
            self.positions[j] = 0

    def draw(self, j: int) -> float:
        if self.positions[j] >= self.block_size:
            self.buffers[j] = self.streams[j].next_block()
            self.positions[j] = 0
        value = self.buffers[j, self.positions[j]]
        self.positions[j] += 1
        return float(value)


def derive_seed(master: int, replication: int) -> int:
    """Seed of replication ``replication`` under master seed ``master``."""
    state = np.random.SeedSequence([int(master) & 0xFFFF_FFFF_FFFF_FFFF, int(replication)]).generate_state(1, np.uint64)
    return int(state[0])
