"""Scenario files: TOML documents describing a cascade and what to do with it.

Example::

    name = "reference"
    model = "simulate"          # simulate | ctmc | stability | sweep
    horizon = 1e6
    reps = 20
    seed = 2023

    [[stations]]
    arrival = { family = "exponential", rate = 1.2 }
    service = { family = "exponential", rate = 1.0 }
    threshold = 1
    overflow_service = { family = "exponential", rate = 1.0 }

    [[stations]]
    arrival = { family = "exponential", rate = 0.5 }
    service = { family = "exponential", rate = 1.0 }
"""
from __future__ import annotations

import copy
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .model import ConfigError, Station, SystemConfig
from .variates import DistributionError, DistributionSpec

MODELS = ("simulate", "ctmc", "stability", "sweep")

DEFAULTS = {
    "reps": 1,
    "seed": 0,
    "warmup": 0.1,
    "out": "out",
    "bins": 640,
    "workers": 1,
    "event_cap": 2_000_000_000,
    "event_log": False,
}


class ScenarioError(ValueError):
    def __init__(self, errors):
        self.errors = [errors] if isinstance(errors, str) else list(errors)
        super().__init__("\n".join(self.errors))


@dataclass
class Sweep:
    path: str
    values: list


@dataclass
class Scenario:
    name: str
    model: str
    config: SystemConfig
    horizon: float
    reps: int
    seed: int
    warmup: float
    out: str
    bins: int
    workers: int
    event_cap: int
    event_log: bool
    raw: dict
    sweep: Optional[Sweep] = None
    truncation: int = 200
    ctmc_method: str = "direct"
    margin: float = 0.02
    induction_horizon: float = 1e5
    induction_reps: int = 10
    warnings: list = field(default_factory=list)

    @property
    def run_id(self) -> str:
        """Content hash of the effective scenario."""
        blob = json.dumps(self.raw, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]

    @property
    def output_dir(self) -> Path:
        return Path(self.out) / self.name / self.run_id


def _spec(record: Any, where: str, errors: list) -> Optional[DistributionSpec]:
    if not isinstance(record, dict):
        errors.append(f"{where}: expected a table with a 'family' key")
        return None
    try:
        return DistributionSpec.from_dict(record)
    except DistributionError as exc:
        errors.append(f"{where}.{exc.field}: {exc}")
        return None


def build_config(raw: dict, errors: list) -> Optional[SystemConfig]:
    stations_raw = raw.get("stations")
    if not isinstance(stations_raw, list) or not stations_raw:
        errors.append("stations: at least one [[stations]] table is required")
        return None
    k = len(stations_raw)
    stations = []
    for n, st in enumerate(stations_raw, start=1):
        where = f"stations[{n}]"
        arrival = _spec(st.get("arrival"), f"{where}.arrival", errors)
        service = _spec(st.get("service"), f"{where}.service", errors)
        threshold = st.get("threshold")
        overflow = None
        if n < k:
            if isinstance(threshold, bool) or not isinstance(threshold, int) or threshold < 1:
                errors.append(f"{where}.threshold: threshold must be >= 1 (got {threshold!r})")
            overflow = _spec(st.get("overflow_service"), f"{where}.overflow_service", errors)
        stations.append(Station(arrival, service, threshold if n < k else None, overflow))
    initial = raw.get("initial", {})
    if errors:
        return None
    try:
        return SystemConfig(tuple(stations), int(raw.get("seed", 0)), initial.get("queues"), initial.get("overflow"))
    except ConfigError as exc:
        errors.extend(exc.errors)
        return None


def _sweep_values(sweep: dict, errors: list) -> list:
    try:
        start, stop, step = float(sweep["start"]), float(sweep["stop"]), float(sweep["step"])
    except (KeyError, TypeError, ValueError) as exc:
        errors.append(f"sweep: need numeric start, stop and step ({exc})")
        return []
    if step <= 0 or stop < start:
        errors.append("sweep: need step > 0 and stop >= start")
        return []
    n = int(math.floor((stop - start) / step + 1e-9)) + 1
    return [round(start + j * step, 12) for j in range(n)]


def get_path(raw: dict, path: str) -> Any:
    node = raw
    for part in path.split("."):
        node = node[int(part)] if isinstance(node, list) else node[part]
    return node


def set_path(raw: dict, path: str, value: Any) -> dict:
    """Copy of ``raw`` with ``path`` (dotted, 0-based list indices) set to ``value``."""
    out = copy.deepcopy(raw)
    parts = path.split(".")
    node = out
    for part in parts[:-1]:
        node = node[int(part)] if isinstance(node, list) else node[part]
    leaf = parts[-1]
    if isinstance(node, list):
        node[int(leaf)] = value
        return out
    # rate and mean are aliases; keep exactly one
    if leaf == "rate":
        node.pop("mean", None)
    elif leaf == "mean":
        node.pop("rate", None)
    node[leaf] = value
    return out


def parse_scenario(raw: dict, source: str = "<scenario>") -> Scenario:
    errors: list = []
    merged = {**DEFAULTS, **raw}
    name = merged.get("name") or Path(source).stem
    model = merged.get("model")
    if model not in MODELS:
        errors.append(f"model: must be one of {MODELS} (got {model!r})")
    horizon = merged.get("horizon")
    if model in ("simulate", "sweep") and not (isinstance(horizon, (int, float)) and horizon > 0):
        errors.append(f"horizon: must be > 0 (got {horizon!r})")
    reps = merged["reps"]
    if not isinstance(reps, int) or reps < 1:
        errors.append(f"reps: replication count must be >= 1 (got {reps!r})")
    warmup = merged["warmup"]
    if not (isinstance(warmup, (int, float)) and 0 <= warmup < 1):
        errors.append(f"warmup: must lie in [0, 1) (got {warmup!r})")
    config = build_config(merged, errors)

    sweep = None
    if model == "sweep":
        sw = merged.get("sweep")
        if not isinstance(sw, dict) or "path" not in sw:
            errors.append("sweep: a [sweep] table with path, start, stop, step is required")
        else:
            try:
                get_path(merged, sw["path"])
            except (KeyError, IndexError, ValueError, TypeError):
                errors.append(f"sweep.path: {sw['path']!r} does not name an existing parameter")
            sweep = Sweep(sw["path"], _sweep_values(sw, errors))

    ctmc = merged.get("ctmc", {})
    stab = merged.get("stability", {})
    if errors:
        raise ScenarioError([f"{source}: {e}" for e in errors])
    return Scenario(
        name=str(name), model=model, config=config, horizon=float(horizon or 0.0), reps=reps,
        seed=int(merged["seed"]), warmup=float(warmup), out=str(merged["out"]), bins=int(merged["bins"]),
        workers=int(merged["workers"]), event_cap=int(merged["event_cap"]), event_log=bool(merged["event_log"]),
        raw=merged, sweep=sweep, truncation=int(ctmc.get("truncation", 200)),
        ctmc_method=str(ctmc.get("method", "direct")), margin=float(stab.get("margin", 0.02)),
        induction_horizon=float(stab.get("horizon", 1e5)), induction_reps=int(stab.get("reps", 10)),
        warnings=config.admissibility_warnings(),
    )


def load_scenario(path, overrides: Optional[dict] = None) -> Scenario:
    """Parse and validate a scenario file; ``overrides`` replace top-level keys."""
    path = Path(path)
    try:
        raw = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as exc:
        raise ScenarioError(f"{path}: parse error: {exc}") from None
    for key, value in (overrides or {}).items():
        if value is not None:
            raw[key] = value
    return parse_scenario(raw, str(path))
