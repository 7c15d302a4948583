"""Scenario execution and on-disk artifacts.

Outputs go to ``<out>/<name>/<run-id>/``. Everything except ``run.log`` is a
pure function of the effective scenario.
"""
from __future__ import annotations

import csv
import io
import json
import logging
import time
from pathlib import Path

import numpy as np

from . import metrics
from .metrics import detect_drift, station_row
from .oracles import ctmc_spec_from_config, oracle_rho_star, solve_cascade
from .scenario import Scenario, parse_scenario, set_path
from .simulate import EventLog, Simulation, replicate
from .stability import BOUNDARY, SimBudget, classify
from .variates import derive_seed

log = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_FAULT = 1
EXIT_BOUNDARY = 2

METRIC_COLUMNS = ["replication", "station", "rho_star", "ci", "idle", "drift", "little_residual",
                  "overflow_slack", "tight_l0"]
SWEEP_COLUMNS = ["value", "rho_tilde_1", "verdict", "drift_mean", "drift_se", "drifting", "rho_star_1",
                 "overflow_rate", "overflow_bound", "overflow_ok", "truncated"]


def _cell(x) -> str:
    if x is None:
        return ""
    if isinstance(x, (bool, np.bool_)):
        return str(bool(x)).lower()
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def _write_csv(path: Path, columns: list, rows: list) -> None:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    for row in rows:
        w.writerow([_cell(row.get(c)) for c in columns])
    path.write_text(buf.getvalue())


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not serializable: {type(o)}")


def metric_rows(records, warmup: float) -> list:
    """Per (replication, station) rows followed by one mean row per station."""
    rows = []
    for r, rec in enumerate(records):
        for i in range(1, rec.k + 1):
            rows.append({"replication": r, "station": i, **station_row(rec, i, warmup)})
    k = records[0].k
    for i in range(1, k + 1):
        agg = {"replication": "mean", "station": i}
        for col in METRIC_COLUMNS[2:]:
            vals = [row[col] for row in rows[:len(records) * k] if row["station"] == i and row[col] is not None]
            agg[col] = float(np.mean(vals)) if vals else None
        rows.append(agg)
    return rows


def _simulate(sc: Scenario, outdir: Path) -> int:
    records = replicate(sc.config, sc.horizon, sc.reps, workers=sc.workers, bins=sc.bins,
                        event_cap=sc.event_cap)
    _write_csv(outdir / "metrics.csv", METRIC_COLUMNS, metric_rows(records, sc.warmup))
    report = {
        "scenario": sc.raw,
        "warnings": sc.warnings,
        "replications": [dict(rec.summary(), **metrics.path_rates(rec)) for rec in records],
    }
    code = EXIT_OK
    if sc.config.k <= 2:
        verdict = classify(sc.config)
        report["stability"] = verdict.to_dict()
        if verdict.classification == BOUNDARY:
            code = EXIT_BOUNDARY
    if sc.reps >= 2:
        report["drift_station_1"] = detect_drift(records, 1).__dict__
    if sc.event_log:
        # replication 0 again, through the stepper so every event is observed
        sim = Simulation(sc.config.with_seed(derive_seed(sc.config.seed, 0)), sc.horizon, bins=sc.bins,
                         event_cap=sc.event_cap)
        with open(outdir / "events.csv", "w") as fh:
            sim.advance(sc.horizon, [EventLog(fh, sc.config.k)])
    _write_json(outdir / "report.json", report)
    if any(rec.truncated for rec in records):
        log.error("event cap reached; results are partial")
        return EXIT_FAULT
    return code


def _ctmc(sc: Scenario, outdir: Path) -> int:
    spec = ctmc_spec_from_config(sc.config, sc.truncation)
    table = solve_cascade(spec, sc.ctmc_method)
    m1, m2 = table.marginal(1), table.marginal(2)
    rows = [{"n": n, "p_q1": float(m1[n]), "p_q2": float(m2[n])} for n in range(len(m1))]
    _write_csv(outdir / "marginals.csv", ["n", "p_q1", "p_q2"], rows)
    summary = {
        "rho_star_1": oracle_rho_star(table, 1),
        "p_q1_0": float(m1[0]),
        "p_q2_0": float(m2[0]),
        "overflow_occupancy": table.overflow_occupancy,
        "truncation_mass": table.truncation_mass,
        "truncation": spec.truncation,
    }
    _write_csv(outdir / "summary.csv", list(summary), [summary])
    return EXIT_OK


def _budget(sc: Scenario) -> SimBudget:
    return SimBudget(sc.induction_horizon, sc.induction_reps, sc.warmup, sc.workers)


def _stability(sc: Scenario, outdir: Path) -> int:
    verdict = classify(sc.config, _budget(sc) if sc.config.k >= 3 else None, sc.margin)
    _write_json(outdir / "verdict.json", verdict.to_dict())
    (outdir / "verdict.txt").write_text(verdict.table() + "\n")
    print(verdict.table())
    return EXIT_BOUNDARY if verdict.classification == BOUNDARY else EXIT_OK


def _sweep(sc: Scenario, outdir: Path) -> int:
    rows, detail = [], []
    truncated = False
    for value in sc.sweep.values:
        point = parse_scenario(set_path(sc.raw, sc.sweep.path, value), sc.name)
        cfg = point.config
        verdict = classify(cfg, _budget(sc) if cfg.k >= 3 else None, sc.margin)
        records = replicate(cfg, sc.horizon, sc.reps, workers=sc.workers, bins=sc.bins, event_cap=sc.event_cap)
        truncated |= any(r.truncated for r in records)
        drift = detect_drift(records, 1) if sc.reps >= 2 else None
        rho1 = float(np.mean([metrics.effective_traffic_intensity(r, 1, sc.warmup).value for r in records]))
        row = {"value": value, "rho_tilde_1": verdict.stations[0].rho_tilde, "verdict": verdict.classification,
               "drift_mean": float(np.mean([metrics.drift_estimate(r, 1) for r in records])),
               "drift_se": drift.std_error if drift else None, "drifting": drift.drifting if drift else None,
               "rho_star_1": rho1, "truncated": any(r.truncated for r in records)}
        if cfg.k >= 2:
            checks = [metrics.overflow_bound_check(r, 1, sc.warmup) for r in records]
            row.update(overflow_rate=float(np.mean([c.rate for c in checks])),
                       overflow_bound=float(np.mean([c.bound for c in checks])),
                       overflow_ok=all(c.passed for c in checks))
        rows.append(row)
        for r_row in metric_rows(records, sc.warmup):
            detail.append({"value": value, **r_row})
    _write_csv(outdir / "sweep.csv", SWEEP_COLUMNS, rows)
    _write_csv(outdir / "sweep_metrics.csv", ["value"] + METRIC_COLUMNS, detail)
    return EXIT_FAULT if truncated else EXIT_OK


_RUNNERS = {"simulate": _simulate, "ctmc": _ctmc, "stability": _stability, "sweep": _sweep}


def run_experiment(sc: Scenario) -> tuple[int, Path]:
    """Execute ``sc``; returns the exit code and the run directory."""
    outdir = sc.output_dir
    outdir.mkdir(parents=True, exist_ok=True)
    _write_json(outdir / "scenario.json", sc.raw)
    handler = logging.FileHandler(outdir / "run.log", mode="w")
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(name)s: %(message)s"))
    root = logging.getLogger("cascade")
    root.addHandler(handler)
    root.setLevel(logging.INFO)
    try:
        for w in sc.warnings:
            log.warning(w)
        started = time.time()
        log.info("run %s: model=%s", sc.run_id, sc.model)
        code = _RUNNERS[sc.model](sc, outdir)
        log.info("finished with exit code %d in %.1fs", code, time.time() - started)
        return code, outdir
    except Exception:
        log.exception("run failed")
        raise
    finally:
        root.removeHandler(handler)
        handler.close()
