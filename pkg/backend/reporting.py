"""
backend/reporting.py
Persistence of experiment tables.

Files written under the output directory:
  results.csv          one row per replication
  summary.csv          one row per iteration
  optima.csv           optimum (C*, S*) and min cost per method / environment
  savings.csv          delta1 / delta2 / delta3 table (needs FF plus >= 1 SBM setting)
  RESUME.json          only after an interrupted sweep
  schedule_trace.csv   simulate --trace
  event_trace.csv      simulate --trace
"""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Iterable

import pandas as pd

from backend.experiment import (
    IterationResult,
    SweepResult,
    optima_table,
    savings_from_sweeps,
)
from backend.services.flowshop import FlowShopSimulation

log = logging.getLogger(__name__)

RESULTS_COLUMNS = ["env_shop_load", "env_cv_ppt", "method", "C", "S", "replication_index",
                   "seed", "cost_per_tu", "avg_wip", "avg_fgi", "avg_backorder", "skipped_after"]
SUMMARY_COLUMNS = ["env_shop_load", "env_cv_ppt", "method", "C", "S", "mean_cost",
                   "replications_used", "skipped"]
SCHEDULE_TRACE_COLUMNS = ["event_time", "event_type", "order_id", "a", "s", "e"]
EVENT_TRACE_COLUMNS    = ["time", "event", "station", "order"]

RESUME_MARKER = "RESUME.json"


def _out(out_dir: str | os.PathLike) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


def results_frame(sweeps: Iterable[SweepResult]) -> pd.DataFrame:
    rows = [row for sw in sweeps for row in sw.replication_rows()]
    return pd.DataFrame(rows, columns=RESULTS_COLUMNS)


def summary_frame(sweeps: Iterable[SweepResult]) -> pd.DataFrame:
    rows = [row for sw in sweeps for row in sw.summary_rows()]
    return pd.DataFrame(rows, columns=SUMMARY_COLUMNS)


def write_sweep_tables(sweeps: list[SweepResult], out_dir: str | os.PathLike) -> dict[str, Path]:
    """results / summary always; optima when every sweep has a complete iteration; savings when possible."""
    out = _out(out_dir)
    written: dict[str, Path] = {}

    written["results"] = out / "results.csv"
    results_frame(sweeps).to_csv(written["results"], index=False)
    written["summary"] = out / "summary.csv"
    summary_frame(sweeps).to_csv(written["summary"], index=False)

    if sweeps and all(any(not it.skipped for it in sw.iterations) for sw in sweeps):
        written["optima"] = out / "optima.csv"
        optima_table(sweeps).to_csv(written["optima"], index=False)

    report = savings_from_sweeps(sweeps)
    if report is not None:
        written["savings"] = out / "savings.csv"
        report.table().to_csv(written["savings"], index=False)

    log.info("[report] wrote %s to %s", ", ".join(sorted(written)), out)
    return written


def write_partial(collected: dict, out_dir: str | os.PathLike,
                  interrupted_at: dict | None = None) -> Path:
    """
    Flush iterations gathered so far and drop a resume marker.

    *collected* maps Method -> list[IterationResult] in completion order.
    """
    sweeps = [SweepResult(method, list(its)) for method, its in collected.items() if its]
    out = _out(out_dir)
    results_frame(sweeps).to_csv(out / "results.csv", index=False)
    summary_frame(sweeps).to_csv(out / "summary.csv", index=False)

    completed = {m.value: len(its) for m, its in collected.items()}
    last: dict[str, dict] = {}
    for m, its in collected.items():
        if its:
            it: IterationResult = its[-1]
            last[m.value] = {"env_shop_load": it.shop_load, "env_cv_ppt": it.cv_ppt,
                             "C": it.ccr_buffer, "S": it.shipping_buffer}
    marker = out / RESUME_MARKER
    marker.write_text(json.dumps({
        "status":               "interrupted",
        "iterations_completed": completed,
        "last_completed":       last,
        "interrupted_at":       interrupted_at or {},
    }, indent=2, sort_keys=True) + "\n", encoding="utf-8")
    log.warning("[report] partial results flushed to %s", out)
    return marker


def write_traces(sim: FlowShopSimulation, out_dir: str | os.PathLike) -> dict[str, Path]:
    out = _out(out_dir)
    written = {
        "schedule_trace": out / "schedule_trace.csv",
        "event_trace":    out / "event_trace.csv",
    }
    pd.DataFrame(sim.schedule.trace_rows or [], columns=SCHEDULE_TRACE_COLUMNS) \
        .to_csv(written["schedule_trace"], index=False)
    pd.DataFrame(sim.event_trace or [], columns=EVENT_TRACE_COLUMNS) \
        .to_csv(written["event_trace"], index=False)
    return written
