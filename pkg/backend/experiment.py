"""
backend/experiment.py
Parameter sweeps over the (CCR-Buffer, Shipping-Buffer) grid.

Functions here are framework-agnostic and are called by:
  • the CLI            (cli/run_dbr.py)
  • the HTTP surface   (backend/main.py)
  • unit tests

Public entry-points:
  run_sweep(plan)                      ->  SweepResult (one method, all plan environments)
  find_optimum(iterations)             ->  Optimum  (fully evaluated argmin)
  savings_deltas(ff_totals, sbm_totals) ->  SavingsReport (delta1 / delta2 / delta3)
  replication_seed(master, env, C, S, r) ->  int   (common random numbers across methods)
"""
from __future__ import annotations

import concurrent.futures as _cf
import logging
import math
from dataclasses import dataclass, field, replace
from enum import Enum
from statistics import fmean
from typing import Callable, Iterable, Mapping

import numpy as np
import pandas as pd

from backend.errors import DbrError, EmptyResultError, ParameterError, SweepError
from backend.model import DEFAULT_MODEL, Environment, ModelConstants, PlanningParameters
from backend.services.costing import DEFAULT_RATES, CostRates
from backend.services.flowshop import SimulationResult, run_replication
from backend.services.sbm import (
    BudgetState,
    SbmSettings,
    finish_iteration,
    preset,
    should_skip,
)

log = logging.getLogger(__name__)

BASE_SHOP_LOADS: tuple[float, ...] = (0.85, 0.90, 0.95)
BASE_CV_PPTS:    tuple[float, ...] = (0.3, 0.6, 0.9)


class Method(str, Enum):
    FF = "FF"      # full factorial enumeration, no skipping
    S1 = "S1"
    S2 = "S2"
    S3 = "S3"
    S4 = "S4"

    @classmethod
    def parse(cls, text: str) -> "Method":
        try:
            return cls(text.strip().upper())
        except ValueError:
            raise ParameterError(f"unknown method {text!r}; use one of {[m.value for m in cls]}") from None


def base_environments(model: ModelConstants = DEFAULT_MODEL,
                      shop_loads: Iterable[float] = BASE_SHOP_LOADS,
                      cv_ppts: Iterable[float] = BASE_CV_PPTS) -> tuple[Environment, ...]:
    """Shop load outer, CV PPT inner: the canonical environment order."""
    cvs = tuple(cv_ppts)
    return tuple(Environment.build(sl, cv, model) for sl in shop_loads for cv in cvs)


# ─────────────────────────────────────────────────────────────────────────────
#  Plan / results
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class ExperimentPlan:
    environments: tuple[Environment, ...]
    c_range:      tuple[int, ...]  = tuple(range(1, 13))
    s_range:      tuple[int, ...]  = tuple(range(1, 25))
    replications: int              = 20
    method:       Method           = Method.FF
    master_seed:  int              = 20240101
    horizon:      float            = 8760.0
    warmup:       float            = 760.0
    sbm:          SbmSettings | None = None     # None -> preset for `method`
    model:        ModelConstants   = DEFAULT_MODEL
    rates:        CostRates        = DEFAULT_RATES

    def __post_init__(self):
        if not self.environments:
            raise ParameterError("plan has no environments")
        for name in ("c_range", "s_range"):
            values = getattr(self, name)
            if not values or any(int(v) != v or v < 1 for v in values):
                raise ParameterError(f"{name} must be non-empty positive integers, got {values}")
        if self.replications < 1:
            raise ParameterError(f"replications must be >= 1, got {self.replications}")
        if not self.horizon > 0 or not (0 <= self.warmup <= self.horizon):
            raise ParameterError(f"need 0 <= warmup <= horizon and horizon > 0, "
                                 f"got warmup={self.warmup}, horizon={self.horizon}")
        if self.master_seed < 0:
            raise ParameterError(f"master_seed must be >= 0, got {self.master_seed}")

    @property
    def grid(self) -> list[tuple[int, int]]:
        """Canonical iteration order: ascending C, then ascending S."""
        return [(c, s) for c in sorted(self.c_range) for s in sorted(self.s_range)]

    def sbm_settings(self) -> SbmSettings | None:
        if self.method is Method.FF:
            return None
        if self.sbm is not None:
            return self.sbm
        return preset(self.method.value, replications_per_iteration=self.replications,
                      min_replications=min(3, self.replications))

    def with_method(self, method: Method, sbm: SbmSettings | None = None) -> "ExperimentPlan":
        return replace(self, method=method, sbm=sbm)


@dataclass(frozen=True)
class IterationResult:
    shop_load:         float
    cv_ppt:            float
    ccr_buffer:        int
    shipping_buffer:   int
    method:            Method
    seeds:             tuple[int, ...]
    costs:             tuple[float, ...]
    results:           tuple[SimulationResult | None, ...] = field(repr=False)
    skipped:           bool

    @property
    def replications_used(self) -> int:
        return len(self.costs)

    @property
    def mean_cost(self) -> float:
        return fmean(self.costs)

    @property
    def env_key(self) -> tuple[float, float]:
        return (self.shop_load, self.cv_ppt)


@dataclass(frozen=True)
class Optimum:
    ccr_buffer:      int
    shipping_buffer: int
    min_cost:        float


@dataclass
class SweepResult:
    method:     Method
    iterations: list[IterationResult]

    @property
    def total_replications(self) -> int:
        return sum(it.replications_used for it in self.iterations)

    def for_environment(self, shop_load: float, cv_ppt: float) -> list[IterationResult]:
        return [it for it in self.iterations if it.env_key == (shop_load, cv_ppt)]

    def environment_keys(self) -> list[tuple[float, float]]:
        return list(dict.fromkeys(it.env_key for it in self.iterations))

    def replications_by_environment(self) -> dict[tuple[float, float], int]:
        totals: dict[tuple[float, float], int] = {}
        for it in self.iterations:
            totals[it.env_key] = totals.get(it.env_key, 0) + it.replications_used
        return totals

    def replication_rows(self) -> list[dict]:
        rows = []
        for it in self.iterations:
            skipped_after = it.replications_used if it.skipped else 0
            for r, (seed, cost, res) in enumerate(zip(it.seeds, it.costs, it.results), start=1):
                rows.append({
                    "env_shop_load":     it.shop_load,
                    "env_cv_ppt":        it.cv_ppt,
                    "method":            it.method.value,
                    "C":                 it.ccr_buffer,
                    "S":                 it.shipping_buffer,
                    "replication_index": r,
                    "seed":              seed,
                    "cost_per_tu":       cost,
                    "avg_wip":           res.avg_wip if res is not None else math.nan,
                    "avg_fgi":           res.avg_fgi if res is not None else math.nan,
                    "avg_backorder":     res.avg_backorder if res is not None else math.nan,
                    "skipped_after":     skipped_after,
                })
        return rows

    def summary_rows(self) -> list[dict]:
        return [{
            "env_shop_load":     it.shop_load,
            "env_cv_ppt":        it.cv_ppt,
            "method":            it.method.value,
            "C":                 it.ccr_buffer,
            "S":                 it.shipping_buffer,
            "mean_cost":         it.mean_cost,
            "replications_used": it.replications_used,
            "skipped":           int(it.skipped),
        } for it in self.iterations]


# ─────────────────────────────────────────────────────────────────────────────
#  Seeds and evaluation
# ─────────────────────────────────────────────────────────────────────────────

def replication_seed(master_seed: int, env: Environment, ccr_buffer: int,
                     shipping_buffer: int, replication: int) -> int:
    """
    Pure seed function shared by every method (common random numbers).

    SeedSequence(entropy=master_seed, spawn_key=(1e4*load, 1e4*cv, C, S, r)),
    first two 32-bit words folded into one 64-bit seed.
    """
    key = (round(env.shop_load * 10_000), round(env.cv_ppt * 10_000),
           int(ccr_buffer), int(shipping_buffer), int(replication))
    lo, hi = np.random.SeedSequence(entropy=master_seed, spawn_key=key).generate_state(2, dtype=np.uint32)
    return (int(hi) << 32) | int(lo)


Evaluator = Callable[[Environment, PlanningParameters, int], "SimulationResult | float"]


def simulation_evaluator(plan: ExperimentPlan) -> Evaluator:
    def evaluate(env: Environment, params: PlanningParameters, seed: int) -> SimulationResult:
        return run_replication(env, params, seed, plan.horizon, plan.warmup, plan.model, plan.rates)
    return evaluate


def _cost_of(outcome) -> tuple[float, SimulationResult | None]:
    if isinstance(outcome, SimulationResult):
        return outcome.overall_cost_per_tu, outcome
    return float(outcome), None


# ─────────────────────────────────────────────────────────────────────────────
#  Sweeps
# ─────────────────────────────────────────────────────────────────────────────

def run_environment(plan: ExperimentPlan, env: Environment,
                    evaluate: Evaluator | None = None,
                    on_iteration: Callable[[IterationResult], None] | None = None
                    ) -> list[IterationResult]:
    """All grid iterations of one environment; SBM history is per environment."""
    evaluate = evaluate or simulation_evaluator(plan)
    settings = plan.sbm_settings()
    state = BudgetState.initial(settings) if settings else None
    out: list[IterationResult] = []

    for j, (c, s) in enumerate(plan.grid, start=1):
        params = PlanningParameters(ccr_buffer=c, shipping_buffer=s)
        seeds, costs, results = [], [], []
        skipped = False
        for r in range(1, plan.replications + 1):
            seed = replication_seed(plan.master_seed, env, c, s, r)
            try:
                cost, res = _cost_of(evaluate(env, params, seed))
            except (DbrError, OSError, ArithmeticError) as exc:
                raise SweepError(f"replication failed: {exc}", shop_load=env.shop_load,
                                 cv_ppt=env.cv_ppt, ccr_buffer=c, shipping_buffer=s,
                                 replication=r) from exc
            seeds.append(seed)
            costs.append(cost)
            results.append(res)
            if (state is not None and r < plan.replications
                    and should_skip(state, settings, j, r, fmean(costs))):
                skipped = True
                break

        it = IterationResult(shop_load=env.shop_load, cv_ppt=env.cv_ppt,
                             ccr_buffer=c, shipping_buffer=s, method=plan.method,
                             seeds=tuple(seeds), costs=tuple(costs),
                             results=tuple(results), skipped=skipped)
        if state is not None:
            state = finish_iteration(state, settings, it.mean_cost, skipped, it.replications_used)
        out.append(it)
        if on_iteration is not None:
            on_iteration(it)

    used = sum(it.replications_used for it in out)
    log.info("[sweep] %s env=%s: %d iterations, %d replications",
             plan.method.value, env.label, len(out), used)
    return out


def _environment_job(plan: ExperimentPlan, env: Environment) -> list[IterationResult]:
    return run_environment(plan, env)


def run_sweep(plan: ExperimentPlan, evaluator: Evaluator | None = None,
              on_iteration: Callable[[IterationResult], None] | None = None,
              parallel: bool = False, max_workers: int | None = None) -> SweepResult:
    """
    Sweep every environment of *plan* with its method.

    parallel=True runs environments in worker processes; SBM histories are
    per environment, so the merged tables equal the sequential ones.
    """
    if not parallel or len(plan.environments) == 1:
        iterations: list[IterationResult] = []
        for env in plan.environments:
            iterations.extend(run_environment(plan, env, evaluator, on_iteration))
        return SweepResult(plan.method, iterations)

    if evaluator is not None:
        raise ParameterError("parallel sweeps only support the built-in simulation evaluator")

    with _cf.ProcessPoolExecutor(max_workers=max_workers) as pool:
        per_env = list(pool.map(_environment_job, [plan] * len(plan.environments),
                                plan.environments))
    iterations = [it for chunk in per_env for it in chunk]
    if on_iteration is not None:
        for it in iterations:
            on_iteration(it)
    return SweepResult(plan.method, iterations)


# ─────────────────────────────────────────────────────────────────────────────
#  Optimum selection
# ─────────────────────────────────────────────────────────────────────────────

def find_optimum(iterations: Iterable[IterationResult]) -> Optimum:
    """Fully evaluated iteration with the minimal mean cost; ties by (C, S)."""
    complete = [it for it in iterations if not it.skipped]
    if not complete:
        raise EmptyResultError("no fully evaluated iteration to choose an optimum from")
    best = min(complete, key=lambda it: (it.mean_cost, it.ccr_buffer, it.shipping_buffer))
    return Optimum(best.ccr_buffer, best.shipping_buffer, best.mean_cost)


def optima_table(sweeps: Iterable[SweepResult]) -> pd.DataFrame:
    """Per (method, environment): optimal C*, S*, min cost, replications used."""
    sweeps = list(sweeps)
    ff_optima: dict[tuple[float, float], Optimum] = {}
    for sw in sweeps:
        if sw.method is Method.FF:
            for key in sw.environment_keys():
                ff_optima[key] = find_optimum(sw.for_environment(*key))

    rows = []
    for sw in sweeps:
        totals = sw.replications_by_environment()
        for key in sw.environment_keys():
            opt = find_optimum(sw.for_environment(*key))
            ff = ff_optima.get(key)
            rows.append({
                "env_shop_load":      key[0],
                "env_cv_ppt":         key[1],
                "method":             sw.method.value,
                "C_opt":              opt.ccr_buffer,
                "S_opt":              opt.shipping_buffer,
                "min_cost":           opt.min_cost,
                "replications_used":  totals[key],
                "same_optimum_as_ff": (None if ff is None else
                                       int((ff.ccr_buffer, ff.shipping_buffer) ==
                                           (opt.ccr_buffer, opt.shipping_buffer))),
            })
    return pd.DataFrame(rows)


# ─────────────────────────────────────────────────────────────────────────────
#  Replication savings
# ─────────────────────────────────────────────────────────────────────────────

def delta1(ff_total: int, sbm_total: int) -> float:
    """Relative replication difference (sbm - ff) / ff; negative means savings."""
    if ff_total <= 0 or sbm_total < 0:
        raise ParameterError(f"replication totals must be positive, got ff={ff_total}, sbm={sbm_total}")
    return (sbm_total - ff_total) / ff_total


@dataclass
class SavingsReport:
    ff_totals:  dict[tuple[float, float], int]
    sbm_totals: dict[tuple[str, tuple[float, float]], int]
    delta1:     dict[tuple[str, tuple[float, float]], float]
    delta2:     dict[tuple[float, float], float]           # mean over settings, per env
    delta3:     dict[tuple[str, float], float]             # mean over CV PPT, per setting and load

    @property
    def settings(self) -> list[str]:
        return sorted({m for m, _ in self.sbm_totals})

    def table(self) -> pd.DataFrame:
        """Layout of the replication-savings table: one block per shop load."""
        settings = self.settings
        loads = sorted({sl for sl, _ in self.ff_totals})
        rows = []
        for sl in loads:
            for key in sorted(k for k in self.ff_totals if k[0] == sl):
                row = {"row": "env", "shop_load": sl, "cv_ppt": key[1],
                       "no_sbm": self.ff_totals[key]}
                for m in settings:
                    row[m] = self.sbm_totals.get((m, key))
                    row[f"{m}_delta1"] = self.delta1.get((m, key))
                row["avg_delta2"] = self.delta2.get(key)
                rows.append(row)
            avg = {"row": "avg_delta3", "shop_load": sl, "cv_ppt": None, "no_sbm": None}
            for m in settings:
                avg[m] = None
                avg[f"{m}_delta1"] = self.delta3.get((m, sl))
            avg["avg_delta2"] = None
            rows.append(avg)
        return pd.DataFrame(rows)


def savings_deltas(ff_totals: Mapping[tuple[float, float], int] | int,
                   sbm_totals: Mapping[tuple[str, tuple[float, float]], int]) -> SavingsReport:
    """
    delta1 per (setting, env); delta2 = mean delta1 over settings at one env;
    delta3 = mean delta1 over CV PPT levels at one (setting, shop load).

    A plain int for *ff_totals* applies the same full-factorial total to every env.
    """
    envs = sorted({key for _, key in sbm_totals})
    if isinstance(ff_totals, int):
        ff = {key: ff_totals for key in envs}
    else:
        ff = dict(ff_totals)

    d1: dict[tuple[str, tuple[float, float]], float] = {}
    for (m, key), total in sbm_totals.items():
        if key not in ff:
            raise ParameterError(f"no full-factorial total for environment {key}")
        d1[(m, key)] = delta1(ff[key], total)

    d2: dict[tuple[float, float], float] = {}
    for key in envs:
        vals = [v for (m, k), v in d1.items() if k == key]
        d2[key] = fmean(vals)

    d3: dict[tuple[str, float], float] = {}
    for m, sl in sorted({(m, k[0]) for m, k in d1}):
        vals = [v for (mm, k), v in d1.items() if mm == m and k[0] == sl]
        d3[(m, sl)] = fmean(vals)

    return SavingsReport(ff_totals=ff, sbm_totals=dict(sbm_totals), delta1=d1, delta2=d2, delta3=d3)


def savings_from_sweeps(sweeps: Iterable[SweepResult]) -> SavingsReport | None:
    """SavingsReport from one FF sweep plus any SBM sweeps; None without both."""
    sweeps = list(sweeps)
    ff = next((sw for sw in sweeps if sw.method is Method.FF), None)
    sbm = [sw for sw in sweeps if sw.method is not Method.FF]
    if ff is None or not sbm:
        return None
    sbm_totals = {(sw.method.value, key): total
                  for sw in sbm for key, total in sw.replications_by_environment().items()}
    return savings_deltas(ff.replications_by_environment(), sbm_totals)
