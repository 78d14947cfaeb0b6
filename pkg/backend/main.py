"""
backend/main.py
FastAPI "Brain" — serves the flow-shop engine to any other program.

Endpoints
---------
GET  /api/environments      Configured environments + derived mean inter-arrival times
POST /api/simulate          One replication -> SimulationResult
POST /api/sweep             Small synchronous (C, S) sweep for one environment
GET  /api/sbm-presets       S1..S4 percentile bounds
"""

import logging
import math
import os
import sys
from dataclasses import asdict
from functools import lru_cache

sys.path.insert(0, os.path.join(os.path.dirname(__file__), ".."))

from contextlib import asynccontextmanager
from fastapi import FastAPI, HTTPException
from fastapi.middleware.cors import CORSMiddleware
from pydantic import BaseModel, Field

from backend.config import RunConfig, load_config
from backend.errors import ConfigError, DbrError, EmptyResultError, ParameterError
from backend.experiment import ExperimentPlan, Method, find_optimum, run_sweep
from backend.model import Environment, PlanningParameters
from backend.services.flowshop import run_replication
from backend.services.sbm import SBM_PRESETS

log = logging.getLogger(__name__)

MAX_SWEEP_REPLICATIONS = 400


# ─────────────────────────────────────────────────────────────────────────────
#  App setup
# ─────────────────────────────────────────────────────────────────────────────

@asynccontextmanager
async def lifespan(_app: FastAPI):
    yield


app = FastAPI(
    title="dbr-sbm API",
    description=(
        "Drum-Buffer-Rope flow-shop simulator. Single replications and small "
        "CCR-/Shipping-Buffer sweeps with optional Simulation Budget Management."
    ),
    version="0.1.0",
    lifespan=lifespan,
)

app.add_middleware(
    CORSMiddleware,
    allow_origins=["http://localhost:5173", "http://localhost:3000"],
    allow_credentials=True,
    allow_methods=["*"],
    allow_headers=["*"],
)


@lru_cache(maxsize=1)
def get_config() -> RunConfig:
    return load_config(os.environ.get("DBR_CONFIG") or None)


# ─────────────────────────────────────────────────────────────────────────────
#  Helpers
# ─────────────────────────────────────────────────────────────────────────────

def _strip_nan(v):
    """Replace float NaN/Inf with None so JSON serialisation never chokes."""
    if isinstance(v, float) and not math.isfinite(v):
        return None
    return v


def _raise_http(exc: Exception, what: str):
    if isinstance(exc, (ParameterError, ConfigError)):
        raise HTTPException(status_code=422, detail=f"{what}: {exc}")
    if isinstance(exc, EmptyResultError):
        raise HTTPException(status_code=404, detail=f"{what}: {exc}")
    log.exception("[api] %s failed", what)
    raise HTTPException(status_code=500, detail=f"{what} failed: {exc}")


# ─────────────────────────────────────────────────────────────────────────────
#  Request bodies
# ─────────────────────────────────────────────────────────────────────────────

class SimulateBody(BaseModel):
    shop_load:       float
    cv_ppt:          float
    ccr_buffer:      float = 6.0
    shipping_buffer: float = 7.0
    seed:            int   = Field(1, ge=0)
    horizon:         float | None = None
    warmup:          float | None = None


class SweepBody(BaseModel):
    shop_load:    float
    cv_ppt:       float
    method:       Method = Method.FF
    c_max:        int    = Field(4, ge=1)
    s_max:        int    = Field(4, ge=1)
    replications: int    = Field(5, ge=1)
    horizon:      float  = 1000.0
    warmup:       float  = 100.0
    master_seed:  int    = Field(1, ge=0)


# ─────────────────────────────────────────────────────────────────────────────
#  Endpoints
# ─────────────────────────────────────────────────────────────────────────────

@app.get("/api/environments", summary="Configured environments", tags=["Meta"])
def environments():
    try:
        envs = get_config().environments()
    except DbrError as exc:
        _raise_http(exc, "Environment setup")
    return [{"label": e.label, "shop_load": e.shop_load, "cv_ppt": e.cv_ppt,
             "mean_interarrival": e.mean_interarrival} for e in envs]


@app.get("/api/sbm-presets", summary="SBM percentile bounds", tags=["Meta"])
def sbm_presets():
    return {name: {"lb": lb, "ub": ub} for name, (lb, ub) in SBM_PRESETS.items()}


@app.post("/api/simulate", summary="Run one seeded replication", tags=["Simulation"])
def simulate(body: SimulateBody):
    cfg = get_config()
    horizon = body.horizon if body.horizon is not None else cfg.experiment.horizon
    warmup  = body.warmup if body.warmup is not None else min(cfg.experiment.warmup, horizon)
    try:
        model  = cfg.model_constants()
        env    = Environment.build(body.shop_load, body.cv_ppt, model)
        params = PlanningParameters(body.ccr_buffer, body.shipping_buffer)
        result = run_replication(env, params, body.seed, horizon, warmup, model, cfg.cost_rates())
    except DbrError as exc:
        _raise_http(exc, "Simulation")

    payload = {k: _strip_nan(v) for k, v in asdict(result).items() if k != "runtime_seconds"}
    payload["environment"]    = env.label
    payload["cost_breakdown"] = result.cost_breakdown(cfg.cost_rates())
    return payload


@app.post("/api/sweep", summary="Small synchronous parameter sweep", tags=["Simulation"])
def sweep(body: SweepBody):
    budget = body.c_max * body.s_max * body.replications
    if budget > MAX_SWEEP_REPLICATIONS:
        raise HTTPException(
            status_code=422,
            detail=f"Sweep needs {budget} replications; the synchronous limit is "
                   f"{MAX_SWEEP_REPLICATIONS}. Use the CLI for larger designs.",
        )
    cfg = get_config()
    try:
        model = cfg.model_constants()
        plan = ExperimentPlan(
            environments = (Environment.build(body.shop_load, body.cv_ppt, model),),
            c_range      = tuple(range(1, body.c_max + 1)),
            s_range      = tuple(range(1, body.s_max + 1)),
            replications = body.replications,
            method       = body.method,
            master_seed  = body.master_seed,
            horizon      = body.horizon,
            warmup       = body.warmup,
            sbm          = cfg.sbm.settings_for(body.method, body.replications),
            model        = model,
            rates        = cfg.cost_rates(),
        )
        result  = run_sweep(plan)
        optimum = find_optimum(result.iterations)
    except DbrError as exc:
        _raise_http(exc, "Sweep")

    log.info("[api] sweep %s env=%s: %d replications", body.method.value,
             plan.environments[0].label, result.total_replications)
    return {
        "method":             body.method.value,
        "environment":        plan.environments[0].label,
        "total_replications": result.total_replications,
        "optimum": {
            "ccr_buffer":      optimum.ccr_buffer,
            "shipping_buffer": optimum.shipping_buffer,
            "min_cost":        optimum.min_cost,
        },
        "summary": result.summary_rows(),
    }
