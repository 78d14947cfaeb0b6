"""
backend/config.py
RunConfig: the structured run configuration shared by the CLI and the API.

Resolution order (later wins):
  1. defaults (the base study values)
  2. JSON file (--config)
  3. DBR_OUTPUT_DIR / DBR_LOG_LEVEL / DBR_MASTER_SEED  (env, then .env)
  4. CLI flags  (applied by the caller through RunConfig.with_overrides)

Public entry-points:
  load_config(path=None, use_env=True)  ->  RunConfig
  RunConfig.plan_for(method)            ->  ExperimentPlan
  write_effective_config(cfg, out_dir)  ->  path of effective_config.json
"""
from __future__ import annotations

import json
import logging
import os
from pathlib import Path
from typing import Any, Literal

from pydantic import (
    BaseModel,
    ConfigDict,
    Field,
    PrivateAttr,
    ValidationError,
    field_validator,
    model_validator,
)

from backend.errors import ConfigError, DbrError
from backend.experiment import ExperimentPlan, Method, base_environments
from backend.model import (
    RNG_IDENTITY,
    ComponentId,
    Environment,
    ModelConstants,
    Product,
    ProductId,
)
from backend.services._env_loader import (
    ENV_LOG_LEVEL,
    ENV_MASTER_SEED,
    ENV_OUTPUT_DIR,
    load_overrides,
)
from backend.services.costing import CostRates
from backend.services.sbm import SBM_PRESETS, SbmSettings

log = logging.getLogger(__name__)

LogLevel = Literal["DEBUG", "INFO", "WARNING", "ERROR"]


class _Section(BaseModel):
    model_config = ConfigDict(extra="forbid")


# ─────────────────────────────────────────────────────────────────────────────
#  Sections
# ─────────────────────────────────────────────────────────────────────────────

class ProductSettings(_Section):
    id:        ProductId
    component: ComponentId
    w4_mean:   float
    w5_mean:   float


def _default_products() -> list[ProductSettings]:
    return [
        ProductSettings(id=ProductId.P1, component=ComponentId.C1, w4_mean=0.70, w5_mean=0.60),
        ProductSettings(id=ProductId.P2, component=ComponentId.C1, w4_mean=0.70, w5_mean=0.65),
        ProductSettings(id=ProductId.P3, component=ComponentId.C2, w4_mean=0.75, w5_mean=0.70),
    ]


class ModelSettings(_Section):
    products:          list[ProductSettings] = Field(default_factory=_default_products)
    upstream_mean:     float     = 0.65
    station_cv:        float     = 0.3
    arrival_cv:        float     = 0.3
    due_date_fixed:    float     = 6.0
    due_date_exp_mean: float     = 16.0
    lot_sizes:         list[int] = Field(default_factory=lambda: [1, 2])

    def to_constants(self) -> ModelConstants:
        return ModelConstants(
            products          = tuple(Product(p.id, p.component, p.w4_mean, p.w5_mean)
                                      for p in self.products),
            upstream_mean     = self.upstream_mean,
            station_cv        = self.station_cv,
            arrival_cv        = self.arrival_cv,
            due_date_fixed    = self.due_date_fixed,
            due_date_exp_mean = self.due_date_exp_mean,
            lot_sizes         = tuple(self.lot_sizes),
        )


class CostSettings(_Section):
    wip_rate:       float = 0.5
    fgi_rate:       float = 1.0
    tardiness_rate: float = 19.0

    def to_rates(self) -> CostRates:
        return CostRates(self.wip_rate, self.fgi_rate, self.tardiness_rate)


class SbmConfig(_Section):
    percentile_step:  float = 0.01
    init_iterations:  int   = 5
    min_replications: int   = 3
    presets: dict[str, tuple[float, float]] = Field(default_factory=lambda: dict(SBM_PRESETS))

    def settings_for(self, method: Method, replications: int) -> SbmSettings | None:
        if method is Method.FF:
            return None
        if method.value not in self.presets:
            raise ConfigError(f"no SBM bounds configured for {method.value}")
        lb, ub = self.presets[method.value]
        return SbmSettings(lb=lb, ub=ub,
                           percentile_step            = self.percentile_step,
                           init_iterations            = self.init_iterations,
                           replications_per_iteration = replications,
                           min_replications           = min(self.min_replications, replications),
                           name                       = method.value)


class ExperimentSettings(_Section):
    shop_loads:   list[float]  = Field(default_factory=lambda: [0.85, 0.90, 0.95])
    cv_ppts:      list[float]  = Field(default_factory=lambda: [0.3, 0.6, 0.9])
    c_min:        int          = 1
    c_max:        int          = 12
    s_min:        int          = 1
    s_max:        int          = 24
    replications: int          = 20
    horizon:      float        = 8760.0
    warmup:       float        = 760.0
    master_seed:  int          = 20240101
    methods:      list[Method] = Field(default_factory=lambda: [Method.FF])

    @field_validator("methods", mode="before")
    @classmethod
    def _split_methods(cls, v: Any) -> Any:
        if isinstance(v, str):
            return [m.strip().upper() for m in v.split(",") if m.strip()]
        return v

    @model_validator(mode="after")
    def _check_ranges(self) -> "ExperimentSettings":
        if not (1 <= self.c_min <= self.c_max) or not (1 <= self.s_min <= self.s_max):
            raise ValueError("grid bounds need 1 <= min <= max for both C and S")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not (0 <= self.warmup <= self.horizon) or self.horizon <= 0:
            raise ValueError("need 0 <= warmup <= horizon and horizon > 0")
        if self.master_seed < 0:
            raise ValueError("master_seed must be >= 0")
        if not self.methods:
            raise ValueError("at least one method is required")
        return self


# ─────────────────────────────────────────────────────────────────────────────
#  RunConfig
# ─────────────────────────────────────────────────────────────────────────────

class RunConfig(_Section):
    experiment: ExperimentSettings = Field(default_factory=ExperimentSettings)
    sbm:        SbmConfig          = Field(default_factory=SbmConfig)
    costs:      CostSettings       = Field(default_factory=CostSettings)
    model:      ModelSettings      = Field(default_factory=ModelSettings)
    output_dir: str                = "results"
    verbosity:  LogLevel           = "WARNING"
    mode:       Literal["reproducible", "parallel"] = "reproducible"

    _env_overrides: dict[str, str] = PrivateAttr(default_factory=dict)

    @field_validator("verbosity", mode="before")
    @classmethod
    def _upper_level(cls, v: Any) -> Any:
        return v.upper() if isinstance(v, str) else v

    def with_overrides(self, **changes: Any) -> "RunConfig":
        """
        Apply flat overrides; keys are RunConfig fields or experiment fields.
        None values are ignored so argparse namespaces can be passed as-is.
        """
        top, exp = {}, {}
        for key, val in changes.items():
            if val is None:
                continue
            if key in ExperimentSettings.model_fields:
                exp[key] = val
            elif key in RunConfig.model_fields:
                top[key] = val
            else:
                raise ConfigError(f"unknown override {key!r}")
        data = self.model_dump()
        data["experiment"].update(exp)
        data.update(top)
        cfg = _validate(data, source="overrides")
        cfg._env_overrides = dict(self._env_overrides)
        return cfg

    def with_environments(self, environments: tuple[Environment, ...]) -> "RunConfig":
        """Narrow the experiment section to the environments a run actually uses."""
        return self.with_overrides(
            shop_loads = list(dict.fromkeys(e.shop_load for e in environments)),
            cv_ppts    = list(dict.fromkeys(e.cv_ppt for e in environments)),
        )

    @property
    def env_overrides(self) -> dict[str, str]:
        """DBR_* variables (shell or .env) that changed this config, by name."""
        return dict(self._env_overrides)

    # ── conversions ───────────────────────────────────────────────────────────

    def model_constants(self) -> ModelConstants:
        try:
            return self.model.to_constants()
        except DbrError as exc:
            raise ConfigError(f"model section: {exc}") from exc

    def cost_rates(self) -> CostRates:
        try:
            return self.costs.to_rates()
        except DbrError as exc:
            raise ConfigError(f"costs section: {exc}") from exc

    def environments(self) -> tuple[Environment, ...]:
        try:
            return base_environments(self.model_constants(), self.experiment.shop_loads,
                                     self.experiment.cv_ppts)
        except DbrError as exc:
            raise ConfigError(f"experiment environments: {exc}") from exc

    def plan_for(self, method: Method,
                 environments: tuple[Environment, ...] | None = None) -> ExperimentPlan:
        exp = self.experiment
        try:
            return ExperimentPlan(
                environments = environments or self.environments(),
                c_range      = tuple(range(exp.c_min, exp.c_max + 1)),
                s_range      = tuple(range(exp.s_min, exp.s_max + 1)),
                replications = exp.replications,
                method       = method,
                master_seed  = exp.master_seed,
                horizon      = exp.horizon,
                warmup       = exp.warmup,
                sbm          = self.sbm.settings_for(method, exp.replications),
                model        = self.model_constants(),
                rates        = self.cost_rates(),
            )
        except ConfigError:
            raise
        except DbrError as exc:
            raise ConfigError(str(exc)) from exc


def _validate(data: dict, source: str) -> RunConfig:
    try:
        return RunConfig.model_validate(data)
    except ValidationError as exc:
        raise ConfigError(f"invalid configuration ({source}): {exc}") from exc


def load_config(path: str | os.PathLike | None = None, use_env: bool = True,
                dotenv_path: str | None = None) -> RunConfig:
    """Defaults, then the JSON file at *path*, then DBR_* environment overrides."""
    data: dict = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}") from None
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must hold a JSON object")
        log.info("[config] loaded %s", path)

    cfg = _validate(data, source=str(path) if path else "defaults")
    if not use_env:
        return cfg

    env = load_overrides(dotenv_path)
    changes: dict[str, Any] = {}
    if ENV_OUTPUT_DIR in env:
        changes["output_dir"] = env[ENV_OUTPUT_DIR]
    if ENV_LOG_LEVEL in env:
        changes["verbosity"] = env[ENV_LOG_LEVEL]
    if ENV_MASTER_SEED in env:
        try:
            changes["master_seed"] = int(env[ENV_MASTER_SEED])
        except ValueError:
            raise ConfigError(f"{ENV_MASTER_SEED} must be an integer, "
                              f"got {env[ENV_MASTER_SEED]!r}") from None
    if changes:
        log.info("[config] environment overrides: %s", sorted(changes))
        cfg = cfg.with_overrides(**changes)
        cfg._env_overrides = dict(env)
    return cfg


def effective_config(cfg: RunConfig, environments: tuple[Environment, ...] | None = None,
                     run: dict | None = None) -> dict:
    """Provenance record of a run. *run* holds per-command settings such as the simulate seed."""
    data = cfg.model_dump(mode="json")
    data["rng"] = RNG_IDENTITY
    data["environment_overrides"] = cfg.env_overrides
    if environments is not None:
        data["environments"] = [
            {"shop_load": e.shop_load, "cv_ppt": e.cv_ppt, "mean_interarrival": e.mean_interarrival}
            for e in environments
        ]
    if run is not None:
        data["run"] = run
    return data


def write_effective_config(cfg: RunConfig, out_dir: str | os.PathLike,
                           environments: tuple[Environment, ...] | None = None,
                           run: dict | None = None) -> Path:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    path = out / "effective_config.json"
    path.write_text(json.dumps(effective_config(cfg, environments, run), indent=2, sort_keys=True) + "\n",
                    encoding="utf-8")
    return path
