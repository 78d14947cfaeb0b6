"""
backend/services/costing.py
Time-weighted inventory measurement and the overall-cost objective.

Overall cost per time unit = wip_rate * avg WIP + fgi_rate * avg FGI
                           + tardiness_rate * avg backorder
All levels are in lot units and only the post-warm-up span is measured.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from backend.errors import AccountingError, ContractError, ParameterError
from backend.model import TimeUnit


@dataclass(frozen=True)
class CostRates:
    wip_rate:       float = 0.5    # CU per unit per TU
    fgi_rate:       float = 1.0
    tardiness_rate: float = 19.0   # backorder holding rate, 95 % target service level

    def __post_init__(self):
        if not (0 <= self.wip_rate < self.fgi_rate < self.tardiness_rate):
            raise ParameterError(
                "cost rates must satisfy 0 <= wip < fgi < tardiness, got "
                f"{self.wip_rate}/{self.fgi_rate}/{self.tardiness_rate}"
            )

    @property
    def target_service_level(self) -> float:
        return self.tardiness_rate / (self.tardiness_rate + self.fgi_rate)


DEFAULT_RATES = CostRates()


def overall_cost(avg_wip: float, avg_fgi: float, avg_backorder: float,
                 rates: CostRates = DEFAULT_RATES) -> float:
    for name, v in (("avg_wip", avg_wip), ("avg_fgi", avg_fgi),
                    ("avg_backorder", avg_backorder)):
        if v < 0 or not math.isfinite(v):
            raise ContractError(f"{name} must be a finite value >= 0, got {v}")
    return (rates.wip_rate * avg_wip
            + rates.fgi_rate * avg_fgi
            + rates.tardiness_rate * avg_backorder)


class LevelIntegrator:
    """
    Piecewise-constant level with its time integral over [warmup_end, ...).

    Changes before warmup_end move the level but add nothing to the integral.
    """

    def __init__(self, warmup_end: TimeUnit = 0.0, name: str = "level"):
        self.name          = name
        self.warmup_end    = warmup_end
        self.current_level = 0
        self.last_change   = 0.0
        self.integral      = 0.0

    def _accumulate(self, t: TimeUnit) -> None:
        if t < self.last_change:
            raise AccountingError(
                f"{self.name}: time went backwards ({t} < {self.last_change})"
            )
        if t > self.warmup_end:
            start = max(self.last_change, self.warmup_end)
            self.integral += self.current_level * (t - start)
        self.last_change = t

    def record_level_change(self, t: TimeUnit, delta_units: int) -> None:
        new_level = self.current_level + delta_units
        if new_level < 0:
            raise AccountingError(
                f"{self.name}: level would drop to {new_level} at t={t}"
            )
        self._accumulate(t)
        self.current_level = new_level

    def close(self, t: TimeUnit) -> float:
        """Bring the integral up to *t* without changing the level."""
        self._accumulate(t)
        return self.integral

    def average(self, horizon: TimeUnit) -> float:
        span = horizon - self.warmup_end
        return self.integral / span if span > 0 else 0.0
