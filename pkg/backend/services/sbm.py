"""
backend/services/sbm.py
Simulation Budget Management: stop an iteration's replications early when its
running mean cost is worse than a percentile of all known iteration means.

  - no skipping during the first `init_iterations` iterations
  - no skipping before `min_replications` replications of an iteration
  - the percentile starts at `ub` after the initialisation phase and drops by
    `percentile_step` per finished iteration, never below `lb`
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, replace
from typing import Sequence

from backend.errors import ParameterError

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class SbmSettings:
    lb:                         float
    ub:                         float
    percentile_step:            float = 0.01
    init_iterations:            int   = 5
    replications_per_iteration: int   = 20
    min_replications:           int   = 3
    name:                       str   = "custom"

    def __post_init__(self):
        if not (0 < self.lb <= self.ub <= 1):
            raise ParameterError(f"SBM bounds must satisfy 0 < lb <= ub <= 1, got {self.lb}/{self.ub}")
        if not self.percentile_step > 0:
            raise ParameterError(f"percentile_step must be > 0, got {self.percentile_step}")
        if self.init_iterations < 0 or self.min_replications < 1:
            raise ParameterError("init_iterations must be >= 0 and min_replications >= 1")
        if self.replications_per_iteration < self.min_replications:
            raise ParameterError(
                f"replications_per_iteration ({self.replications_per_iteration}) "
                f"< min_replications ({self.min_replications})"
            )

    def percentile_after(self, iterations_done: int) -> float:
        over = max(0, iterations_done - self.init_iterations)
        return max(self.lb, self.ub - self.percentile_step * over)


SBM_PRESETS: dict[str, tuple[float, float]] = {
    "S1": (0.05, 0.4),
    "S2": (0.1,  0.5),
    "S3": (0.02, 0.8),
    "S4": (0.02, 0.2),      # most stringent
}


def preset(name: str, **overrides) -> SbmSettings:
    try:
        lb, ub = SBM_PRESETS[name.upper()]
    except KeyError:
        raise ParameterError(f"unknown SBM preset {name!r}; known: {sorted(SBM_PRESETS)}") from None
    return SbmSettings(lb=lb, ub=ub, name=name.upper(), **overrides)


@dataclass(frozen=True)
class BudgetState:
    iteration_means:    tuple[float, ...]
    iterations_done:    int
    current_percentile: float
    replications_used:  int

    @classmethod
    def initial(cls, settings: SbmSettings) -> "BudgetState":
        return cls(iteration_means=(), iterations_done=0,
                   current_percentile=settings.ub, replications_used=0)


def percentile(values: Sequence[float], p: float) -> float:
    """Nearest-rank percentile: the ceil(p*n)-th smallest value (1-based)."""
    if not values:
        raise ParameterError("percentile of an empty sequence")
    if not (0 < p <= 1):
        raise ParameterError(f"percentile rank must lie in (0, 1], got {p}")
    ordered = sorted(values)
    n = len(ordered)
    # round() keeps e.g. 0.07 * 100 from landing on rank 8
    rank = max(1, math.ceil(round(p * n, 9)))
    return ordered[min(rank, n) - 1]


def should_skip(state: BudgetState, settings: SbmSettings, iteration_index: int,
                replication_index: int, running_mean: float) -> bool:
    """True when the iteration's remaining replications should be skipped."""
    if replication_index < 1:
        raise ParameterError(f"replication_index is 1-based, got {replication_index}")
    if iteration_index <= settings.init_iterations:
        return False
    if replication_index < settings.min_replications:
        return False
    if not state.iteration_means:
        return False
    return running_mean > percentile(state.iteration_means, state.current_percentile)


def finish_iteration(state: BudgetState, settings: SbmSettings, realized_mean: float,
                     was_skipped: bool, replications: int = 0) -> BudgetState:
    """Record a finished (full or skipped) iteration and tighten the percentile."""
    done = state.iterations_done + 1
    new_state = replace(
        state,
        iteration_means    = state.iteration_means + (realized_mean,),
        iterations_done    = done,
        current_percentile = settings.percentile_after(done),
        replications_used  = state.replications_used + replications,
    )
    if was_skipped:
        log.debug("[sbm] %s iteration %d skipped after %d replications (mean %.4f, p=%.2f)",
                  settings.name, done, replications, realized_mean, new_state.current_percentile)
    return new_state
