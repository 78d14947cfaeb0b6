"""
backend/model.py
Domain types and stochastic primitives shared by every engine module.

Nothing in here knows about the event loop or the schedule; the flow-shop
simulation, the scheduler and the experiment runner all build on these.

Public entry-points:
  lognormal_draw(mean, cv, stream)             ->  float (or ndarray with size=)
  derive_interarrival(shop_load, products, lot_mean)  ->  mean inter-arrival time
  generate_customer_order(t, streams, order_id, model) ->  ProductionOrder
  RngStreams(seed)                              ->  named independent generators
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Sequence

import numpy as np

from backend.errors import ParameterError, ScheduleStateError

# Simulated hours ("time units").
TimeUnit = float

# Pinned into every effective-config echo; changing it breaks replay.
RNG_IDENTITY = "numpy.random.PCG64 <- SeedSequence(entropy=seed, spawn_key=(stream_index,))"


# ─────────────────────────────────────────────────────────────────────────────
#  Products and model constants
# ─────────────────────────────────────────────────────────────────────────────

class ProductId(str, Enum):
    P1 = "P1"
    P2 = "P2"
    P3 = "P3"


class ComponentId(str, Enum):
    C1 = "C1"
    C2 = "C2"


_MEAN_RANGE = (0.60, 0.75)


@dataclass(frozen=True)
class Product:
    id:        ProductId
    component: ComponentId
    w4_mean:   TimeUnit      # unit plan time at the bottleneck (component level)
    w5_mean:   TimeUnit      # unit plan time at final assembly (product level)

    def __post_init__(self):
        lo, hi = _MEAN_RANGE
        for name in ("w4_mean", "w5_mean"):
            v = getattr(self, name)
            if not (lo - 1e-12 <= v <= hi + 1e-12):
                raise ParameterError(f"{self.id.value}.{name}={v} outside [{lo}, {hi}]")


# Component map is fixed: P1, P2 -> C1 and P3 -> C2.
DEFAULT_PRODUCTS: tuple[Product, ...] = (
    Product(ProductId.P1, ComponentId.C1, w4_mean=0.70, w5_mean=0.60),
    Product(ProductId.P2, ComponentId.C1, w4_mean=0.70, w5_mean=0.65),
    Product(ProductId.P3, ComponentId.C2, w4_mean=0.75, w5_mean=0.70),
)


@dataclass(frozen=True)
class ModelConstants:
    """Calibration of the flow shop; defaults are the base study values."""
    products:          tuple[Product, ...] = DEFAULT_PRODUCTS
    upstream_mean:     TimeUnit            = 0.65   # W1..W3 unit plan time
    station_cv:        float               = 0.3    # CV PPT at non-bottleneck stations
    arrival_cv:        float               = 0.3
    due_date_fixed:    TimeUnit            = 6.0
    due_date_exp_mean: TimeUnit            = 16.0   # 0 -> constant due-date offset
    lot_sizes:         tuple[int, ...]     = (1, 2)

    def __post_init__(self):
        if not self.products:
            raise ParameterError("at least one product is required")
        if not self.lot_sizes or any(q < 1 for q in self.lot_sizes):
            raise ParameterError(f"lot sizes must be positive integers, got {self.lot_sizes}")
        if self.upstream_mean <= 0:
            raise ParameterError(f"upstream_mean must be > 0, got {self.upstream_mean}")
        if min(self.station_cv, self.arrival_cv, self.due_date_exp_mean) < 0:
            raise ParameterError("CVs and the due-date exponential mean must be >= 0")
        if self.due_date_fixed < 0:
            raise ParameterError(f"due_date_fixed must be >= 0, got {self.due_date_fixed}")

    @property
    def lot_mean(self) -> float:
        return sum(self.lot_sizes) / len(self.lot_sizes)

    @property
    def mean_w4(self) -> TimeUnit:
        return sum(p.w4_mean for p in self.products) / len(self.products)


DEFAULT_MODEL = ModelConstants()


# ─────────────────────────────────────────────────────────────────────────────
#  Environment / planning parameters
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(frozen=True)
class Environment:
    shop_load:         float     # planned bottleneck utilisation
    cv_ppt:            float     # CV of the bottleneck processing time
    mean_interarrival: TimeUnit

    @classmethod
    def build(cls, shop_load: float, cv_ppt: float,
              model: ModelConstants = DEFAULT_MODEL) -> "Environment":
        if cv_ppt < 0:
            raise ParameterError(f"cv_ppt must be >= 0, got {cv_ppt}")
        mean_ia = derive_interarrival(shop_load, model.products, model.lot_mean)
        return cls(shop_load=shop_load, cv_ppt=cv_ppt, mean_interarrival=mean_ia)

    @property
    def label(self) -> str:
        return f"{self.shop_load:g}:{self.cv_ppt:g}"


@dataclass(frozen=True)
class PlanningParameters:
    ccr_buffer:      TimeUnit    # C
    shipping_buffer: TimeUnit    # S

    def __post_init__(self):
        for name in ("ccr_buffer", "shipping_buffer"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ParameterError(f"{name} must be a finite value >= 0, got {v}")

    @property
    def window(self) -> TimeUnit:
        return self.shipping_buffer + self.ccr_buffer


# ─────────────────────────────────────────────────────────────────────────────
#  Production orders
# ─────────────────────────────────────────────────────────────────────────────

@dataclass(eq=False)
class ProductionOrder:
    id:                int
    product:           Product
    lot_size:          int
    arrival_time:      TimeUnit
    due_date:          TimeUnit            # d_i
    plan_process_time: TimeUnit            # p_i, lot-scaled bottleneck plan time
    released:          bool                = False
    release_time:      TimeUnit | None     = None
    constraint_date:   TimeUnit | None     = None   # current planned bottleneck start
    completion_time:   TimeUnit | None     = None   # W5 finish
    delivery_time:     TimeUnit | None     = None
    backordered:       bool                = False

    def mark_released(self, t: TimeUnit) -> None:
        if self.released:
            raise ScheduleStateError(f"order {self.id} released twice")
        self.released     = True
        self.release_time = t

    @property
    def delivered(self) -> bool:
        return self.delivery_time is not None


# ─────────────────────────────────────────────────────────────────────────────
#  Random number streams
# ─────────────────────────────────────────────────────────────────────────────

STREAM_NAMES: tuple[str, ...] = (
    "arrival", "product", "lot_size", "due_date",
    "W1", "W2", "W3", "W4", "W5",
)


class RngStreams:
    """
    One independent PCG64 generator per named substream.

    Stream k is seeded from SeedSequence(entropy=seed, spawn_key=(k,)), so a
    stream's sequence depends only on (seed, k): drawing more or less from
    one stream never shifts another.
    """

    def __init__(self, seed: int):
        if seed < 0:
            raise ParameterError(f"seed must be >= 0, got {seed}")
        self.seed = int(seed)
        self._gens: dict[str, np.random.Generator] = {
            name: np.random.Generator(
                np.random.PCG64(np.random.SeedSequence(entropy=self.seed, spawn_key=(k,)))
            )
            for k, name in enumerate(STREAM_NAMES)
        }

    def __getitem__(self, name: str) -> np.random.Generator:
        return self._gens[name]

    @property
    def arrival(self) -> np.random.Generator:
        return self._gens["arrival"]

    @property
    def product(self) -> np.random.Generator:
        return self._gens["product"]

    @property
    def lot_size(self) -> np.random.Generator:
        return self._gens["lot_size"]

    @property
    def due_date(self) -> np.random.Generator:
        return self._gens["due_date"]

    def station(self, station_id: str) -> np.random.Generator:
        return self._gens[station_id]


# ─────────────────────────────────────────────────────────────────────────────
#  Draw primitives
# ─────────────────────────────────────────────────────────────────────────────

def lognormal_params(mean: float, cv: float) -> tuple[float, float]:
    """(mu, sigma) of the underlying normal for a lognormal with given mean / CV."""
    if not (mean > 0) or not math.isfinite(mean):
        raise ParameterError(f"lognormal mean must be > 0, got {mean}")
    if not (cv >= 0) or not math.isfinite(cv):
        raise ParameterError(f"lognormal cv must be >= 0, got {cv}")
    sigma2 = math.log1p(cv * cv)
    return math.log(mean) - sigma2 / 2.0, math.sqrt(sigma2)


def lognormal_draw(mean: float, cv: float, stream: np.random.Generator,
                   size: int | None = None):
    """
    Lognormal sample with expectation *mean* and coefficient of variation *cv*.

    cv == 0 is the degenerate distribution and returns *mean* exactly
    without consuming the stream.
    """
    mu, sigma = lognormal_params(mean, cv)
    if cv == 0:
        return mean if size is None else np.full(size, mean, dtype=float)
    if size is None:
        return float(stream.lognormal(mu, sigma))
    return stream.lognormal(mu, sigma, size)


def derive_interarrival(shop_load: float, products: Sequence[Product],
                        lot_mean: float) -> TimeUnit:
    """Mean customer inter-arrival time that plans the bottleneck at *shop_load*."""
    if not (0 < shop_load <= 1):
        raise ParameterError(f"shop_load must lie in (0, 1], got {shop_load}")
    if not products:
        raise ParameterError("product set is empty")
    mean_w4 = sum(p.w4_mean for p in products) / len(products)
    return lot_mean * mean_w4 / shop_load


def draw_interarrival(streams: RngStreams, env: Environment,
                      model: ModelConstants = DEFAULT_MODEL) -> TimeUnit:
    return lognormal_draw(env.mean_interarrival, model.arrival_cv, streams.arrival)


def generate_customer_order(t: TimeUnit, streams: RngStreams, order_id: int,
                            model: ModelConstants = DEFAULT_MODEL) -> ProductionOrder:
    """One customer order -> exactly one production order."""
    if t < 0:
        raise ParameterError(f"order time must be >= 0, got {t}")
    product  = model.products[int(streams.product.integers(len(model.products)))]
    lot_size = model.lot_sizes[int(streams.lot_size.integers(len(model.lot_sizes)))]
    offset   = model.due_date_fixed
    if model.due_date_exp_mean > 0:
        offset += float(streams.due_date.exponential(model.due_date_exp_mean))
    return ProductionOrder(
        id                = order_id,
        product           = product,
        lot_size          = lot_size,
        arrival_time      = t,
        due_date          = t + offset,
        plan_process_time = lot_size * product.w4_mean,
    )
