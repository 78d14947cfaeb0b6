import os
import sys

_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))
sys.path.insert(0, _ROOT)

import pytest

from backend.model import (
    DEFAULT_PRODUCTS,
    ComponentId,
    Environment,
    ModelConstants,
    PlanningParameters,
    Product,
    ProductId,
    ProductionOrder,
)

CONFIGS_DIR = os.path.join(_ROOT, "configs")


def make_degenerate_model(due_offset: float = 6.0) -> ModelConstants:
    """All CVs 0, one product (W4 0.75 / W5 0.60), lot 1, constant due-date offset."""
    return ModelConstants(
        products          = (Product(ProductId.P1, ComponentId.C1, w4_mean=0.75, w5_mean=0.60),),
        upstream_mean     = 0.65,
        station_cv        = 0.0,
        arrival_cv        = 0.0,
        due_date_fixed    = due_offset,
        due_date_exp_mean = 0.0,
        lot_sizes         = (1,),
    )


def make_order(order_id: int, due_date: float, p: float = 1.0, lot_size: int = 1,
               product_index: int = 0) -> ProductionOrder:
    return ProductionOrder(id=order_id, product=DEFAULT_PRODUCTS[product_index],
                           lot_size=lot_size, arrival_time=0.0, due_date=due_date,
                           plan_process_time=p)


@pytest.fixture
def degenerate_model() -> ModelConstants:
    return make_degenerate_model()


@pytest.fixture
def degenerate_env(degenerate_model) -> Environment:
    # shop load 0.75 with E[w4] = 0.75 and lot 1 -> inter-arrival exactly 1.0
    return Environment.build(0.75, 0.0, degenerate_model)


@pytest.fixture
def base_params() -> PlanningParameters:
    return PlanningParameters(ccr_buffer=6, shipping_buffer=7)


@pytest.fixture(autouse=True)
def _no_env_overrides(monkeypatch):
    for name in ("DBR_OUTPUT_DIR", "DBR_LOG_LEVEL", "DBR_MASTER_SEED", "DBR_CONFIG"):
        monkeypatch.delenv(name, raising=False)
