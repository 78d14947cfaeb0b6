"""
Domain types and stochastic primitives.

Covers:
  - lognormal parameterisation (analytic round-trip, degenerate cv = 0)
  - Monte Carlo calibration of every draw primitive (10^6 draws)
  - inter-arrival derivation from shop load
  - customer order generation and substream independence
"""
import math

import numpy as np
import pytest

from backend.errors import ParameterError, ScheduleStateError
from backend.model import (
    DEFAULT_MODEL,
    ComponentId,
    Environment,
    PlanningParameters,
    Product,
    ProductId,
    RngStreams,
    derive_interarrival,
    generate_customer_order,
    lognormal_draw,
    lognormal_params,
)
from conftest import make_order

N_DRAWS = 1_000_000


# ── lognormal ─────────────────────────────────────────────────────────────────

@pytest.mark.parametrize("mean,cv", [(0.65, 0.3), (0.7, 0.9), (1.0, 0.0), (16.0, 1.5), (0.6, 0.6)])
def test_lognormal_params_round_trip(mean, cv):
    mu, sigma = lognormal_params(mean, cv)
    analytic_mean = math.exp(mu + sigma ** 2 / 2)
    analytic_cv = math.sqrt(math.expm1(sigma ** 2))
    assert analytic_mean == pytest.approx(mean, rel=1e-12)
    assert analytic_cv == pytest.approx(cv, rel=1e-12, abs=1e-12)


def test_lognormal_cv_zero_returns_mean_exactly():
    streams = RngStreams(7)
    assert lognormal_draw(0.65, 0.0, streams["W1"]) == 0.65
    assert np.all(lognormal_draw(0.65, 0.0, streams["W1"], size=5) == 0.65)


def test_lognormal_cv_zero_does_not_consume_stream():
    a, b = RngStreams(3), RngStreams(3)
    lognormal_draw(0.65, 0.0, a["W2"])
    assert a["W2"].random() == b["W2"].random()


@pytest.mark.parametrize("mean,cv", [(0.65, -0.1), (0.0, 0.3), (-1.0, 0.3), (math.nan, 0.3)])
def test_lognormal_rejects_bad_parameters(mean, cv):
    with pytest.raises(ParameterError):
        lognormal_draw(mean, cv, np.random.default_rng(0))


def test_lognormal_sample_mean_cv_03():
    draws = lognormal_draw(0.65, 0.3, np.random.default_rng(11), size=N_DRAWS)
    assert 0.6435 <= draws.mean() <= 0.6565


def test_lognormal_sample_std_cv_03():
    draws = lognormal_draw(1.0, 0.3, np.random.default_rng(12), size=N_DRAWS)
    assert 0.294 <= draws.std() <= 0.306


def test_bottleneck_draws_cv_09():
    draws = lognormal_draw(0.75, 0.9, RngStreams(13).station("W4"), size=N_DRAWS)
    assert draws.mean() == pytest.approx(0.75, rel=0.01)
    assert 0.89 <= draws.std() / draws.mean() <= 0.91


def test_interarrival_stream_calibration():
    env = Environment.build(0.85, 0.3)
    draws = lognormal_draw(env.mean_interarrival, DEFAULT_MODEL.arrival_cv,
                           RngStreams(14).arrival, size=N_DRAWS)
    assert draws.mean() == pytest.approx(env.mean_interarrival, rel=0.01)
    assert draws.std() / draws.mean() == pytest.approx(0.3, rel=0.01)


def test_due_date_and_product_streams_calibration():
    streams = RngStreams(15)
    offsets = DEFAULT_MODEL.due_date_fixed + streams.due_date.exponential(
        DEFAULT_MODEL.due_date_exp_mean, size=N_DRAWS)
    assert 21.9 <= offsets.mean() <= 22.1

    picks = streams.product.integers(len(DEFAULT_MODEL.products), size=N_DRAWS)
    freqs = np.bincount(picks, minlength=3) / N_DRAWS
    for f in freqs:
        assert f == pytest.approx(1 / 3, rel=0.01)


# ── inter-arrival ─────────────────────────────────────────────────────────────

_MIX_0725 = (
    Product(ProductId.P1, ComponentId.C1, w4_mean=0.70, w5_mean=0.60),
    Product(ProductId.P3, ComponentId.C2, w4_mean=0.75, w5_mean=0.70),
)


@pytest.mark.parametrize("shop_load,expected", [
    (1.0,  1.0875),
    (0.85, 1.2794117647058822),
    (0.95, 1.1447368421052633),
])
def test_derive_interarrival(shop_load, expected):
    assert derive_interarrival(shop_load, _MIX_0725, 1.5) == pytest.approx(expected, rel=1e-12)


def test_default_mix_bottleneck_mean():
    assert DEFAULT_MODEL.mean_w4 == pytest.approx(0.716666666666, rel=1e-9)
    env = Environment.build(0.9, 0.6)
    assert env.mean_interarrival == pytest.approx(1.5 * 0.7166666666666667 / 0.9)
    assert env.label == "0.9:0.6"


@pytest.mark.parametrize("shop_load", [0.0, -0.5, 1.01])
def test_derive_interarrival_rejects_out_of_range(shop_load):
    with pytest.raises(ParameterError):
        derive_interarrival(shop_load, _MIX_0725, 1.5)


def test_product_means_must_stay_in_calibrated_range():
    with pytest.raises(ParameterError):
        Product(ProductId.P1, ComponentId.C1, w4_mean=0.9, w5_mean=0.6)


# ── orders / streams ──────────────────────────────────────────────────────────

def test_generate_customer_order_is_deterministic():
    a = generate_customer_order(3.5, RngStreams(99), 1)
    b = generate_customer_order(3.5, RngStreams(99), 1)
    fields = ("product", "lot_size", "arrival_time", "due_date", "plan_process_time")
    assert [getattr(a, f) for f in fields] == [getattr(b, f) for f in fields]


def test_generate_customer_order_fields():
    streams = RngStreams(5)
    orders = [generate_customer_order(10.0, streams, i) for i in range(5000)]
    for o in orders:
        assert o.lot_size in (1, 2)
        assert o.due_date >= 10.0 + DEFAULT_MODEL.due_date_fixed
        assert o.plan_process_time == pytest.approx(o.lot_size * o.product.w4_mean)
        assert not o.released
    offsets = np.array([o.due_date - 10.0 for o in orders])
    assert offsets.mean() == pytest.approx(22.0, rel=0.08)


def test_constant_due_offset(degenerate_model):
    o = generate_customer_order(4.0, RngStreams(1), 1, degenerate_model)
    assert o.due_date == 10.0
    assert o.lot_size == 1
    assert o.plan_process_time == 0.75


def test_streams_are_independent():
    a, b = RngStreams(21), RngStreams(21)
    a.arrival.random(1000)
    a.product.integers(3, size=50)
    assert a.station("W4").random() == b.station("W4").random()
    assert a.due_date.random() == b.due_date.random()


def test_negative_seed_rejected():
    with pytest.raises(ParameterError):
        RngStreams(-1)


def test_order_released_twice_raises():
    order = make_order(1, due_date=20.0)
    order.mark_released(3.0)
    assert order.released and order.release_time == 3.0
    with pytest.raises(ScheduleStateError):
        order.mark_released(4.0)


def test_planning_parameters():
    params = PlanningParameters(ccr_buffer=6, shipping_buffer=7)
    assert params.window == 13
    assert PlanningParameters(0, 0).window == 0
    with pytest.raises(ParameterError):
        PlanningParameters(-1, 3)
    with pytest.raises(ParameterError):
        PlanningParameters(2, math.inf)
