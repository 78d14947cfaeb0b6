import numpy as np
import pytest

from backend.errors import ParameterError
from backend.services.sbm import (
    SBM_PRESETS,
    BudgetState,
    SbmSettings,
    finish_iteration,
    percentile,
    preset,
    should_skip,
)


def _state(means, settings, done=None):
    done = len(means) if done is None else done
    return BudgetState(iteration_means=tuple(means), iterations_done=done,
                       current_percentile=settings.percentile_after(done),
                       replications_used=0)


# ── percentile ────────────────────────────────────────────────────────────────

def test_nearest_rank_percentile():
    assert percentile(list(range(1, 11)), 0.2) == 2


def test_percentile_one_is_maximum():
    assert percentile([4.0, 9.5, 1.0, 7.0], 1.0) == 9.5


def test_percentile_singleton():
    assert percentile([7.0], 0.02) == 7.0


def test_percentile_rank_is_not_pushed_up_by_float_error():
    # 0.07 * 100 = 7.000000000000001 in binary floating point
    assert percentile(list(range(1, 101)), 0.07) == 7


def test_percentile_of_nothing_raises():
    with pytest.raises(ParameterError):
        percentile([], 0.5)


# ── settings ──────────────────────────────────────────────────────────────────

def test_presets():
    assert SBM_PRESETS == {"S1": (0.05, 0.4), "S2": (0.1, 0.5), "S3": (0.02, 0.8), "S4": (0.02, 0.2)}
    s4 = preset("s4")
    assert (s4.lb, s4.ub, s4.name) == (0.02, 0.2, "S4")
    assert (s4.init_iterations, s4.min_replications, s4.percentile_step) == (5, 3, 0.01)


def test_unknown_preset():
    with pytest.raises(ParameterError):
        preset("S9")


@pytest.mark.parametrize("kwargs", [
    dict(lb=0.3, ub=0.2),
    dict(lb=0.0, ub=0.2),
    dict(lb=0.1, ub=0.2, percentile_step=0.0),
    dict(lb=0.1, ub=0.2, replications_per_iteration=2, min_replications=3),
])
def test_invalid_settings(kwargs):
    with pytest.raises(ParameterError):
        SbmSettings(**kwargs)


# ── should_skip ───────────────────────────────────────────────────────────────

def test_no_skip_during_initialisation():
    s4 = preset("S4")
    state = _state([1.0, 1.0], s4)
    assert not should_skip(state, s4, iteration_index=3, replication_index=10, running_mean=1e9)


def test_no_skip_before_min_replications():
    s4 = preset("S4")
    state = _state([1.0] * 9, s4)
    assert not should_skip(state, s4, iteration_index=10, replication_index=2, running_mean=1e9)


def test_skip_against_percentile_of_history():
    settings = SbmSettings(lb=0.02, ub=0.2)
    state = BudgetState(iteration_means=(10, 12, 14, 16, 18, 20, 22, 24, 26), iterations_done=9,
                        current_percentile=0.2, replications_used=0)
    assert should_skip(state, settings, iteration_index=10, replication_index=5, running_mean=19)
    assert not should_skip(state, settings, iteration_index=10, replication_index=5, running_mean=12)


# ── finish_iteration ──────────────────────────────────────────────────────────

def test_percentile_schedule():
    s4 = preset("S4")
    assert s4.percentile_after(5) == 0.2
    assert s4.percentile_after(6) == pytest.approx(0.19)
    assert s4.percentile_after(100) == 0.02


def test_finish_iteration_tightens_percentile():
    s4 = preset("S4")
    state = BudgetState.initial(s4)
    assert state.current_percentile == 0.2
    for i in range(6):
        state = finish_iteration(state, s4, float(i), was_skipped=False, replications=20)
    assert state.iterations_done == 6
    assert state.current_percentile == pytest.approx(0.19)
    assert state.iteration_means == (0.0, 1.0, 2.0, 3.0, 4.0, 5.0)
    assert state.replications_used == 120


def test_guards_hold_on_random_cost_streams():
    rng = np.random.default_rng(99)
    for name in SBM_PRESETS:
        settings = preset(name)
        for _ in range(50):
            state = BudgetState.initial(settings)
            for j in range(1, 61):
                level = rng.uniform(5, 30)
                costs = []
                skipped = False
                for r in range(1, settings.replications_per_iteration + 1):
                    costs.append(level + rng.normal(0, 3))
                    if should_skip(state, settings, j, r, float(np.mean(costs))):
                        assert j > settings.init_iterations
                        assert r >= settings.min_replications
                        skipped = True
                        break
                state = finish_iteration(state, settings, float(np.mean(costs)), skipped, len(costs))
                assert settings.lb <= state.current_percentile <= settings.ub


def _replay(settings, stream):
    """Replications spent per iteration when *settings* screens *stream*."""
    state = BudgetState.initial(settings)
    spent = []
    for j, costs in enumerate(stream, start=1):
        seen = []
        skipped = False
        for r, cost in enumerate(costs, start=1):
            seen.append(cost)
            if r < len(costs) and should_skip(state, settings, j, r, float(np.mean(seen))):
                skipped = True
                break
        spent.append(len(seen))
        state = finish_iteration(state, settings, float(np.mean(seen)), skipped, len(seen))
    return spent


def test_stringent_setting_never_spends_more_per_iteration():
    # constant costs within an iteration keep both histories identical
    rng = np.random.default_rng(7)
    s3, s4 = preset("S3"), preset("S4")
    for _ in range(50):
        levels = rng.integers(20, 120, size=60) * 0.25
        stream = [[float(level)] * s3.replications_per_iteration for level in levels]
        for used_s4, used_s3 in zip(_replay(s4, stream), _replay(s3, stream)):
            assert used_s4 <= used_s3


def test_identical_costs_are_never_skipped():
    for name in SBM_PRESETS:
        settings = preset(name)
        stream = [[12.5] * settings.replications_per_iteration for _ in range(80)]
        assert _replay(settings, stream) == [settings.replications_per_iteration] * 80


def test_percentile_never_increases_between_iterations():
    rng = np.random.default_rng(11)
    for name in SBM_PRESETS:
        settings = preset(name)
        state = BudgetState.initial(settings)
        previous = state.current_percentile
        for _ in range(120):
            state = finish_iteration(state, settings, float(rng.uniform(5, 30)),
                                     bool(rng.random() < 0.5), 3)
            assert state.current_percentile <= previous
            previous = state.current_percentile
        assert state.current_percentile == settings.lb
