import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from clipped_sqn import objectives, spider
from clipped_sqn.objectives import Dataset
from clipped_sqn.spider import SpiderState

from conftest import ROBUST


def _state(r=3, s1=4, s2=2, replace=True):
    return SpiderState(v=None, restart_period=r, s1_size=s1, s2_size=s2, replace=replace)


def test_state_validation():
    with pytest.raises(ValueError):
        _state(r=0)
    with pytest.raises(ValueError):
        _state(s1=2.5)
    with pytest.raises(ValueError, match="cap"):
        _state(s1=spider.MAX_BATCH + 1)


def test_restart_full_dataset_without_replacement_is_exact(small_robust, rng):
    st_ = _state(s1=small_robust.size, replace=False)
    x = rng.standard_normal(5)
    _, draw = spider.restart(st_, ROBUST, x, small_robust, rng)
    np.testing.assert_allclose(st_.v, objectives.full_gradient(ROBUST, x, small_robust), atol=1e-15)
    assert draw.kind == spider.RESTART and len(draw.indices) == small_robust.size
    assert st_.samples_consumed == small_robust.size and st_.iteration == 1


def test_restart_single_sample_dataset(rng):
    ds = Dataset(np.array([[0.3, 0.7]]), np.array([1.0]))
    st_ = _state(s1=5)
    x = np.array([0.2, -0.1])
    spider.restart(st_, ROBUST, x, ds, rng)
    np.testing.assert_allclose(st_.v, objectives.gradient(ROBUST, x, ds, [0]), atol=1e-15)


def test_restart_and_refresh_enforce_schedule(small_robust, rng):
    st_ = _state(r=2)
    x = np.zeros(5)
    with pytest.raises(ValueError, match="restart step"):
        spider.refresh(st_, ROBUST, x, x, small_robust, rng)
    spider.restart(st_, ROBUST, x, small_robust, rng)
    with pytest.raises(ValueError, match="not a restart"):
        spider.restart(st_, ROBUST, x, small_robust, rng)
    with pytest.raises(ValueError, match="previous iterate"):
        spider.refresh(st_, ROBUST, x, None, small_robust, rng)


def test_refresh_with_unchanged_iterate_keeps_v(small_robust, rng):
    st_ = _state()
    x = rng.standard_normal(5)
    spider.restart(st_, ROBUST, x, small_robust, rng)
    v0 = st_.v.copy()
    _, draw = spider.refresh(st_, ROBUST, x, x, small_robust, rng)
    np.testing.assert_array_equal(st_.v, v0)
    assert draw.kind == spider.REFRESH and len(draw.indices) == 2


def test_full_batch_refresh_tracks_true_gradient(small_robust, rng):
    n = small_robust.size
    st_ = _state(r=100, s1=n, s2=n, replace=False)
    x_prev, x = None, rng.standard_normal(5)
    for _ in range(15):
        spider.update(st_, ROBUST, x, x_prev, small_robust, rng, rng)
        np.testing.assert_allclose(st_.v, objectives.full_gradient(ROBUST, x, small_robust), atol=1e-12)
        x_prev, x = x, x - 0.3 * st_.v


def test_refresh_martingale_identity_exhaustive(rng):
    ds = objectives.generate_synthetic(3, 10, 1.0, "pm1", seed=21)
    x_prev, x = rng.standard_normal(3), rng.standard_normal(3)
    v_prev = rng.standard_normal(3)
    outcomes = []
    for batch in itertools.product(range(10), repeat=2):
        corr = objectives.gradient(ROBUST, x, ds, list(batch)) - objectives.gradient(ROBUST, x_prev, ds, list(batch))
        outcomes.append(v_prev + corr)
    expected = v_prev + objectives.full_gradient(ROBUST, x, ds) - objectives.full_gradient(ROBUST, x_prev, ds)
    np.testing.assert_allclose(np.mean(outcomes, axis=0), expected, atol=1e-12)


def test_restart_is_unbiased_monte_carlo():
    ds = objectives.generate_synthetic(4, 12, 0.5, "pm1", seed=5)
    x = np.array([0.5, -1.0, 0.25, 2.0])
    rng = np.random.default_rng(0)
    draws = []
    for _ in range(10_000):
        st_ = _state(s1=3)
        spider.restart(st_, ROBUST, x, ds, rng)
        draws.append(st_.v)
    draws = np.array(draws)
    se = draws.std(axis=0, ddof=1) / np.sqrt(len(draws))
    assert np.all(np.abs(draws.mean(axis=0) - objectives.full_gradient(ROBUST, x, ds)) <= 3 * se)


def test_sample_accounting(small_robust, rng):
    st_ = _state(r=4, s1=7, s2=3)
    x_prev, x = None, np.zeros(5)
    for k in range(1, 23):
        spider.update(st_, ROBUST, x, x_prev, small_robust, rng, rng)
        x_prev, x = x, x + 0.01
        assert st_.samples_consumed == st_.restarts * 7 + st_.refreshes * 3
        assert st_.samples_consumed == spider.expected_samples(k, 7, 3, 4)
    assert st_.restarts == 6 and st_.refreshes == 16


def test_draw_batch_modes(rng):
    assert len(spider.draw_batch(rng, 5, 12)) == 12
    np.testing.assert_array_equal(spider.draw_batch(rng, 5, 5, replace=False), np.arange(5))
    idx = spider.draw_batch(rng, 50, 20, replace=False)
    assert len(set(idx.tolist())) == 20
    with pytest.raises(ValueError):
        spider.draw_batch(rng, 5, 6, replace=False)


def test_theory_batch_sizes_worked_values():
    assert spider.theory_batch_sizes(0.1, 1.0, 1.0) == (200, 40, 10)
    assert spider.theory_batch_sizes(0.1, 0.0, 1.0)[0] == 1
    assert spider.theory_batch_sizes(0.01, 1.0, 0.5) == (20000, 100, 100)
    assert spider.theory_batch_sizes(2.0, 0.0, 0.1) == (1, 1, 1)
    with pytest.raises(ValueError):
        spider.theory_batch_sizes(0.0, 1.0, 1.0)
    with pytest.raises(ValueError):
        spider.theory_batch_sizes(0.1, 1.0, 0.0)


@settings(max_examples=60, deadline=None)
@given(eps=st.floats(1e-3, 5.0), sigma=st.floats(0.0, 10.0), h1=st.floats(1e-3, 10.0))
def test_theory_batch_sizes_cover_formulas(eps, sigma, h1):
    s1, s2, r = spider.theory_batch_sizes(eps, sigma, h1)
    assert min(s1, s2, r) >= 1
    # each size is the smallest integer not below its target, up to float round-off
    for size, target in ((s1, 2 * sigma**2 / eps**2), (s2, 4 * h1**2 / eps), (r, 1 / eps)):
        assert size >= target * (1 - 1e-9)
        assert size - 1 < max(target, 1.0) * (1 + 1e-9)
