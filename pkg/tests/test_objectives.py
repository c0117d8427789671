import itertools
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.stats import spearmanr

from clipped_sqn import objectives
from clipped_sqn.objectives import Dataset, ObjectiveKind, SmoothnessParams

from conftest import LOGISTIC, ROBUST, SCE, fd_gradient


# --- synthetic data ---------------------------------------------------------


def test_generate_desk_scale_shape_and_sparsity():
    ds = objectives.generate_synthetic(100, 5000, 0.10, "pm1", seed=0)
    assert ds.features.shape == (5000, 100)
    nnz = np.count_nonzero(ds.features, axis=1)
    assert np.all(nnz == 10)
    assert ds.features.min() >= 0.0 and ds.features.max() <= 1.0
    assert set(np.unique(ds.labels)) <= {-1.0, 1.0}


def test_generate_fully_dense():
    ds = objectives.generate_synthetic(3, 50, 1.0, "pm1", seed=1)
    assert np.all(np.count_nonzero(ds.features, axis=1) == 3)


def test_generate_is_deterministic():
    a = objectives.generate_synthetic(20, 30, 0.2, "pm1", seed=7)
    b = objectives.generate_synthetic(20, 30, 0.2, "pm1", seed=7)
    assert objectives.dumps_dataset(a) == objectives.dumps_dataset(b)
    c = objectives.generate_synthetic(20, 30, 0.2, "pm1", seed=8)
    assert not np.array_equal(a.features, c.features)


def test_generate_zero_one_labels():
    pm = objectives.generate_synthetic(10, 200, 0.3, "pm1", seed=2)
    zo = objectives.generate_synthetic(10, 200, 0.3, "zero_one", seed=2)
    np.testing.assert_array_equal(zo.labels, (pm.labels + 1) / 2)


def test_generate_rejects_empty_support():
    with pytest.raises(ValueError, match="no nonzero"):
        objectives.generate_synthetic(3, 10, 0.1, "pm1")
    with pytest.raises(ValueError):
        objectives.generate_synthetic(3, 10, 0.0, "pm1")
    with pytest.raises(ValueError):
        objectives.generate_synthetic(3, 10, 0.5, "bogus")


def test_shared_u_labels_are_linearly_separable():
    ds = objectives.generate_synthetic(8, 300, 0.5, "pm1", seed=5, shared_u=True)
    # with one shared u the sign pattern is realized by a linear classifier: check via least squares margin
    w, *_ = np.linalg.lstsq(ds.features, ds.labels, rcond=None)
    assert np.mean(np.sign(ds.features @ w) == ds.labels) > 0.8


def test_dataset_validation():
    with pytest.raises(ValueError):
        Dataset(np.zeros((3, 2)), np.zeros(2))
    with pytest.raises(ValueError):
        Dataset(np.zeros(3), np.zeros(3))
    ds = Dataset(np.ones((2, 3)), np.array([1.0, -1.0]))
    assert len(ds) == ds.size == 2 and ds.dimension == 3
    samples = list(ds.samples)
    assert samples[1].label == -1.0 and samples[0].features.shape == (3,)


# --- losses and gradients ---------------------------------------------------


def _one(a, b):
    return Dataset(np.atleast_2d(np.asarray(a, dtype=float)), np.array([b], dtype=float))


def test_robust_loss_values():
    assert objectives.loss(ROBUST, np.zeros(2), _one([1.0, 0.0], 0.0), [0]) == 0.0
    assert objectives.loss(ROBUST, np.zeros(2), _one([1.0, 0.0], 2.0), [0]) == pytest.approx(math.log(3.0), abs=1e-15)


def test_logistic_loss_at_origin():
    assert objectives.loss(LOGISTIC, np.zeros(2), _one([1.0, 0.0], 1.0), [0]) == pytest.approx(math.log(2.0), abs=1e-15)


def test_gradient_worked_values():
    g = objectives.gradient(ROBUST, np.zeros(2), _one([1.0, 0.0], 2.0), [0])
    np.testing.assert_allclose(g, [-2.0 / 3.0, 0.0], atol=1e-15)
    g = objectives.gradient(LOGISTIC, np.zeros(2), _one([1.0, 0.0], 1.0), [0])
    np.testing.assert_allclose(g, [-0.5, 0.0], atol=1e-15)


def test_batch_validation(small_robust):
    with pytest.raises(ValueError, match="empty"):
        objectives.loss(ROBUST, np.zeros(5), small_robust, [])
    with pytest.raises(ValueError, match="logistic labels"):
        objectives.loss(LOGISTIC, np.zeros(5), small_robust, [0, 1, 2])
    with pytest.raises(IndexError):
        objectives.gradient(ROBUST, np.zeros(5), small_robust, [40])
    with pytest.raises(ValueError, match="shape"):
        objectives.gradient(ROBUST, np.zeros(4), small_robust, [0])


@pytest.mark.parametrize("kind", [ROBUST, LOGISTIC, SCE])
def test_gradient_matches_finite_differences(kind, small_robust, small_logistic, rng):
    ds = small_robust if kind is ROBUST else small_logistic
    for _ in range(10):
        x = rng.uniform(-2, 2, ds.dimension)
        batch = rng.integers(0, ds.size, 3)
        g = objectives.gradient(kind, x, ds, batch)
        fd = fd_gradient(lambda z: objectives.loss(kind, z, ds, batch), x)
        assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1e-8)


def test_logistic_is_stable_for_large_scores():
    ds = _one([1.0, 0.0], 1.0)
    for z in (-800.0, 800.0):
        x = np.array([z, 0.0])
        assert math.isfinite(objectives.loss(LOGISTIC, x, ds, [0]))
        assert np.all(np.isfinite(objectives.gradient(LOGISTIC, x, ds, [0])))
    assert objectives.loss(LOGISTIC, np.array([-800.0, 0.0]), ds, [0]) == pytest.approx(800.0)


def test_sigmoid_branches():
    z = np.array([-1000.0, -1.0, 0.0, 1.0, 1000.0])
    s = objectives.sigmoid(z)
    np.testing.assert_allclose(s + objectives.sigmoid(-z), 1.0, atol=1e-15)
    assert s[2] == 0.5 and s[0] == 0.0 and s[-1] == 1.0
    assert float(objectives.sigmoid(0.0)) == 0.5


def test_full_gradient_is_full_batch(small_robust, rng):
    x = rng.standard_normal(5)
    np.testing.assert_array_equal(
        objectives.full_gradient(ROBUST, x, small_robust),
        objectives.gradient(ROBUST, x, small_robust, np.arange(small_robust.size)),
    )
    one = Dataset(small_robust.features[:1], small_robust.labels[:1])
    np.testing.assert_allclose(
        objectives.full_gradient(ROBUST, x, one), objectives.gradient(ROBUST, x, small_robust, [0]), atol=1e-15
    )


def test_full_gradient_is_mean_of_per_sample(rng):
    ds = objectives.generate_synthetic(6, 10, 0.5, "zero_one", seed=9)
    x = rng.standard_normal(6)
    per = np.array([objectives.gradient(LOGISTIC, x, ds, [i]) for i in range(10)])
    np.testing.assert_allclose(per.mean(axis=0), objectives.full_gradient(LOGISTIC, x, ds), atol=1e-12)
    np.testing.assert_allclose(objectives.per_sample_gradients(LOGISTIC, x, ds, np.arange(10)), per, atol=1e-15)


@pytest.mark.parametrize("m", [1, 2, 3])
def test_minibatch_average_over_all_batches_is_unbiased(m, rng):
    ds = objectives.generate_synthetic(4, 7, 0.5, "pm1", seed=11)
    x = rng.standard_normal(4)
    batches = list(itertools.product(range(ds.size), repeat=m))
    mean = np.mean([objectives.gradient(ROBUST, x, ds, list(b)) for b in batches], axis=0)
    np.testing.assert_allclose(mean, objectives.full_gradient(ROBUST, x, ds), atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(
    seed=st.integers(0, 2**31 - 1),
    kind=st.sampled_from([ROBUST, LOGISTIC]),
    d=st.integers(1, 20),
)
def test_gradient_loss_consistency_property(seed, kind, d):
    rng = np.random.default_rng(seed)
    mode = "pm1" if kind is ROBUST else "zero_one"
    ds = objectives.generate_synthetic(d, 12, 1.0, mode, seed=seed % 1000)
    x = rng.uniform(-1.5, 1.5, d)
    batch = rng.integers(0, ds.size, int(rng.integers(1, 6)))
    g = objectives.gradient(kind, x, ds, batch)
    fd = fd_gradient(lambda z: objectives.loss(kind, z, ds, batch), x)
    assert np.linalg.norm(fd - g) <= 1e-6 * max(np.linalg.norm(g), 1e-6)


# --- smoothness parameters and diagnostics ----------------------------------


def test_smoothness_params_from_gammas():
    p = SmoothnessParams.from_gammas(1.0, 1.0, 1.0)
    assert p.L0 == math.sqrt(4.0) and p.L1 == math.sqrt(2.0)
    assert p.is_consistent()
    assert not SmoothnessParams(L0=1.0, L1=0.0).is_consistent()
    with pytest.raises(ValueError):
        SmoothnessParams(L0=0.0, L1=1.0)
    with pytest.raises(ValueError):
        SmoothnessParams(L0=1.0, L1=0.0, gamma0=0.0)


def test_cross_entropy_ratio_worked_value():
    rep = objectives.check_cross_entropy_smoothness([1.0, 0.0], 1.0, [np.zeros(2)])
    assert rep.max_ratio == pytest.approx(0.5, abs=1e-15)
    assert rep.bound == 1.0


def test_cross_entropy_ratio_vanishes_far_left():
    rep = objectives.check_cross_entropy_smoothness([1.0, 0.0], 1.0, [np.array([-40.0, 0.0])])
    assert rep.max_ratio < 1e-15


def test_cross_entropy_ratio_skips_zero_gradients():
    rep = objectives.check_cross_entropy_smoothness([0.0, 0.0], 1.0, [np.ones(2)])
    assert rep.empty and rep.skipped == 1 and rep.max_ratio is None


def test_local_smoothness_on_quadratic(rng):
    xs = [rng.standard_normal(3) for _ in range(6)]
    est = objectives.local_smoothness(lambda x: x, xs)
    assert len(est) == 5
    np.testing.assert_allclose([e for _, e in est], 1.0, atol=1e-12)
    assert len(objectives.local_smoothness(lambda x: x, xs[:2])) == 1
    # coincident iterates are skipped
    assert len(objectives.local_smoothness(lambda x: x, [xs[0], xs[0], xs[1]])) == 1
    with pytest.raises(ValueError):
        objectives.local_smoothness(lambda x: x, xs[:1])


def test_smoothness_tracks_gradient_norm_along_sgd_trajectory():
    # desk-scale setting: standard normal start, batch 500
    ds = objectives.generate_synthetic(100, 5000, 0.1, "pm1", seed=1)
    rng = np.random.default_rng(0)
    x = rng.standard_normal(100)
    xs = [x.copy()]
    for _ in range(40):
        batch = rng.integers(0, ds.size, 500)
        x = x - objectives.gradient(ROBUST, x, ds, batch)
        xs.append(x.copy())
    pairs = objectives.estimate_smoothness_along_trajectory(ROBUST, ds, xs)
    assert len(pairs) >= 20
    rho = spearmanr([g for g, _ in pairs], [s for _, s in pairs]).statistic
    assert rho > 0


# --- persistence --------------------------------------------------------------


def test_dataset_text_round_trip(tmp_path):
    ds = objectives.generate_synthetic(15, 25, 0.2, "zero_one", seed=3)
    path = tmp_path / "data.txt"
    objectives.save_dataset(ds, path)
    back = objectives.load_dataset(path)
    np.testing.assert_array_equal(back.features, ds.features)
    np.testing.assert_array_equal(back.labels, ds.labels)
    first = path.read_text().splitlines()[0]
    assert first == "15 25"


def test_dataset_text_rejects_bad_input():
    with pytest.raises(ValueError):
        objectives.loads_dataset("")
    with pytest.raises(ValueError):
        objectives.loads_dataset("2 2\n1 0:1.0\n")
    with pytest.raises(ValueError):
        objectives.loads_dataset("2 1\n1 5:1.0\n")
