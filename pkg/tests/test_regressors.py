import json

import numpy as np
import pytest

from alschedule.regressors import (
    KINDS,
    MODEL_ROSTER,
    Committee,
    DimensionError,
    InsufficientDataError,
    NotFittedError,
    Regressor,
    build_committee,
    committee_stats,
)


@pytest.fixture
def linear_data():
    rng = np.random.default_rng(7)
    X = rng.normal(size=(20, 2))
    return X, 2 * X[:, 0] - 3 * X[:, 1] + 1


@pytest.fixture
def noisy():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(80, 4))
    y = X @ np.array([1.5, -2.0, 0.5, 0.0]) + rng.normal(0, 0.3, 80)
    return X, y


def test_ols_exact_recovery(linear_data):
    X, y = linear_data
    m = Regressor("ols").fit(X, y)
    np.testing.assert_allclose(m.coef_, [2, -3], atol=1e-6)
    assert m.intercept_ == pytest.approx(1, abs=1e-6)


def test_ols_residuals_orthogonal(noisy):
    X, y = noisy
    m = Regressor("ols").fit(X, y)
    r = y - m.predict(X)
    assert np.all(np.abs(X.T @ r) <= 1e-8)
    assert abs(r.sum()) <= 1e-8


def test_ols_singular_falls_back_with_warning():
    X = np.array([[1.0, 2.0], [2.0, 4.0], [3.0, 6.0], [4.0, 8.0]])
    with pytest.warns(RuntimeWarning, match="ridge"):
        m = Regressor("ols").fit(X, X[:, 0] * 2)
    assert np.all(np.isfinite(m.predict(X)))


def test_predict_dot_product():
    m = Regressor("ols")
    m.n_features = 2
    m._state = {"coef": np.array([1.0, 1.0]), "intercept": 0.0}
    assert m.predict(np.array([2.0, 3.0]))[0] == 5


def test_knn_k1_interpolates():
    rng = np.random.default_rng(2)
    X = rng.normal(size=(30, 3))
    y = rng.normal(size=30)
    m = Regressor("knn", {"k": 1}).fit(X, y)
    np.testing.assert_array_equal(m.predict(X), y)


@pytest.mark.parametrize("kind", KINDS)
def test_constant_target(kind):
    rng = np.random.default_rng(5)
    X = rng.normal(size=(25, 3))
    y = np.full(25, 4.25)
    m = Regressor(kind).fit(X, y, seed=1)
    np.testing.assert_allclose(m.predict(rng.normal(size=(10, 3))), 4.25, atol=1e-9)


def test_depth_zero_tree_predicts_mean(noisy):
    X, y = noisy
    m = Regressor("tree", {"max_depth": 0}).fit(X, y)
    np.testing.assert_allclose(m.predict(X), y.mean())


def test_ridge_shrinks_monotonically(noisy):
    X, y = noisy
    norms = [np.linalg.norm(Regressor("ridge", {"alpha": a}).fit(X, y).coef_)
             for a in (0.0, 0.1, 1.0, 10.0, 100.0, 1e4)]
    assert all(b <= a + 1e-12 for a, b in zip(norms, norms[1:]))


def test_lasso_zeroes_at_high_penalty(noisy):
    X, y = noisy
    m = Regressor("lasso", {"alpha": 100.0}).fit(X, y)
    assert np.all(m.coef_ == 0)
    assert m.intercept_ == pytest.approx(y.mean())


def test_lasso_small_penalty_close_to_ols(noisy):
    X, y = noisy
    lasso = Regressor("lasso", {"alpha": 1e-6}).fit(X, y)
    ols = Regressor("ols").fit(X, y)
    np.testing.assert_allclose(lasso.coef_, ols.coef_, atol=1e-4)


@pytest.mark.parametrize("kind", ["random_forest", "gradient_boosting", "tree"])
def test_tree_models_ignore_row_order(kind, noisy):
    X, y = noisy
    perm = np.random.default_rng(0).permutation(len(y))
    a = Regressor(kind).fit(X, y, seed=3)
    b = Regressor(kind).fit(X[perm], y[perm], seed=3)
    Q = np.random.default_rng(1).normal(size=(50, 4))
    np.testing.assert_array_equal(a.predict(Q), b.predict(Q))


@pytest.mark.parametrize("kind", ["random_forest", "gradient_boosting"])
def test_seed_determinism(kind, noisy):
    X, y = noisy
    a = Regressor(kind).fit(X, y, seed=9).predict(X)
    b = Regressor(kind).fit(X, y, seed=9).predict(X)
    np.testing.assert_array_equal(a, b)


def test_forest_seed_matters(noisy):
    X, y = noisy
    a = Regressor("random_forest").fit(X, y, seed=1).predict(X)
    b = Regressor("random_forest").fit(X, y, seed=2).predict(X)
    assert not np.array_equal(a, b)


def test_forest_train_error_below_noise_budget():
    from alschedule.data import SynthConfig, synth_pool_stream

    stream = synth_pool_stream(SynthConfig(T=1, n=200, holdout_size=10), seed=4)
    pool = stream.pools[0]
    y = stream.oracle(pool.keys())
    m = Regressor("random_forest").fit(pool.X, y, seed=0)
    assert np.mean((m.predict(pool.X) - y) ** 2) <= 1.5 * stream.noise_sd ** 2


def test_split_ties_prefer_lowest_feature():
    # Two identical columns: every split is tied, feature 0 must win.
    X = np.repeat(np.arange(8.0)[:, None], 2, axis=1)
    y = (X[:, 0] > 3).astype(float)
    m = Regressor("tree").fit(X, y)
    dump = json.loads(m.dump())
    used = {f for f in dump["nodes"]["feature"] if f >= 0}
    assert used == {0}


def test_errors(noisy):
    X, y = noisy
    with pytest.raises(NotFittedError):
        Regressor("ridge").predict(X)
    with pytest.raises(InsufficientDataError):
        Regressor("ridge").fit(X[:1], y[:1])
    m = Regressor("ridge").fit(X, y)
    with pytest.raises(DimensionError, match="expected 4 features, got 3"):
        m.predict(X[:, :3])
    with pytest.raises(ValueError):
        Regressor("mlp")


@pytest.mark.parametrize("kind", KINDS)
def test_dump_is_json(kind, noisy):
    X, y = noisy
    out = json.loads(Regressor(kind).fit(X, y).dump())
    assert out["kind"] == kind


def test_model_committee_roster(noisy):
    X, y = noisy
    com = build_committee("model", X, y, seed=0)
    assert len(com) == 6
    assert [m.kind for m in com.members] == list(MODEL_ROSTER)


def test_bootstrap_committee(noisy):
    X, y = noisy
    com = build_committee("bootstrap", X, y, seed=0, base_kind="random_forest", size=10)
    assert len(com) == 10
    assert all(m.kind == "random_forest" for m in com.members)
    preds = com.predictions(X[:5])
    assert len({tuple(p) for p in preds}) == 10


def test_committee_needs_two_samples():
    with pytest.raises(InsufficientDataError):
        build_committee("bootstrap", np.zeros((1, 2)), np.zeros(1), seed=0)


class _Const:
    def __init__(self, v):
        self.v = v

    def predict(self, X):
        return np.full(len(X), self.v, dtype=float)


def test_committee_stats_by_hand():
    X = np.zeros((1, 2))
    mean, var, _ = committee_stats(Committee([_Const(1), _Const(1), _Const(1)], "model"), X)
    assert (mean[0], var[0]) == (1, 0)
    mean, var, _ = committee_stats(Committee([_Const(0), _Const(2)], "model"), X)
    assert (mean[0], var[0]) == (1, 1)


def test_committee_stats_identical_members(noisy):
    X, y = noisy
    m = Regressor("random_forest").fit(X, y, seed=4)
    _, var, _ = committee_stats(Committee([m, m, m], "bootstrap"), X)
    assert np.all(var == 0)


def test_committee_variance_is_population_variance(noisy):
    X, y = noisy
    com = build_committee("bootstrap", X, y, seed=2, base_kind="knn", size=5)
    mean, var, preds = committee_stats(com, X)
    for i in range(len(X)):
        p = list(preds[:, i])
        mu = sum(p) / len(p)
        assert mean[i] == pytest.approx(mu, abs=1e-12)
        assert var[i] == pytest.approx(sum((v - mu) ** 2 for v in p) / len(p), abs=1e-12)
