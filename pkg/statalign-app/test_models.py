import numpy as np
import pytest
from scipy.integrate import trapezoid
from scipy.stats import iqr
from sklearn.metrics import adjusted_rand_score

from core.config import ModelConfig
from core.exceptions import ComponentCollapseError, InsufficientDataError, ModelError
from services.dataset import LabeledDataset
from services.kernel_da import gfk
from services.models import (
    GmmModel,
    gmm_fit, gmm_log_likelihood, gmm_predict, kde_1d, kde_fit, knn_fit_predict,
    knn_predict, silverman_bandwidth
)


def brute_force_knn(train_X, train_y, test_X, k, G=None):
    G = np.eye(train_X.shape[1]) if G is None else G
    predictions = []
    for x in test_X:
        distances = [((x - y) @ G @ (x - y), i) for i, y in enumerate(train_X)]
        neighbours = [i for _, i in sorted(distances)[:k]]
        votes = {}
        for i in neighbours:
            votes.setdefault(train_y[i], []).append(i)
        best = max(len(v) for v in votes.values())
        tied = [c for c, v in votes.items() if len(v) == best]
        predictions.append(min(tied, key=lambda c: min(votes[c])))
    return np.array(predictions)


@pytest.mark.parametrize("k", [1, 3, 4])
def test_knn_matches_brute_force(k):
    rng = np.random.default_rng(k)
    train_X = rng.normal(size=(60, 3))
    train_y = rng.integers(0, 3, size=60)
    test_X = rng.normal(size=(25, 3))
    np.testing.assert_array_equal(
        knn_predict(train_X, train_y, test_X, k=k), brute_force_knn(train_X, train_y, test_X, k)
    )


def test_knn_with_geodesic_metric():
    rng = np.random.default_rng(0)
    train_X = rng.normal(size=(50, 4))
    train_y = rng.integers(0, 2, size=50)
    test_X = rng.normal(size=(20, 4)) + 0.5
    kernel = gfk(train_X, test_X, 1)
    np.testing.assert_array_equal(
        knn_predict(train_X, train_y, test_X, k=1, metric=kernel),
        brute_force_knn(train_X, train_y, test_X, 1, kernel.G),
    )


def test_knn_tie_goes_to_smaller_index():
    train_X = np.array([[0.0], [0.0], [2.0]])
    train_y = np.array([5, 7, 7])
    assert knn_predict(train_X, train_y, np.array([[0.0]]), k=1)[0] == 5
    # Равные голоса: побеждает класс с ближайшим по индексу соседом
    assert knn_predict(train_X, train_y, np.array([[1.0]]), k=2)[0] == 5


def test_knn_fit_predict_on_dataset():
    ds = LabeledDataset(features=np.array([[0.0], [10.0]]), labels=np.array([0, 1]))
    np.testing.assert_array_equal(knn_fit_predict(ds, np.array([[1.0], [9.0]])), [0, 1])


def test_knn_rejects_large_k():
    with pytest.raises(ModelError):
        knn_predict(np.zeros((2, 1)), np.array([0, 1]), np.zeros((1, 1)), k=3)


def three_blobs(seed, n=80):
    rng = np.random.default_rng(seed)
    centres = np.array([[0.0, 0.0], [10.0, 0.0], [0.0, 10.0]])
    labels = np.repeat(np.arange(3), n)
    return centres[labels] + rng.normal(size=(3 * n, 2)), labels


def test_gmm_recovers_separated_clusters():
    X, labels = three_blobs(1)
    model = gmm_fit(X, 3, seed=0)
    assignments, resp = gmm_predict(model, X)
    assert adjusted_rand_score(labels, assignments) == pytest.approx(1.0)
    np.testing.assert_allclose(resp.sum(axis=1), 1.0)
    assert model.converged
    np.testing.assert_allclose(model.weights.sum(), 1.0)


def test_gmm_log_likelihood_is_monotone():
    X, _ = three_blobs(2, n=40)
    X = X + np.random.default_rng(3).normal(scale=3.0, size=X.shape)
    model = gmm_fit(X, 3, seed=4)
    trace = np.asarray(model.log_likelihood_trace)
    steps = np.diff(trace)
    assert np.all(steps >= -1e-8 * np.abs(trace[:-1]))
    assert gmm_log_likelihood(model, X) == pytest.approx(trace[-1], rel=1e-10)


def test_gmm_single_component_is_sample_moments():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(200, 3)) @ np.array([[2.0, 0.3, 0.0], [0.0, 1.0, 0.5], [0.0, 0.0, 0.7]])
    model = gmm_fit(X, 1, seed=0)
    cov = np.cov(X, rowvar=False, bias=True)
    ridge = 1e-6 * np.trace(cov) / 3
    np.testing.assert_allclose(model.means[0], X.mean(axis=0), atol=1e-12)
    np.testing.assert_allclose(model.covariances[0], cov + ridge * np.eye(3), atol=1e-10)


def test_gmm_is_deterministic_per_seed():
    X, _ = three_blobs(6, n=30)
    a = gmm_fit(X, 3, seed=9)
    b = gmm_fit(X, 3, seed=9)
    np.testing.assert_array_equal(a.means, b.means)
    assert a.log_likelihood_trace == b.log_likelihood_trace


def test_gmm_errors():
    with pytest.raises(InsufficientDataError):
        gmm_fit(np.zeros((5, 2)), 3, seed=0)
    config = ModelConfig(gmm_kmeans_steps=0, gmm_restarts=2)
    with pytest.raises(ComponentCollapseError):
        gmm_fit(np.ones((20, 1)), 2, seed=0, config=config)


def test_kde_integrates_to_one():
    sample = np.random.default_rng(7).normal(loc=4.0, scale=0.2, size=150)
    model = kde_fit(sample)
    grid = model.grid(4000, pad=8.0)
    assert trapezoid(model.density(grid), grid) == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(kde_1d(sample, grid), model.density(grid))


def test_silverman_bandwidth():
    sample = np.random.default_rng(8).normal(size=100)
    expected = 0.9 * min(sample.std(ddof=1), iqr(sample) / 1.34) * 100 ** -0.2
    assert silverman_bandwidth(sample) == pytest.approx(expected)
    # Нулевой IQR: используется стандартное отклонение
    spiky = np.array([0.0] * 10 + [1.0])
    assert silverman_bandwidth(spiky) == pytest.approx(0.9 * spiky.std(ddof=1) * 11 ** -0.2)


def test_kde_errors():
    with pytest.raises(InsufficientDataError):
        kde_fit([1.0])
    with pytest.raises(ModelError):
        kde_fit([2.0, 2.0, 2.0])


def two_blob_model(weights=(0.5, 0.5)):
    return GmmModel(
        weights=np.asarray(weights, dtype=float),
        means=np.array([[0.0, 0.0], [10.0, 0.0]]),
        covariances=np.stack([np.eye(2), np.eye(2)]),
    )


def test_gmm_predict_at_component_means():
    labels, resp = gmm_predict(two_blob_model(), np.array([[0.0, 0.0], [10.0, 0.0]]))
    np.testing.assert_array_equal(labels, [0, 1])
    assert resp[0, 0] > 0.999
    assert resp[1, 1] > 0.999
    np.testing.assert_allclose(resp.sum(axis=1), 1.0)


def test_gmm_predict_halfway_is_a_coin_flip():
    _, resp = gmm_predict(two_blob_model(), np.array([[5.0, 3.0]]))
    np.testing.assert_allclose(resp, [[0.5, 0.5]], atol=1e-12)


def test_gmm_predict_ignores_weight_scale():
    X = np.random.default_rng(9).normal(scale=4.0, size=(30, 2)) + np.array([5.0, 0.0])
    _, resp = gmm_predict(two_blob_model((0.3, 0.7)), X)
    _, scaled = gmm_predict(two_blob_model((3.0, 7.0)), X)
    np.testing.assert_allclose(scaled, resp, atol=1e-12)


def test_kde_is_symmetric_for_a_symmetric_sample():
    model = kde_fit([-1.0, 1.0], bandwidth=0.8)
    grid = np.linspace(-4.0, 4.0, 81)
    np.testing.assert_allclose(model.density(grid), model.density(-grid), atol=1e-15)
    assert model.density(np.array([0.0]))[0] < model.density(np.array([1.0]))[0]
