import numpy as np
import pytest
from scipy.integrate import trapezoid
from sklearn.decomposition import PCA

from core.config import KernelConfig
from core.exceptions import ConfigError, UnknownClassError
from services.kernel_da import (
    KernelDAProblem, bda_fit, centring_matrix, class_mmd_matrix, embed_apply, gfk,
    marginal_mmd_matrix, median_heuristic, mmd_squared, rbf_kernel, tca_fit
)


def blobs(seed, n_source=40, n_target=30, d=3, shift=2.0):
    rng = np.random.default_rng(seed)
    Xs = rng.normal(size=(n_source, d))
    Xt = rng.normal(size=(n_target, d)) * 1.5 + shift
    return Xs, Xt


def mmd_oracle(Xs, Xt, lengthscale):
    def k(a, b):
        return np.exp(-np.sum((a - b) ** 2) / (2.0 * lengthscale ** 2))

    ss = sum(k(a, b) for a in Xs for b in Xs) / len(Xs) ** 2
    tt = sum(k(a, b) for a in Xt for b in Xt) / len(Xt) ** 2
    st = sum(k(a, b) for a in Xs for b in Xt) / (len(Xs) * len(Xt))
    return ss + tt - 2.0 * st


def test_mmd_matches_double_loop():
    Xs, Xt = blobs(0, 25, 20)
    value = mmd_squared(Xs, Xt, lengthscale=1.7)
    assert value == pytest.approx(mmd_oracle(Xs, Xt, 1.7), rel=1e-10)


def test_mmd_default_lengthscale_and_identity():
    Xs, _ = blobs(1)
    assert mmd_squared(Xs, Xs) == pytest.approx(0.0, abs=1e-12)
    Xs, Xt = blobs(2)
    assert mmd_squared(Xs, Xt) > mmd_squared(Xs, Xs[::-1])


def test_rbf_kernel_rejects_bad_lengthscale():
    with pytest.raises(ConfigError):
        rbf_kernel(np.zeros((2, 2)), np.zeros((2, 2)), 0.0)


def test_median_heuristic_fallback():
    assert median_heuristic(np.ones((5, 2))) == 1.0


def test_mmd_matrices_have_zero_row_sums():
    M0 = marginal_mmd_matrix(4, 8)
    assert np.all(M0.sum(axis=1) == 0.0)
    source = np.array([0, 0, 1, 1])
    target = np.array([0, 1, 1, 0, 1, 0, 0, 1])
    for class_id in (0, 1):
        Mc = class_mmd_matrix(source, target, class_id)
        assert np.all(Mc.sum(axis=1) == 0.0)
    np.testing.assert_allclose(marginal_mmd_matrix(7, 5).sum(axis=1), 0.0, atol=1e-15)
    assert class_mmd_matrix(source, np.zeros(8, dtype=int), 1) is None


def test_tca_constraint_is_identity():
    Xs, Xt = blobs(3)
    config = KernelConfig()
    embedding = tca_fit(Xs, Xt, config, m=2)
    problem = KernelDAProblem.build(Xs, Xt, config, m=2, lengthscale=embedding.lengthscale)
    khk = problem.K @ problem.H @ problem.K
    gram = embedding.projection.T @ khk @ embedding.projection
    np.testing.assert_allclose(gram, np.eye(2), atol=1e-6)
    assert embedding.source.shape == (40, 2)
    assert embedding.target.shape == (30, 2)


def test_tca_beats_kernel_pca_on_its_objective():
    Xs, Xt = blobs(4, d=2)
    config = KernelConfig()
    embedding = tca_fit(Xs, Xt, config, m=1)
    problem = KernelDAProblem.build(Xs, Xt, config, m=1, lengthscale=embedding.lengthscale)
    K, H = problem.K, problem.H
    penalty = K @ problem.M0 @ K + problem.lam * np.eye(K.shape[0])

    # Ведущий вектор KHK при той же нормировке a^T KHK a = 1
    eigvals, eigvecs = np.linalg.eigh(K @ H @ K)
    kpca = eigvecs[:, -1:] / np.sqrt(eigvals[-1])

    tca_value = (embedding.projection.T @ penalty @ embedding.projection).item()
    kpca_value = (kpca.T @ penalty @ kpca).item()
    assert tca_value <= kpca_value * (1 + 1e-9)


def test_eigen_selection_variants():
    Xs, Xt = blobs(5)
    low = tca_fit(Xs, Xt, KernelConfig(eigen_selection="min_trace"), m=2)
    high = tca_fit(Xs, Xt, KernelConfig(eigen_selection="max_trace"), m=2)
    assert low.eigenvalues.max() <= high.eigenvalues.min()


def test_embed_apply_reproduces_training_rows():
    Xs, Xt = blobs(6)
    embedding = tca_fit(Xs, Xt, m=2)
    np.testing.assert_allclose(embed_apply(embedding, Xt), embedding.target, atol=1e-10)


def test_tca_is_deterministic():
    Xs, Xt = blobs(7)
    a = tca_fit(Xs, Xt, m=2)
    b = tca_fit(Xs, Xt, m=2)
    np.testing.assert_array_equal(a.projection, b.projection)


def test_bda_without_balance_is_tca():
    Xs, Xt = blobs(8)
    ys = np.repeat([0, 1], 20)
    config = KernelConfig(balance=0.0, bda_iters=2)
    embedding, pseudo = bda_fit(Xs, ys, Xt, config, m=2)
    reference = tca_fit(Xs, Xt, config, m=2)
    np.testing.assert_allclose(embedding.projection, reference.projection, atol=1e-10)
    assert pseudo.shape == (30,)
    assert set(np.unique(pseudo)) <= {0, 1}


def test_bda_calls_classifier_each_iteration():
    Xs, Xt = blobs(9)
    ys = np.repeat([0, 1], 20)
    calls = []

    def classifier(train_X, train_y, test_X):
        calls.append(test_X.shape)
        return np.zeros(test_X.shape[0], dtype=int)

    embedding, pseudo = bda_fit(Xs, ys, Xt, KernelConfig(bda_iters=3), m=2, classifier=classifier)
    assert len(calls) == 3
    assert np.all(pseudo == 0)
    assert embedding.method == "bda"


def test_bda_rejects_unknown_pseudo_labels():
    Xs, Xt = blobs(10)
    ys = np.repeat([0, 1], 20)
    with pytest.raises(UnknownClassError):
        bda_fit(Xs, ys, Xt, m=2, initial_pseudo_labels=np.full(30, 5))


def test_centring_matrix_annihilates_constants():
    H = centring_matrix(6)
    np.testing.assert_allclose(H @ np.ones(6), 0.0, atol=1e-15)


@pytest.mark.parametrize("d,k", [(3, 1), (5, 2)])
def test_gfk_matches_quadrature(d, k):
    Xs, Xt = blobs(11, 60, 50, d=d, shift=0.0)
    Xt = Xt @ np.linalg.qr(np.random.default_rng(12).normal(size=(d, d)))[0]
    kernel = gfk(Xs, Xt, k)

    t = np.linspace(0.0, 1.0, 4001)
    flows = np.stack([kernel.flow(s) @ kernel.flow(s).T for s in t])
    G = 2.0 * trapezoid(flows, t, axis=0)
    np.testing.assert_allclose(kernel.G, G, atol=1e-6 * np.abs(G).max())

    # Концы геодезической совпадают с PCA-подпространствами доменов
    ps = PCA(n_components=k).fit(Xs).components_.T
    pt = PCA(n_components=k).fit(Xt).components_.T
    np.testing.assert_allclose(kernel.flow(0.0) @ kernel.flow(0.0).T, ps @ ps.T, atol=1e-8)
    np.testing.assert_allclose(kernel.flow(1.0) @ kernel.flow(1.0).T, pt @ pt.T, atol=1e-8)


def test_gfk_is_positive_semidefinite():
    Xs, Xt = blobs(13, d=4)
    kernel = gfk(Xs, Xt, 1)
    np.testing.assert_allclose(kernel.G, kernel.G.T)
    assert np.linalg.eigvalsh(kernel.G).min() >= -1e-10
    Z = kernel.transform(Xs)
    diff = Xs[0] - Xs[1]
    assert np.sum((Z[0] - Z[1]) ** 2) == pytest.approx(diff @ kernel.G @ diff, rel=1e-8)


def test_gfk_identical_domains():
    Xs, _ = blobs(14, d=3)
    kernel = gfk(Xs, Xs, 1)
    np.testing.assert_allclose(kernel.principal_angles, 0.0, atol=1e-6)
    ps = kernel.flow(0.0)
    np.testing.assert_allclose(kernel.G, 2.0 * ps @ ps.T, atol=1e-8)


def test_gfk_rejects_large_subspace():
    Xs, Xt = blobs(15, d=2)
    with pytest.raises(ConfigError):
        gfk(Xs, Xt, 1)


def test_median_heuristic_on_a_line():
    assert median_heuristic(np.array([[0.0], [1.0], [3.0]])) == pytest.approx(2.0)


def test_rbf_kernel_at_sqrt_two_lengthscales():
    X = np.zeros((1, 2))
    Y = np.array([[1.0, 1.0]]) * 1.3
    assert rbf_kernel(X, Y, 1.3)[0, 0] == pytest.approx(np.exp(-1.0), rel=1e-12)


@pytest.mark.parametrize("distance,lengthscale", [(0.5, 1.0), (2.0, 0.7), (3.0, 3.0)])
def test_mmd_between_two_points(distance, lengthscale):
    a = np.array([[0.0, 0.0]])
    b = np.array([[distance, 0.0]])
    expected = 2.0 - 2.0 * np.exp(-distance ** 2 / (2.0 * lengthscale ** 2))
    assert mmd_squared(a, b, lengthscale) == pytest.approx(expected, rel=1e-12)
    assert mmd_squared(b, a, lengthscale) == pytest.approx(expected, rel=1e-12)


def test_mmd_ignores_row_order():
    Xs, Xt = blobs(16)
    rng = np.random.default_rng(17)
    value = mmd_squared(Xs, Xt, 1.2)
    shuffled = mmd_squared(Xs[rng.permutation(len(Xs))], Xt[rng.permutation(len(Xt))], 1.2)
    assert shuffled == pytest.approx(value, rel=1e-10)
    assert mmd_squared(Xt, Xs, 1.2) == pytest.approx(value, rel=1e-10)


def test_tca_on_identical_domains_embeds_them_identically():
    Xs, _ = blobs(18, n_source=25)
    embedding = tca_fit(Xs, Xs.copy(), m=2)
    assert mmd_squared(embedding.source, embedding.target, 1.0) <= 1e-8


def test_embed_apply_batch_equals_rows():
    Xs, Xt = blobs(19)
    embedding = tca_fit(Xs, Xt, m=2)
    X = np.random.default_rng(20).normal(size=(7, 3))
    batch = embed_apply(embedding, X)
    rows = np.vstack([embed_apply(embedding, x[None, :]) for x in X])
    np.testing.assert_allclose(batch, rows, atol=1e-12)


def test_lengthscale_scale_multiplies_median_heuristic():
    Xs, Xt = blobs(21)
    median = median_heuristic(np.vstack([Xs, Xt]))
    embedding = tca_fit(Xs, Xt, KernelConfig(lengthscale_scale=0.5), m=2)
    assert embedding.lengthscale == pytest.approx(0.5 * median)
    assert tca_fit(Xs, Xt, m=2).lengthscale == pytest.approx(median)
