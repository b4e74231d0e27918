"""
Модели, обучаемые после выравнивания: k-NN, гауссова смесь (EM) и KDE.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Any, Dict, List, Optional, Tuple, Union

import numpy as np
from scipy.special import logsumexp
from scipy.stats import iqr, multivariate_normal, norm
from sklearn.cluster import KMeans, kmeans_plusplus

from core.config import ModelConfig
from core.exceptions import (
    ComponentCollapseError, DimensionMismatchError, InsufficientDataError, ModelError
)

if TYPE_CHECKING:
    from services.dataset import LabeledDataset
    from services.kernel_da import GeodesicKernel

logger = logging.getLogger(__name__)

Metric = Union[None, np.ndarray, "GeodesicKernel"]

_COLLAPSE_WEIGHT = 1e-8
# Размер блока тестовых строк при расчете квадратичной формы
_CHUNK = 256


def _as_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def _metric_matrix(metric: Metric) -> Optional[np.ndarray]:
    if metric is None:
        return None
    return np.asarray(getattr(metric, "G", metric), dtype=np.float64)


def pairwise_distances(test_X: np.ndarray, train_X: np.ndarray, metric: Metric = None) -> np.ndarray:
    """
    Квадраты расстояний между тестовыми и обучающими строками.

    Для ядра геодезического потока считается (x - y)^T G (x - y).
    """
    G = _metric_matrix(metric)
    if G is None:
        diff_sq = np.empty((test_X.shape[0], train_X.shape[0]))
        for start in range(0, test_X.shape[0], _CHUNK):
            block = test_X[start:start + _CHUNK, None, :] - train_X[None, :, :]
            diff_sq[start:start + _CHUNK] = np.einsum("cnd,cnd->cn", block, block)
        return diff_sq

    if G.shape != (train_X.shape[1], train_X.shape[1]):
        raise DimensionMismatchError("metric matrix does not match feature dimension")
    out = np.empty((test_X.shape[0], train_X.shape[0]))
    for start in range(0, test_X.shape[0], _CHUNK):
        block = test_X[start:start + _CHUNK, None, :] - train_X[None, :, :]
        out[start:start + _CHUNK] = np.einsum("cnd,de,cne->cn", block, G, block)
    return out


@dataclass(frozen=True, eq=False)
class KnnModel:
    """
    Классификатор k ближайших соседей.

    Attributes:
        train_features: Обучающие признаки
        train_labels: Обучающие метки
        k: Число соседей
        metric: None для евклидовой метрики или матрица G / GeodesicKernel
    """
    train_features: np.ndarray
    train_labels: np.ndarray
    k: int = 1
    metric: Metric = None

    def __post_init__(self):
        features = _as_matrix(self.train_features)
        labels = np.asarray(self.train_labels).astype(np.int64)
        if features.shape[0] != labels.shape[0]:
            raise DimensionMismatchError("features and labels must have the same number of rows")
        if self.k < 1 or self.k > features.shape[0]:
            raise ModelError(
                f"k must satisfy 1 <= k <= n_train={features.shape[0]}, got {self.k}",
                k=self.k, n_train=int(features.shape[0])
            )
        object.__setattr__(self, "train_features", features)
        object.__setattr__(self, "train_labels", labels)

    def predict(self, X: np.ndarray) -> np.ndarray:
        X = _as_matrix(X)
        if X.shape[1] != self.train_features.shape[1]:
            raise DimensionMismatchError(
                f"expected {self.train_features.shape[1]} features, got {X.shape[1]}",
                expected=int(self.train_features.shape[1]), actual=int(X.shape[1])
            )
        distances = pairwise_distances(X, self.train_features, self.metric)
        # стабильная сортировка: при равенстве расстояний побеждает меньший индекс
        order = np.argsort(distances, axis=1, kind="stable")[:, :self.k]
        if self.k == 1:
            return self.train_labels[order[:, 0]]
        return np.array([self._vote(row) for row in order], dtype=np.int64)

    def _vote(self, neighbours: np.ndarray) -> int:
        labels = self.train_labels[neighbours]
        classes, counts = np.unique(labels, return_counts=True)
        tied = classes[counts == counts.max()]
        if tied.size == 1:
            return int(tied[0])
        first_index = [neighbours[labels == c].min() for c in tied]
        return int(tied[int(np.argmin(first_index))])


def knn_predict(
    train_X: np.ndarray, train_y: np.ndarray, test_X: np.ndarray, k: int = 1, metric: Metric = None
) -> np.ndarray:
    """Обучает k-NN на (train_X, train_y) и предсказывает метки test_X."""
    return KnnModel(train_X, train_y, k=k, metric=metric).predict(test_X)


def knn_fit_predict(
    train: "LabeledDataset", test_features: np.ndarray, k: int = 1, metric: Metric = None
) -> np.ndarray:
    """
    k-NN на размеченном наборе данных.

    Args:
        train: Размеченный обучающий набор
        test_features: Признаки тестовых строк
        k: Число соседей
        metric: None, матрица G или GeodesicKernel

    Returns:
        Предсказанные метки
    """
    return knn_predict(train.features, train.labels, test_features, k=k, metric=metric)


@dataclass(frozen=True, eq=False)
class GmmModel:
    """Гауссова смесь, обученная EM."""
    weights: np.ndarray
    means: np.ndarray
    covariances: np.ndarray
    log_likelihood_trace: List[float] = field(default_factory=list)
    converged: bool = False
    restarts: int = 0

    @property
    def n_components(self) -> int:
        return self.weights.size

    @property
    def d(self) -> int:
        return self.means.shape[1]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "weights": self.weights.tolist(),
            "means": self.means.tolist(),
            "covariances": self.covariances.tolist(),
            "log_likelihood_trace": list(self.log_likelihood_trace),
            "converged": self.converged,
            "restarts": self.restarts,
        }


def _component_log_prob(X: np.ndarray, weights: np.ndarray, means: np.ndarray, covariances: np.ndarray) -> np.ndarray:
    columns = [
        np.log(w) + np.atleast_1d(multivariate_normal(mean=mu, cov=cov).logpdf(X))
        for w, mu, cov in zip(weights, means, covariances)
    ]
    return np.column_stack(columns)


def _m_step(X: np.ndarray, resp: np.ndarray, ridge_eps: float):
    n, d = X.shape
    nk = resp.sum(axis=0)
    if np.any(nk / n < _COLLAPSE_WEIGHT):
        return None
    weights = nk / n
    means = (resp.T @ X) / nk[:, None]
    covariances = np.empty((nk.size, d, d))
    for c in range(nk.size):
        centred = X - means[c]
        cov = (resp[:, c, None] * centred).T @ centred / nk[c]
        cov = 0.5 * (cov + cov.T)
        ridge = ridge_eps * np.trace(cov) / d
        covariances[c] = cov + (ridge if ridge > 0 else ridge_eps) * np.eye(d)
    return weights, means, covariances


def _initial_responsibilities(X: np.ndarray, n_components: int, seed_seq: np.random.SeedSequence, config: ModelConfig):
    random_state = int(seed_seq.generate_state(1)[0])
    centers, _ = kmeans_plusplus(X, n_clusters=n_components, random_state=random_state)
    if config.gmm_kmeans_steps > 0:
        kmeans = KMeans(
            n_clusters=n_components, init=centers, n_init=1,
            max_iter=config.gmm_kmeans_steps, random_state=random_state
        ).fit(X)
        labels = kmeans.labels_
    else:
        labels = np.argmin(((X[:, None, :] - centers[None]) ** 2).sum(axis=2), axis=1)
    resp = np.zeros((X.shape[0], n_components))
    resp[np.arange(X.shape[0]), labels] = 1.0
    return resp


def gmm_fit(
    X: np.ndarray,
    n_components: int,
    seed: int,
    config: Optional[ModelConfig] = None,
    ridge_eps: float = 1e-6,
) -> GmmModel:
    """
    Обучает гауссову смесь EM-алгоритмом.

    Инициализация: k-means++ и несколько шагов k-means. При вырождении
    компоненты (вес < 1e-8) обучение перезапускается с новым подсидом.

    Args:
        X: Матрица признаков
        n_components: Число компонент C
        seed: Сид
        config: Параметры EM (max_iters, tol, restarts)
        ridge_eps: Относительная регуляризация ковариаций

    Returns:
        Обученная модель со следом логарифма правдоподобия

    Raises:
        InsufficientDataError: Если n < C * (d + 1)
        ComponentCollapseError: Если компонента вырождается после всех перезапусков
    """
    config = config or ModelConfig()
    X = _as_matrix(X)
    n, d = X.shape
    if n < n_components * (d + 1):
        raise InsufficientDataError(
            f"GMM with C={n_components} in d={d} needs at least {n_components * (d + 1)} rows, got {n}",
            n=int(n), required=int(n_components * (d + 1))
        )

    for attempt in range(config.gmm_restarts + 1):
        seed_seq = np.random.SeedSequence([seed, attempt])
        params = _m_step(X, _initial_responsibilities(X, n_components, seed_seq, config), ridge_eps)
        trace: List[float] = []
        converged = False
        for _ in range(config.gmm_max_iters):
            if params is None:
                break
            log_prob = _component_log_prob(X, *params)
            norm_const = logsumexp(log_prob, axis=1)
            log_likelihood = float(norm_const.sum())
            if trace and abs(log_likelihood - trace[-1]) < config.gmm_tol * abs(trace[-1]):
                trace.append(log_likelihood)
                converged = True
                break
            trace.append(log_likelihood)
            params = _m_step(X, np.exp(log_prob - norm_const[:, None]), ridge_eps)

        if params is None:
            logger.warning(f"GMM component collapsed on attempt {attempt}, restarting with a new sub-seed")
            continue
        if not converged:
            logger.warning(f"GMM did not converge in {config.gmm_max_iters} iterations")
        weights, means, covariances = params
        return GmmModel(
            weights=weights / weights.sum(),
            means=means,
            covariances=covariances,
            log_likelihood_trace=trace,
            converged=converged,
            restarts=attempt,
        )

    raise ComponentCollapseError(
        f"GMM component collapsed after {config.gmm_restarts} restarts", restarts=config.gmm_restarts
    )


def _check_model_dim(model: GmmModel, X: np.ndarray) -> np.ndarray:
    X = _as_matrix(X)
    if X.shape[1] != model.d:
        raise DimensionMismatchError(
            f"expected {model.d} features, got {X.shape[1]}", expected=model.d, actual=int(X.shape[1])
        )
    return X


def gmm_predict(model: GmmModel, X: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    """
    Апостериорные вероятности компонент и назначения (argmax).

    Returns:
        Кортеж (назначения, ответственности n x C)
    """
    X = _check_model_dim(model, X)
    log_prob = _component_log_prob(X, model.weights, model.means, model.covariances)
    resp = np.exp(log_prob - logsumexp(log_prob, axis=1, keepdims=True))
    return np.argmax(resp, axis=1), resp


def gmm_log_likelihood(model: GmmModel, X: np.ndarray) -> float:
    """Суммарный логарифм правдоподобия строк X под моделью."""
    X = _check_model_dim(model, X)
    return float(logsumexp(_component_log_prob(X, model.weights, model.means, model.covariances), axis=1).sum())


@dataclass(frozen=True, eq=False)
class KdeModel:
    """Одномерная гауссова KDE."""
    sample: np.ndarray
    bandwidth: float

    def density(self, grid: np.ndarray) -> np.ndarray:
        grid = np.asarray(grid, dtype=np.float64)
        u = (grid[:, None] - self.sample[None, :]) / self.bandwidth
        return norm.pdf(u).mean(axis=1) / self.bandwidth

    def grid(self, points: int, pad: float = 3.0) -> np.ndarray:
        """Равномерная сетка, покрывающая выборку с запасом pad ширин окна."""
        return np.linspace(
            self.sample.min() - pad * self.bandwidth, self.sample.max() + pad * self.bandwidth, points
        )


def silverman_bandwidth(sample: np.ndarray) -> float:
    """0.9 * min(sigma, IQR / 1.34) * n^(-1/5)."""
    sample = np.asarray(sample, dtype=np.float64)
    sigma = float(sample.std(ddof=1))
    spread = float(iqr(sample)) / 1.34
    scale = min(sigma, spread) if spread > 0 else sigma
    return 0.9 * scale * sample.size ** (-0.2)


def kde_fit(sample: np.ndarray, bandwidth: Optional[float] = None) -> KdeModel:
    """
    Raises:
        InsufficientDataError: Если в выборке меньше двух значений
        ModelError: Если выборка вырождена (нулевой разброс)
    """
    sample = np.asarray(sample, dtype=np.float64).ravel()
    if sample.size < 2:
        raise InsufficientDataError(f"KDE needs at least 2 values, got {sample.size}")
    if np.ptp(sample) == 0:
        raise ModelError("KDE sample has zero spread")
    bandwidth = bandwidth if bandwidth is not None else silverman_bandwidth(sample)
    if not bandwidth > 0:
        raise ModelError(f"KDE bandwidth must be positive, got {bandwidth}")
    return KdeModel(sample=sample, bandwidth=float(bandwidth))


def kde_1d(sample: np.ndarray, grid: np.ndarray, bandwidth: Optional[float] = None) -> np.ndarray:
    """Плотность гауссовой KDE в точках сетки (окно Сильвермана по умолчанию)."""
    return kde_fit(sample, bandwidth).density(grid)
