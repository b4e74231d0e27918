"""
Ядерные методы адаптации доменов.

RBF-ядро с медианной эвристикой, MMD, TCA, BDA и ядро геодезического
потока (GFK). Используются как базовые методы сравнения и как
предобработка в сетке экспериментов.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, Optional, Tuple

import numpy as np
from scipy import linalg
from scipy.spatial.distance import cdist, pdist

from core.config import KernelConfig
from core.exceptions import (
    ConfigError, DimensionMismatchError, InsufficientDataError, NumericalError, UnknownClassError
)

logger = logging.getLogger(__name__)

# Классификатор для псевдометок: (train_X, train_y, test_X) -> метки
Classifier = Callable[[np.ndarray, np.ndarray, np.ndarray], np.ndarray]

_SIN_EPS = 1e-12


def _as_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def _check_dims(X: np.ndarray, Y: np.ndarray) -> None:
    if X.shape[1] != Y.shape[1]:
        raise DimensionMismatchError(
            f"feature dimensions differ: {X.shape[1]} vs {Y.shape[1]}",
            expected=int(X.shape[1]), actual=int(Y.shape[1])
        )


def rbf_kernel(X: np.ndarray, Y: np.ndarray, lengthscale: float) -> np.ndarray:
    """
    Гауссово ядро K_ij = exp(-||x_i - y_j||^2 / (2 l^2)).

    Raises:
        ConfigError: Если длина масштаба не положительна
    """
    if not lengthscale > 0:
        raise ConfigError(f"lengthscale must be positive, got {lengthscale}", lengthscale=lengthscale)
    X, Y = _as_matrix(X), _as_matrix(Y)
    _check_dims(X, Y)
    sq = cdist(X, Y, metric="sqeuclidean")
    return np.exp(-sq / (2.0 * lengthscale ** 2))


def median_heuristic(X: np.ndarray) -> float:
    """Медиана попарных евклидовых расстояний (1.0, если медиана нулевая)."""
    X = _as_matrix(X)
    if X.shape[0] < 2:
        raise InsufficientDataError(f"median heuristic needs at least 2 rows, got {X.shape[0]}")
    median = float(np.median(pdist(X)))
    if median <= 0.0:
        logger.warning("Median pairwise distance is zero; falling back to lengthscale 1.0")
        return 1.0
    return median


def mmd_squared(Xs: np.ndarray, Xt: np.ndarray, lengthscale: Optional[float] = None) -> float:
    """
    Смещенная (V-статистика) оценка MMD^2 между двумя выборками.

    Args:
        Xs: Выборка источника
        Xt: Выборка цели
        lengthscale: Длина масштаба; по умолчанию медианная эвристика на объединении

    Returns:
        Неотрицательное значение MMD^2
    """
    Xs, Xt = _as_matrix(Xs), _as_matrix(Xt)
    _check_dims(Xs, Xt)
    if lengthscale is None:
        lengthscale = median_heuristic(np.vstack([Xs, Xt]))
    value = (
        rbf_kernel(Xs, Xs, lengthscale).mean()
        + rbf_kernel(Xt, Xt, lengthscale).mean()
        - 2.0 * rbf_kernel(Xs, Xt, lengthscale).mean()
    )
    return max(float(value), 0.0)


def _mmd_weights(source_mask: np.ndarray, target_mask: np.ndarray) -> np.ndarray:
    e = np.zeros(source_mask.size, dtype=np.float64)
    e[source_mask] = 1.0 / source_mask.sum()
    e[target_mask] = -1.0 / target_mask.sum()
    return e


def marginal_mmd_matrix(n_source: int, n_target: int) -> np.ndarray:
    """M0 = e e^T с e = (1/n_s, ..., -1/n_t, ...)."""
    n = n_source + n_target
    source_mask = np.arange(n) < n_source
    e = _mmd_weights(source_mask, ~source_mask)
    return np.outer(e, e)


def class_mmd_matrix(source_labels: np.ndarray, target_labels: np.ndarray, class_id: int) -> Optional[np.ndarray]:
    """
    Условная MMD-матрица M_c по строкам класса c.

    Returns:
        Матрица или None, если класс отсутствует в одном из доменов
    """
    labels = np.concatenate([np.asarray(source_labels), np.asarray(target_labels)])
    n_source = len(source_labels)
    in_source = (np.arange(labels.size) < n_source) & (labels == class_id)
    in_target = (np.arange(labels.size) >= n_source) & (labels == class_id)
    if not in_source.any() or not in_target.any():
        return None
    e = _mmd_weights(in_source, in_target)
    return np.outer(e, e)


def centring_matrix(n: int) -> np.ndarray:
    return np.eye(n) - np.full((n, n), 1.0 / n)


@dataclass(frozen=True, eq=False)
class KernelDAProblem:
    """
    Задача ядерной адаптации: ядро, MMD-матрицы и регуляризация.

    Attributes:
        K: Ядерная матрица объединенной выборки
        M0: Маргинальная MMD-матрица
        H: Центрирующая матрица
        lam: Регуляризатор Фробениуса
        balance: Балансирующий коэффициент BDA
        m: Размерность вложения
        Mc: Условные MMD-матрицы по классам (только BDA)
    """
    K: np.ndarray
    M0: np.ndarray
    H: np.ndarray
    lam: float
    balance: float
    m: int
    features: np.ndarray
    n_source: int
    lengthscale: float
    Mc: Dict[int, np.ndarray] = field(default_factory=dict)
    n_classes: int = 0

    @classmethod
    def build(
        cls,
        Xs: np.ndarray,
        Xt: np.ndarray,
        config: Optional[KernelConfig] = None,
        m: Optional[int] = None,
        lengthscale: Optional[float] = None,
    ) -> "KernelDAProblem":
        config = config or KernelConfig()
        Xs, Xt = _as_matrix(Xs), _as_matrix(Xt)
        _check_dims(Xs, Xt)
        features = np.vstack([Xs, Xt])
        n = features.shape[0]
        # по умолчанию размерность уменьшается на единицу
        m = m if m is not None else max(Xs.shape[1] - 1, 1)
        if m < 1 or m >= n:
            raise ConfigError(f"embedding dimension must satisfy 1 <= m < {n}, got {m}", m=m, n=n)
        if lengthscale is None:
            lengthscale = config.lengthscale_scale * median_heuristic(features)
        K = rbf_kernel(features, features, lengthscale)
        return cls(
            K=0.5 * (K + K.T),
            M0=marginal_mmd_matrix(Xs.shape[0], Xt.shape[0]),
            H=centring_matrix(n),
            lam=config.lam,
            balance=config.balance,
            m=m,
            features=features,
            n_source=Xs.shape[0],
            lengthscale=lengthscale,
        )

    def mmd_matrix(self) -> np.ndarray:
        """M = (1 - mu) M0 + mu / C * sum_c M_c; без условных матриц возвращает M0."""
        if not self.Mc:
            return self.M0
        conditional = sum(self.Mc.values()) / self.n_classes
        return (1.0 - self.balance) * self.M0 + self.balance * conditional


@dataclass(frozen=True, eq=False)
class Embedding:
    """Вложение TCA/BDA и все, что нужно для внешнего применения."""
    projection: np.ndarray
    train_features: np.ndarray
    n_source: int
    lengthscale: float
    eigenvalues: np.ndarray
    embedded: np.ndarray
    method: str = "tca"

    @property
    def m(self) -> int:
        return self.projection.shape[1]

    @property
    def source(self) -> np.ndarray:
        return self.embedded[:self.n_source]

    @property
    def target(self) -> np.ndarray:
        return self.embedded[self.n_source:]

    def to_dict(self) -> Dict[str, Any]:
        return {
            "method": self.method,
            "m": self.m,
            "lengthscale": self.lengthscale,
            "n_source": self.n_source,
            "n_target": int(self.train_features.shape[0] - self.n_source),
            "eigenvalues": self.eigenvalues.tolist(),
            "projection": self.projection.tolist(),
        }


def _fix_signs(vectors: np.ndarray) -> np.ndarray:
    """Компонента с наибольшим модулем каждого вектора делается положительной."""
    pivots = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[pivots, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _solve_embedding(problem: KernelDAProblem, selection: str) -> Tuple[np.ndarray, np.ndarray]:
    """
    Решает (K M K + lam I) a = eta (K H K) a.

    Пучок решается в обращенном виде K H K a = nu (K M K + lam I) a,
    nu = 1 / eta: правая матрица положительно определена. Векторы
    нормируются так, что a^T K H K a = I.

    Returns:
        Проекция n x m и выбранные eta
    """
    K, M = problem.K, problem.mmd_matrix()
    n, m = K.shape[0], problem.m
    khk = K @ problem.H @ K
    kmk = K @ M @ K + problem.lam * np.eye(n)
    khk, kmk = 0.5 * (khk + khk.T), 0.5 * (kmk + kmk.T)
    try:
        if selection == "min_trace":
            nu, vectors = linalg.eigh(khk, kmk, subset_by_index=[n - m, n - 1])
            nu, vectors = nu[::-1], vectors[:, ::-1]
        else:
            nu, vectors = linalg.eigh(khk, kmk)
            positive = np.flatnonzero(nu > 1e-10 * max(float(nu.max()), 1e-300))
            chosen = positive[:m]
            nu, vectors = nu[chosen], vectors[:, chosen]
    except (linalg.LinAlgError, ValueError) as exc:
        raise NumericalError(f"generalized eigenproblem failed: {exc}")

    if nu.size < m or np.any(nu <= 0) or not np.all(np.isfinite(vectors)):
        raise NumericalError(
            f"only {int(np.sum(nu > 0))} admissible eigenvectors for m={m}", m=m
        )
    projection = _fix_signs(vectors / np.sqrt(nu))
    return projection, 1.0 / nu


def _embedding(problem: KernelDAProblem, selection: str, method: str) -> Embedding:
    projection, eta = _solve_embedding(problem, selection)
    return Embedding(
        projection=projection,
        train_features=problem.features,
        n_source=problem.n_source,
        lengthscale=problem.lengthscale,
        eigenvalues=eta,
        embedded=problem.K @ projection,
        method=method,
    )


def tca_fit(
    Xs: np.ndarray,
    Xt: np.ndarray,
    config: Optional[KernelConfig] = None,
    m: Optional[int] = None,
    lengthscale: Optional[float] = None,
) -> Embedding:
    """
    Transfer Component Analysis.

    Args:
        Xs: Признаки источника
        Xt: Признаки цели
        config: Гиперпараметры (lam, выбор собственных векторов)
        m: Размерность вложения (по умолчанию d - 1)
        lengthscale: Длина масштаба ядра (по умолчанию медианная эвристика, умноженная на lengthscale_scale)

    Returns:
        Вложение обучающих строк обоих доменов
    """
    config = config or KernelConfig()
    problem = KernelDAProblem.build(Xs, Xt, config, m, lengthscale)
    embedding = _embedding(problem, config.eigen_selection, "tca")
    logger.debug(f"TCA fitted: n={problem.K.shape[0]}, m={problem.m}, lengthscale={problem.lengthscale:.4g}")
    return embedding


def _default_classifier(train_X: np.ndarray, train_y: np.ndarray, test_X: np.ndarray) -> np.ndarray:
    from services.models import knn_predict

    return knn_predict(train_X, train_y, test_X, k=1)


def bda_fit(
    Xs: np.ndarray,
    ys: np.ndarray,
    Xt: np.ndarray,
    config: Optional[KernelConfig] = None,
    m: Optional[int] = None,
    classifier: Optional[Classifier] = None,
    initial_pseudo_labels: Optional[np.ndarray] = None,
    lengthscale: Optional[float] = None,
) -> Tuple[Embedding, np.ndarray]:
    """
    Balanced Distribution Adaptation.

    На каждой итерации строится вложение с M = (1 - mu) M0 + mu / C sum M_c,
    классификатор обучается на вложенном источнике и заново размечает цель.
    Классы, отсутствующие в псевдометках, пропускаются.

    Returns:
        Итоговое вложение и псевдометки цели

    Raises:
        UnknownClassError: Если начальные псевдометки содержат класс, которого нет в источнике
    """
    config = config or KernelConfig()
    classifier = classifier or _default_classifier
    ys = np.asarray(ys).astype(np.int64)
    classes = np.unique(ys)
    base = KernelDAProblem.build(Xs, Xt, config, m, lengthscale)

    pseudo = None
    if initial_pseudo_labels is not None:
        pseudo = np.asarray(initial_pseudo_labels).astype(np.int64)
        unknown = np.setdiff1d(pseudo, classes)
        if unknown.size:
            raise UnknownClassError(
                f"pseudo-labels contain classes absent in source: {unknown.tolist()}", classes=unknown.tolist()
            )

    embedding = None
    for iteration in range(config.bda_iters):
        conditional: Dict[int, np.ndarray] = {}
        if pseudo is not None:
            for class_id in classes:
                matrix = class_mmd_matrix(ys, pseudo, int(class_id))
                if matrix is None:
                    logger.debug(f"BDA iteration {iteration}: class {class_id} absent, skipped")
                    continue
                conditional[int(class_id)] = matrix
        problem = KernelDAProblem(
            K=base.K, M0=base.M0, H=base.H, lam=base.lam, balance=base.balance, m=base.m,
            features=base.features, n_source=base.n_source, lengthscale=base.lengthscale,
            Mc=conditional, n_classes=int(classes.size),
        )
        embedding = _embedding(problem, config.eigen_selection, "bda")
        pseudo = np.asarray(classifier(embedding.source, ys, embedding.target)).astype(np.int64)

    logger.debug(f"BDA finished after {config.bda_iters} iterations, balance={config.balance}")
    return embedding, pseudo


def embed_apply(embedding: Embedding, X: np.ndarray) -> np.ndarray:
    """Внешнее применение вложения: k(x, train_rows) @ projection."""
    X = _as_matrix(X)
    _check_dims(embedding.train_features, X)
    return rbf_kernel(X, embedding.train_features, embedding.lengthscale) @ embedding.projection


@dataclass(frozen=True, eq=False)
class GeodesicKernel:
    """
    Ядро геодезического потока x_i^T G x_j.

    Attributes:
        G: Симметричная неотрицательно определенная матрица d x d
        k: Размерность подпространств
        principal_angles: Главные углы между подпространствами
        source_basis: Базис источника, дополненный ортогональным дополнением (d x d)
        target_basis: Базис цели (d x k)
    """
    G: np.ndarray
    k: int
    principal_angles: np.ndarray
    source_basis: np.ndarray
    target_basis: np.ndarray
    start: np.ndarray
    direction: np.ndarray
    augmented: str = "source"

    def flow(self, t: float) -> np.ndarray:
        """Точка геодезической Phi(t) (d x k); Phi(0) и Phi(1) дают базисы доменов."""
        return self.start * np.cos(t * self.principal_angles) - self.direction * np.sin(t * self.principal_angles)

    def transform(self, X: np.ndarray) -> np.ndarray:
        """Признаки, в которых евклидово расстояние совпадает с метрикой G."""
        eigvals, eigvecs = np.linalg.eigh(self.G)
        return _as_matrix(X) @ (eigvecs * np.sqrt(np.clip(eigvals, 0.0, None)))

    def to_dict(self) -> Dict[str, Any]:
        return {
            "k": self.k,
            "principal_angles": self.principal_angles.tolist(),
            "G": self.G.tolist(),
            "augmented": self.augmented,
        }


def _pca_basis(X: np.ndarray, k: int) -> np.ndarray:
    centred = X - X.mean(axis=0)
    _, _, vt = np.linalg.svd(centred, full_matrices=False)
    return _fix_signs(vt[:k].T)


def _gfk_blocks(theta: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    small = theta < _SIN_EPS
    safe = np.where(small, 1.0, theta)
    two = 2.0 * safe
    lam1 = np.where(small, 2.0, 1.0 + np.sin(two) / two)
    lam2 = np.where(small, 0.0, (np.cos(two) - 1.0) / two)
    lam3 = np.where(small, 0.0, 1.0 - np.sin(two) / two)
    return lam1, lam2, lam3


def gfk(Xs: np.ndarray, Xt: np.ndarray, k: Optional[int] = None, config: Optional[KernelConfig] = None) -> GeodesicKernel:
    """
    Ядро геодезического потока между PCA-подпространствами доменов.

    Args:
        Xs: Признаки источника
        Xt: Признаки цели
        k: Размерность подпространства, 1 <= k < d / 2

    Raises:
        ConfigError: Если k вне допустимого диапазона
    """
    config = config or KernelConfig()
    k = k if k is not None else config.gfk_dim
    Xs, Xt = _as_matrix(Xs), _as_matrix(Xt)
    _check_dims(Xs, Xt)
    d = Xs.shape[1]
    if k < 1 or 2 * k >= d:
        raise ConfigError(f"GFK subspace dimension must satisfy 1 <= k < d/2, got k={k}, d={d}", k=k, d=d)

    ps = _pca_basis(Xs, k)
    pt = _pca_basis(Xt, k)
    complement = linalg.null_space(ps.T)
    source_basis = np.hstack([ps, complement])

    u1, gamma, vt = np.linalg.svd(ps.T @ pt)
    v = vt.T
    gamma = np.clip(gamma, 0.0, 1.0)
    theta = np.arccos(gamma)
    sigma = np.sin(theta)

    q1 = ps @ u1
    # R_s^T P_t = -U2 Sigma V^T
    projected = complement @ (complement.T @ (pt @ v))
    q2 = np.zeros_like(q1)
    moving = sigma >= _SIN_EPS
    q2[:, moving] = -projected[:, moving] / sigma[moving]

    lam1, lam2, lam3 = _gfk_blocks(theta)
    G = (
        (q1 * lam1) @ q1.T
        + (q1 * lam2) @ q2.T
        + (q2 * lam2) @ q1.T
        + (q2 * lam3) @ q2.T
    )
    G = 0.5 * (G + G.T)
    logger.debug(f"GFK principal angles: {np.round(theta, 6).tolist()}")
    return GeodesicKernel(
        G=G, k=k, principal_angles=theta, source_basis=source_basis, target_basis=pt,
        start=q1, direction=q2,
    )
