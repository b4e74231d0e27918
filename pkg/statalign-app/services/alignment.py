"""
Статистическое выравнивание доменов.

N-стандартизация, A-стандартизация, CORAL, выравнивание по нормальному
состоянию (NCA) и его корреляционный вариант (NCORAL). Все операции
возвращают выровненные матрицы и аффинные отображения каждого домена,
чтобы их можно было применить к отложенным строкам целевого домена.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, NamedTuple, Optional, Sequence

import numpy as np

from core.config import AlignmentConfig
from core.exceptions import (
    ConfigError, DimensionMismatchError, InsufficientDataError, NumericalError
)

logger = logging.getLogger(__name__)

# Допуск на отрицательные собственные значения, отличающий ошибку округления от сбоя
_NEGATIVE_EIG_TOL = 1e-8
_POST_CHECK_TOL = 1e-6


@dataclass(frozen=True, eq=False)
class MomentStats:
    """Средние и стандартные отклонения признаков (знаменатель n)."""
    mean: np.ndarray
    std: np.ndarray
    n_used: int

    def standardising_map(self, **fitted_on: Any) -> "AffineAlignment":
        """Отображение z = (x - mean) / std."""
        return AffineAlignment(scale=1.0 / self.std, shift=-self.mean / self.std, fitted_on=fitted_on)


@dataclass(frozen=True, eq=False)
class CovarianceEstimate:
    """Выборочная ковариация (знаменатель n-1) с добавкой ridge на диагонали."""
    matrix: np.ndarray
    n_used: int
    ridge: float

    @property
    def raw(self) -> np.ndarray:
        """Ковариация до регуляризации."""
        return self.matrix - self.ridge * np.eye(self.matrix.shape[0])


@dataclass(frozen=True, eq=False)
class AffineAlignment:
    """
    Аффинное отображение z = (x * scale + shift) @ mixing.

    Attributes:
        scale: Масштаб по признакам
        shift: Сдвиг по признакам
        mixing: Необязательная смешивающая матрица d x d
        fitted_on: Происхождение (метод, домен, какие строки)
    """
    scale: np.ndarray
    shift: np.ndarray
    mixing: Optional[np.ndarray] = None
    fitted_on: Dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        scale = np.atleast_1d(np.asarray(self.scale, dtype=np.float64))
        shift = np.atleast_1d(np.asarray(self.shift, dtype=np.float64))
        if scale.shape != shift.shape:
            raise DimensionMismatchError("scale and shift must have the same length")
        object.__setattr__(self, "scale", scale)
        object.__setattr__(self, "shift", shift)
        if self.mixing is not None:
            mixing = np.asarray(self.mixing, dtype=np.float64)
            if mixing.shape != (scale.size, scale.size) or not np.all(np.isfinite(mixing)):
                raise NumericalError("mixing must be a finite d x d matrix")
            object.__setattr__(self, "mixing", mixing)

    @property
    def d(self) -> int:
        return self.scale.size

    @property
    def condition_number(self) -> Optional[float]:
        if self.mixing is None:
            return None
        return float(np.linalg.cond(self.mixing))

    def apply(self, X: np.ndarray) -> np.ndarray:
        """Применяет отображение к строкам X."""
        X = np.asarray(X, dtype=np.float64)
        if X.ndim != 2 or X.shape[1] != self.d:
            raise DimensionMismatchError(
                f"expected {self.d} features, got {X.shape[-1]}", expected=self.d, actual=int(X.shape[-1])
            )
        Z = X * self.scale + self.shift
        if self.mixing is not None:
            Z = Z @ self.mixing
        return Z

    def to_dict(self) -> Dict[str, Any]:
        return {
            "scale": self.scale.tolist(),
            "shift": self.shift.tolist(),
            "mixing": None if self.mixing is None else self.mixing.tolist(),
            "condition_number": self.condition_number,
            "fitted_on": self.fitted_on,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "AffineAlignment":
        return cls(
            scale=np.asarray(data["scale"]),
            shift=np.asarray(data["shift"]),
            mixing=None if data.get("mixing") is None else np.asarray(data["mixing"]),
            fitted_on=dict(data.get("fitted_on", {})),
        )


class AlignmentResult(NamedTuple):
    """Результат выравнивания: матрицы обоих доменов и их отображения."""
    source: np.ndarray
    target: np.ndarray
    source_map: AffineAlignment
    target_map: AffineAlignment


def _as_matrix(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim == 1:
        X = X.reshape(-1, 1)
    return X


def _check_pair(Xs: np.ndarray, Xt: np.ndarray):
    Xs, Xt = _as_matrix(Xs), _as_matrix(Xt)
    if Xs.shape[1] != Xt.shape[1]:
        raise DimensionMismatchError(
            f"source has d={Xs.shape[1]}, target has d={Xt.shape[1]}",
            source_d=Xs.shape[1], target_d=Xt.shape[1]
        )
    return Xs, Xt


def _select(X: np.ndarray, rows: Optional[Sequence[int]]) -> np.ndarray:
    X = _as_matrix(X)
    if rows is None:
        return X
    return X[np.asarray(rows, dtype=np.int64)]


def fit_moments(
    X: np.ndarray,
    rows: Optional[Sequence[int]] = None,
    config: Optional[AlignmentConfig] = None,
) -> MomentStats:
    """
    Оценивает средние и стандартные отклонения признаков.

    Args:
        X: Матрица признаков
        rows: Необязательное подмножество строк
        config: Константы выравнивания (нижняя граница std)

    Returns:
        Статистики с std > 0

    Raises:
        InsufficientDataError: Если выбрано меньше двух строк
    """
    config = config or AlignmentConfig()
    sample = _select(X, rows)
    if sample.shape[0] < 2:
        raise InsufficientDataError(
            f"at least 2 rows are required for moments, got {sample.shape[0]}", n=int(sample.shape[0])
        )
    mean = sample.mean(axis=0)
    std = sample.std(axis=0)

    span = sample.max(axis=0) - sample.min(axis=0)
    degenerate = (std == 0) | (std < config.degenerate_ratio * span)
    if np.any(degenerate):
        logger.warning(
            f"Degenerate features {np.flatnonzero(degenerate).tolist()}: std floored at {config.std_floor}"
        )
        std = np.where(degenerate, np.maximum(std, config.std_floor), std)
    std = np.maximum(std, config.std_floor)
    return MomentStats(mean=mean, std=std, n_used=int(sample.shape[0]))


def fit_covariance(
    X: np.ndarray,
    rows: Optional[Sequence[int]] = None,
    config: Optional[AlignmentConfig] = None,
) -> CovarianceEstimate:
    """
    Выборочная ковариация с регуляризацией eps * tr(C) / d на диагонали.

    Raises:
        InsufficientDataError: Если выбрано меньше двух строк
    """
    config = config or AlignmentConfig()
    sample = _select(X, rows)
    n, d = sample.shape
    if n < 2:
        raise InsufficientDataError(f"at least 2 rows are required for covariance, got {n}", n=int(n))
    if n < d + 1:
        logger.warning(f"Covariance from n={n} rows in d={d} dimensions is singular; relying on ridge")

    centred = sample - sample.mean(axis=0)
    cov = centred.T @ centred / (n - 1)
    cov = 0.5 * (cov + cov.T)
    ridge = config.ridge_eps * np.trace(cov) / d
    if ridge <= 0.0:
        ridge = config.ridge_eps
    return CovarianceEstimate(matrix=cov + ridge * np.eye(d), n_used=int(n), ridge=float(ridge))


def _sym_power(estimate: CovarianceEstimate, power: float, floor_rel: float = 0.0) -> np.ndarray:
    """
    Симметричная степень ковариации через спектральное разложение.

    Собственные значения поднимаются до max(ridge, floor_rel * lambda_max).
    """
    eigvals, eigvecs = np.linalg.eigh(estimate.raw)
    if not np.all(np.isfinite(eigvals)):
        raise NumericalError("covariance eigendecomposition produced non-finite values")
    scale = max(float(np.abs(eigvals).max()), estimate.ridge)
    if eigvals.min() < -_NEGATIVE_EIG_TOL * scale:
        raise NumericalError(
            f"covariance has a negative eigenvalue {eigvals.min():.3e}", eigenvalue=float(eigvals.min())
        )
    floor = max(estimate.ridge, floor_rel * float(eigvals.max()))
    clipped = np.maximum(eigvals, floor)
    return (eigvecs * clipped ** power) @ eigvecs.T


def coral_mixing(
    source_cov: CovarianceEstimate, target_cov: CovarianceEstimate, floor_rel: float = 0.0
) -> np.ndarray:
    """
    Матрица A = C_s^{-1/2} C_t^{1/2}, решающая min ||A^T C_s A - C_t||_F.

    floor_rel > 0 ограничивает обусловленность A: собственные значения обеих
    ковариаций не опускаются ниже floor_rel от наибольшего.
    """
    return _sym_power(source_cov, -0.5, floor_rel) @ _sym_power(target_cov, 0.5, floor_rel)


def _floor_binds(estimate: CovarianceEstimate, floor_rel: float) -> bool:
    eigvals = np.linalg.eigvalsh(estimate.raw)
    return bool(eigvals.min() < floor_rel * eigvals.max())


def _relative_frobenius(a: np.ndarray, b: np.ndarray) -> float:
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(b), np.finfo(float).tiny))


def _check_covariance_match(Zs: np.ndarray, Zt: np.ndarray, method: str) -> float:
    cov_s = np.atleast_2d(np.cov(Zs, rowvar=False))
    cov_t = np.atleast_2d(np.cov(Zt, rowvar=False))
    gap = _relative_frobenius(cov_s, cov_t)
    if gap > _POST_CHECK_TOL:
        logger.warning(f"{method}: covariance mismatch after alignment {gap:.3e}")
    return gap


def n_standardise(Xs: np.ndarray, Xt: np.ndarray, config: Optional[AlignmentConfig] = None) -> AlignmentResult:
    """
    N-стандартизация: статистики по объединению X_s и X_t.

    Одно и то же отображение применяется к обоим доменам, поэтому
    относительное смещение и масштаб между доменами сохраняются.
    """
    Xs, Xt = _check_pair(Xs, Xt)
    stats = fit_moments(np.vstack([Xs, Xt]), config=config)
    mapping = stats.standardising_map(method="n_stand", domain="pooled", rows="all", n=stats.n_used)
    return AlignmentResult(mapping.apply(Xs), mapping.apply(Xt), mapping, mapping)


def a_standardise(Xs: np.ndarray, Xt: np.ndarray, config: Optional[AlignmentConfig] = None) -> AlignmentResult:
    """A-стандартизация: каждый домен по собственным моментам."""
    Xs, Xt = _check_pair(Xs, Xt)
    source_stats = fit_moments(Xs, config=config)
    target_stats = fit_moments(Xt, config=config)
    source_map = source_stats.standardising_map(method="a_stand", domain="source", rows="all", n=source_stats.n_used)
    target_map = target_stats.standardising_map(method="a_stand", domain="target", rows="all", n=target_stats.n_used)
    return AlignmentResult(source_map.apply(Xs), target_map.apply(Xt), source_map, target_map)


def coral(Xs: np.ndarray, Xt: np.ndarray, config: Optional[AlignmentConfig] = None) -> AlignmentResult:
    """
    CORAL в замкнутой форме: A-стандартизация обоих доменов, затем
    отбеливание источника и перекрашивание ковариацией цели.
    """
    standardised = a_standardise(Xs, Xt, config)
    Zs, Zt = standardised.source, standardised.target
    mixing = coral_mixing(fit_covariance(Zs, config=config), fit_covariance(Zt, config=config))

    base = standardised.source_map
    source_map = AffineAlignment(
        scale=base.scale, shift=base.shift, mixing=mixing,
        fitted_on={"method": "coral", "domain": "source", "rows": "all", "standardised_first": True},
    )
    target_map = AffineAlignment(
        scale=standardised.target_map.scale, shift=standardised.target_map.shift,
        fitted_on={"method": "coral", "domain": "target", "rows": "all"},
    )
    Zs = source_map.apply(_as_matrix(Xs))
    _check_covariance_match(Zs, Zt, "coral")
    return AlignmentResult(Zs, Zt, source_map, target_map)


def _normal_rows(rows: Sequence[int], domain: str) -> np.ndarray:
    rows = np.asarray(rows, dtype=np.int64)
    if rows.size < 2:
        raise InsufficientDataError(
            f"{domain} normal-condition subset needs at least 2 rows, got {rows.size}",
            domain=domain, n=int(rows.size)
        )
    return rows


def nca(
    Xs: np.ndarray,
    Xt: np.ndarray,
    normal_rows_s: Sequence[int],
    normal_rows_t: Sequence[int],
    config: Optional[AlignmentConfig] = None,
) -> AlignmentResult:
    """
    Выравнивание по нормальному состоянию.

    Источник стандартизуется по всем строкам; нормальное состояние цели
    переносится на моменты нормального состояния стандартизованного источника:
    z_t = (x_t - mu_tn) / sigma_tn * sigma_sn + mu_sn.
    """
    Xs, Xt = _check_pair(Xs, Xt)
    normal_s = _normal_rows(normal_rows_s, "source")
    normal_t = _normal_rows(normal_rows_t, "target")

    source_stats = fit_moments(Xs, config=config)
    source_map = source_stats.standardising_map(
        method="nca", domain="source", rows="all", n=source_stats.n_used
    )
    Zs = source_map.apply(Xs)

    source_normal = fit_moments(Zs, normal_s, config=config)
    target_normal = fit_moments(Xt, normal_t, config=config)
    ratio = source_normal.std / target_normal.std
    target_map = AffineAlignment(
        scale=ratio,
        shift=source_normal.mean - target_normal.mean * ratio,
        fitted_on={"method": "nca", "domain": "target", "rows": "normal", "n": target_normal.n_used},
    )
    Zt = target_map.apply(Xt)
    return AlignmentResult(Zs, Zt, source_map, target_map)


def ncoral(
    Xs: np.ndarray,
    Xt: np.ndarray,
    normal_rows_s: Sequence[int],
    normal_rows_t: Sequence[int],
    config: Optional[AlignmentConfig] = None,
) -> AlignmentResult:
    """
    NCORAL: сначала NCA, затем CORAL по строкам нормального состояния.

    Смешивание источника выполняется относительно среднего его нормального
    состояния, поэтому совпадение нормальных средних после NCA сохраняется.

    Ковариации нормального состояния частот почти вырождены (частоты
    масштабируются как sqrt(E / rho)), поэтому их собственные значения
    ограничиваются снизу долей normal_eig_floor от наибольшего. Для хорошо
    обусловленных ковариаций ограничение не срабатывает и ковариации
    совпадают точно.
    """
    config = config or AlignmentConfig()
    aligned = nca(Xs, Xt, normal_rows_s, normal_rows_t, config)
    normal_s = np.asarray(normal_rows_s, dtype=np.int64)
    normal_t = np.asarray(normal_rows_t, dtype=np.int64)

    cov_s = fit_covariance(aligned.source, normal_s, config)
    cov_t = fit_covariance(aligned.target, normal_t, config)
    mixing = coral_mixing(cov_s, cov_t, floor_rel=config.normal_eig_floor)
    floored = _floor_binds(cov_s, config.normal_eig_floor) or _floor_binds(cov_t, config.normal_eig_floor)
    logger.debug(f"ncoral mixing condition number {np.linalg.cond(mixing):.3g}")
    # (z - mu) A + mu == (z + mu A^{-1} - mu) A
    centre = aligned.source[normal_s].mean(axis=0)
    try:
        offset = np.linalg.solve(mixing.T, centre)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"ncoral mixing matrix is singular: {exc}")

    base = aligned.source_map
    source_map = AffineAlignment(
        scale=base.scale,
        shift=base.shift - centre + offset,
        mixing=mixing,
        fitted_on={"method": "ncoral", "domain": "source", "rows": "normal", "n": int(normal_s.size)},
    )
    Zs = source_map.apply(_as_matrix(Xs))
    if floored:
        logger.debug("ncoral: eigenvalue floor active, normal covariances matched approximately")
    else:
        _check_covariance_match(Zs[normal_s], aligned.target[normal_t], "ncoral")
    target_map = AffineAlignment(
        scale=aligned.target_map.scale, shift=aligned.target_map.shift,
        fitted_on=dict(aligned.target_map.fitted_on, method="ncoral"),
    )
    return AlignmentResult(Zs, aligned.target, source_map, target_map)


SA_METHODS: Dict[str, Callable[..., AlignmentResult]] = {
    "n_stand": n_standardise,
    "a_stand": a_standardise,
    "coral": coral,
    "nca": nca,
    "ncoral": ncoral,
}
NORMAL_CONDITION_METHODS = {"nca", "ncoral"}


def align(
    method: str,
    Xs: np.ndarray,
    Xt: np.ndarray,
    normal_rows_s: Optional[Sequence[int]] = None,
    normal_rows_t: Optional[Sequence[int]] = None,
    config: Optional[AlignmentConfig] = None,
) -> AlignmentResult:
    """
    Выполняет выравнивание указанным методом.

    Args:
        method: Одно из n_stand, a_stand, coral, nca, ncoral
        normal_rows_s: Строки нормального состояния источника (для nca/ncoral)
        normal_rows_t: Строки нормального состояния цели (для nca/ncoral)
    """
    if method not in SA_METHODS:
        raise ConfigError(f"unknown alignment method '{method}'", choices=sorted(SA_METHODS))
    if method in NORMAL_CONDITION_METHODS:
        if normal_rows_s is None or normal_rows_t is None:
            raise InsufficientDataError(f"{method} requires normal-condition rows for both domains")
        return SA_METHODS[method](Xs, Xt, normal_rows_s, normal_rows_t, config)
    return SA_METHODS[method](Xs, Xt, config)
