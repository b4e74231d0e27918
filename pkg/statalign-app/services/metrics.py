"""
Метрики качества классификации на целевом домене.
"""

import logging
from dataclasses import dataclass
from typing import Any, Dict, Optional, Sequence

import numpy as np
from sklearn.metrics import confusion_matrix, f1_score

from core.exceptions import ConfigError, DimensionMismatchError, InsufficientDataError

logger = logging.getLogger(__name__)


def _check_labels(y_true: Sequence[int], y_pred: Sequence[int]):
    y_true = np.asarray(y_true).astype(np.int64).ravel()
    y_pred = np.asarray(y_pred).astype(np.int64).ravel()
    if y_true.size != y_pred.size:
        raise DimensionMismatchError(
            f"y_true has {y_true.size} labels, y_pred has {y_pred.size}",
            expected=int(y_true.size), actual=int(y_pred.size)
        )
    if y_true.size == 0:
        raise InsufficientDataError("cannot evaluate an empty prediction")
    return y_true, y_pred


@dataclass(frozen=True, eq=False)
class ConfusionMatrix:
    """
    Матрица ошибок.

    Attributes:
        counts: Матрица (истинный класс x предсказанный класс)
        classes: Идентификаторы классов строк и столбцов
    """
    counts: np.ndarray
    classes: np.ndarray

    @property
    def total(self) -> int:
        return int(self.counts.sum())

    def precision_recall(self, class_id: int):
        """Точность и полнота класса (0, если знаменатель нулевой)."""
        i = int(np.flatnonzero(self.classes == class_id)[0])
        tp = self.counts[i, i]
        predicted = self.counts[:, i].sum()
        actual = self.counts[i, :].sum()
        precision = tp / predicted if predicted else 0.0
        recall = tp / actual if actual else 0.0
        return float(precision), float(recall)

    def to_dict(self) -> Dict[str, Any]:
        return {"classes": self.classes.tolist(), "counts": self.counts.tolist()}


def confusion(y_true: Sequence[int], y_pred: Sequence[int], classes: Optional[Sequence[int]] = None) -> ConfusionMatrix:
    """
    Матрица ошибок по объединению классов y_true и y_pred.

    Args:
        y_true: Истинные метки
        y_pred: Предсказанные метки
        classes: Необязательный явный список классов

    Returns:
        ConfusionMatrix
    """
    y_true, y_pred = _check_labels(y_true, y_pred)
    if classes is None:
        classes = np.union1d(y_true, y_pred)
    classes = np.asarray(classes).astype(np.int64)
    counts = confusion_matrix(y_true, y_pred, labels=classes)
    return ConfusionMatrix(counts=counts.astype(np.int64), classes=classes)


def _f1_labels(y_true: np.ndarray, labels: Optional[Sequence[int]]) -> np.ndarray:
    if labels is None:
        return np.unique(y_true)
    labels = np.unique(np.asarray(labels).astype(np.int64))
    if labels.size == 0:
        raise InsufficientDataError("label set for F1 is empty")
    return labels


def per_class_f1(
    y_true: Sequence[int], y_pred: Sequence[int], labels: Optional[Sequence[int]] = None
) -> Dict[int, float]:
    """F1 каждого класса из labels (по умолчанию классы y_true); 0, если P + R = 0."""
    y_true, y_pred = _check_labels(y_true, y_pred)
    labels = _f1_labels(y_true, labels)
    scores = f1_score(y_true, y_pred, labels=labels, average=None, zero_division=0)
    return {int(class_id): float(score) for class_id, score in zip(labels, scores)}


def macro_f1(y_true: Sequence[int], y_pred: Sequence[int], labels: Optional[Sequence[int]] = None) -> float:
    """
    Макро-F1: невзвешенное среднее F1 по классам.

    По умолчанию усредняются классы из y_true, и классы, встречающиеся
    только в предсказаниях, в среднее не входят. Предсказание одного класса
    на сбалансированной двухклассовой выборке дает 1/3, а не 0.5.

    Args:
        y_true: Истинные метки
        y_pred: Предсказанные метки
        labels: Явный набор классов для усреднения, например объединение
            классов y_true и y_pred

    Raises:
        DimensionMismatchError: Если длины не совпадают
        InsufficientDataError: Если выборка пуста
    """
    y_true, y_pred = _check_labels(y_true, y_pred)
    labels = _f1_labels(y_true, labels)
    value = float(f1_score(y_true, y_pred, labels=labels, average="macro", zero_division=0))
    if labels.size == 2 and np.unique(y_pred).size == 1:
        logger.debug(
            f"Single-class prediction on a two-class target gives macro-F1 {value:.4f} "
            f"under the standard definition (0.5 is only an approximation)"
        )
    return value


def scoring_labels(y_true: Sequence[int], y_pred: Sequence[int], mode: str = "true") -> np.ndarray:
    """
    Классы, по которым усредняется macro-F1.

    mode="true": классы y_true. mode="union": объединение классов y_true и
    y_pred, так что предсказание класса, отсутствующего в цели, входит в
    среднее с F1 = 0.
    """
    y_true, y_pred = _check_labels(y_true, y_pred)
    if mode == "true":
        return np.unique(y_true)
    if mode == "union":
        return np.union1d(y_true, y_pred)
    raise ConfigError(f"unknown F1 label mode '{mode}'", choices=["true", "union"])
