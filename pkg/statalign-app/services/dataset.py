"""
Модель данных: размеченные наборы признаков, чтение/запись CSV,
прореживание классов и отбор строк по ковариатам.

Класс 0 по соглашению обозначает нормальное состояние конструкции.
"""

from __future__ import annotations

import json
import logging
import operator
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel, Field

from core.exceptions import (
    DatasetError, DatasetParseError, UnknownClassError,
    UnknownCovariateError, EmptySelectionError, DimensionMismatchError
)

logger = logging.getLogger(__name__)

NORMAL_CLASS = 0
FLOAT_FORMAT = "%.17g"
_FEATURE_COLUMN = re.compile(r"^f(\d+)$")


def _frozen(array: np.ndarray) -> np.ndarray:
    """Возвращает копию массива, защищенную от записи."""
    out = np.array(array, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    """
    Неизменяемый набор признаков одного домена.

    Attributes:
        features: Матрица признаков n x d
        labels: Метки классов длины n или None
        domain_tag: Имя домена
        covariates: Именованные столбцы ковариат длины n (например, температура)
        index: Номера строк в исходном наборе, сохраняются при отборе
    """
    features: np.ndarray
    labels: Optional[np.ndarray] = None
    domain_tag: str = "domain"
    covariates: Dict[str, np.ndarray] = field(default_factory=dict)
    index: Optional[np.ndarray] = None

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1)
        if features.ndim != 2 or features.shape[0] < 1 or features.shape[1] < 1:
            raise DatasetError(
                f"features must be a non-empty n x d matrix, got shape {features.shape}",
                shape=list(features.shape)
            )
        if not np.all(np.isfinite(features)):
            bad_row, bad_col = np.argwhere(~np.isfinite(features))[0]
            raise DatasetError(
                f"non-finite feature value at row {bad_row}, column f{bad_col}",
                row=int(bad_row), column=f"f{bad_col}"
            )
        n = features.shape[0]
        object.__setattr__(self, "features", _frozen(features))

        if self.labels is not None:
            labels = np.asarray(self.labels)
            if labels.shape != (n,):
                raise DatasetError(
                    f"labels length {labels.size} does not match n={n}",
                    n=n, labels=int(labels.size)
                )
            if labels.size and (not np.all(np.equal(np.mod(labels, 1), 0)) or labels.min() < 0):
                raise DatasetError("labels must be non-negative integers")
            object.__setattr__(self, "labels", _frozen(labels.astype(np.int64)))

        covariates = {}
        for name, column in dict(self.covariates).items():
            column = np.asarray(column, dtype=np.float64)
            if column.shape != (n,):
                raise DatasetError(
                    f"covariate '{name}' has length {column.size}, expected {n}",
                    covariate=name
                )
            covariates[name] = _frozen(column)
        object.__setattr__(self, "covariates", covariates)

        index = np.arange(n) if self.index is None else np.asarray(self.index, dtype=np.int64)
        if index.shape != (n,):
            raise DatasetError("index length does not match n")
        object.__setattr__(self, "index", _frozen(index))

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    @property
    def classes(self) -> List[int]:
        if self.labels is None:
            return []
        return sorted(int(c) for c in np.unique(self.labels))

    def rows_of(self, class_id: int) -> np.ndarray:
        """Номера строк (позиции) заданного класса."""
        if self.labels is None:
            raise DatasetError("dataset has no labels")
        return np.flatnonzero(self.labels == class_id)

    @property
    def normal_rows(self) -> np.ndarray:
        return self.rows_of(NORMAL_CLASS)

    def subset(self, rows: Sequence[int], domain_tag: Optional[str] = None) -> "LabeledDataset":
        """Возвращает новый набор из указанных строк (в указанном порядке)."""
        rows = np.asarray(rows, dtype=np.int64)
        if rows.size == 0:
            raise EmptySelectionError("selection is empty", domain_tag=self.domain_tag)
        return LabeledDataset(
            features=self.features[rows],
            labels=None if self.labels is None else self.labels[rows],
            domain_tag=domain_tag or self.domain_tag,
            covariates={k: v[rows] for k, v in self.covariates.items()},
            index=self.index[rows],
        )

    def with_features(self, features: np.ndarray, domain_tag: Optional[str] = None) -> "LabeledDataset":
        """Тот же набор с замененной матрицей признаков (например, после выравнивания)."""
        features = np.asarray(features, dtype=np.float64)
        if features.shape[0] != self.n:
            raise DimensionMismatchError(
                f"replacement features have {features.shape[0]} rows, expected {self.n}"
            )
        return LabeledDataset(
            features=features,
            labels=self.labels,
            domain_tag=domain_tag or self.domain_tag,
            covariates=self.covariates,
            index=self.index,
        )

    def manifest(self) -> Dict:
        return {
            "domain_tag": self.domain_tag,
            "n": self.n,
            "d": self.d,
            "classes": self.classes,
            "covariates": sorted(self.covariates),
        }


@dataclass(frozen=True, eq=False)
class ClassIndex:
    """Списки строк по классам; списки не пересекаются и покрывают все размеченные строки."""
    rows: Dict[int, np.ndarray]

    def __getitem__(self, class_id: int) -> np.ndarray:
        return self.rows[class_id]

    def counts(self) -> Dict[int, int]:
        return {c: int(r.size) for c, r in self.rows.items()}


def class_index(ds: LabeledDataset) -> ClassIndex:
    """Строит индекс строк по классам."""
    if ds.labels is None:
        raise DatasetError("dataset has no labels", domain_tag=ds.domain_tag)
    return ClassIndex(rows={c: _frozen(ds.rows_of(c)) for c in ds.classes})


class DatasetSchema(BaseModel):
    """Отображение столбцов CSV на поля набора данных."""
    feature_columns: Optional[List[str]] = Field(
        None, description="Столбцы признаков; по умолчанию все столбцы вида f0..f{d-1}"
    )
    label_column: Optional[str] = Field("label", description="Столбец меток или None")
    covariate_columns: List[str] = Field(default=[], description="Столбцы ковариат")
    domain_column: Optional[str] = Field("domain", description="Столбец имени домена")
    domain_tag: Optional[str] = Field(None, description="Имя домена, если столбца нет")


def _parse_float_column(df: pd.DataFrame, column: str) -> np.ndarray:
    values = df[column].to_numpy(dtype=str)
    try:
        return values.astype(np.float64)
    except ValueError:
        for row, cell in enumerate(values):
            try:
                float(cell)
            except ValueError:
                raise DatasetParseError(
                    f"non-numeric cell '{cell}' at row {row}, column '{column}'",
                    row=row, column=column
                )
        raise


def load_dataset(path: Union[str, Path], schema: Optional[DatasetSchema] = None) -> LabeledDataset:
    """
    Загружает набор данных из CSV.

    Args:
        path: Путь к CSV-файлу
        schema: Отображение столбцов; по умолчанию каноническая схема

    Returns:
        Набор данных с сохраненным порядком строк

    Raises:
        DatasetError: Если файл отсутствует
        DatasetParseError: Если ячейка не разбирается как число
    """
    schema = schema or DatasetSchema()
    path = Path(path)
    if not path.is_file():
        raise DatasetError(f"dataset file not found: {path}", path=str(path))

    df = pd.read_csv(path, dtype=str, keep_default_na=False)
    columns = list(df.columns)

    if schema.feature_columns is None:
        feature_columns = sorted(
            (c for c in columns if _FEATURE_COLUMN.match(c)),
            key=lambda c: int(_FEATURE_COLUMN.match(c).group(1))
        )
    else:
        feature_columns = list(schema.feature_columns)
    if not feature_columns:
        raise DatasetParseError("no feature columns found", column=None)
    for column in feature_columns + schema.covariate_columns:
        if column not in columns:
            raise DatasetParseError(f"missing column '{column}'", column=column)

    features = np.column_stack([_parse_float_column(df, c) for c in feature_columns])
    for row, col in np.argwhere(~np.isfinite(features)):
        raise DatasetParseError(
            f"non-finite value at row {row}, column '{feature_columns[col]}'",
            row=int(row), column=feature_columns[col]
        )

    labels = None
    if schema.label_column and schema.label_column in columns:
        raw = df[schema.label_column].to_numpy(dtype=str)
        labels = np.empty(raw.size, dtype=np.int64)
        for row, cell in enumerate(raw):
            if cell.strip() == "":
                raise DatasetParseError(
                    f"missing label at row {row} (label column shorter than features)",
                    row=row, column=schema.label_column
                )
            try:
                labels[row] = int(cell)
            except ValueError:
                raise DatasetParseError(
                    f"non-integer label '{cell}' at row {row}",
                    row=row, column=schema.label_column
                )

    covariates = {c: _parse_float_column(df, c) for c in schema.covariate_columns}
    if not schema.covariate_columns:
        # Все прочие числовые столбцы считаем ковариатами
        reserved = set(feature_columns) | {schema.label_column, schema.domain_column, "label"}
        for column in columns:
            if column not in reserved:
                covariates[column] = _parse_float_column(df, column)

    domain_tag = schema.domain_tag
    if domain_tag is None and schema.domain_column in columns and len(df):
        domain_tag = str(df[schema.domain_column].iloc[0])

    logger.debug(f"Loaded {len(df)} rows x {len(feature_columns)} features from {path}")
    return LabeledDataset(
        features=features,
        labels=labels,
        domain_tag=domain_tag or path.stem,
        covariates=covariates,
    )


def save_dataset(ds: LabeledDataset, path: Union[str, Path]) -> Tuple[Path, Path]:
    """
    Сохраняет набор в CSV (17 значащих цифр) и JSON-манифест рядом.

    Returns:
        Пути к CSV и к манифесту
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    frame = pd.DataFrame(ds.features, columns=[f"f{j}" for j in range(ds.d)])
    if ds.labels is not None:
        frame["label"] = ds.labels
    for name, column in ds.covariates.items():
        frame[name] = column
    frame["domain"] = ds.domain_tag
    frame.to_csv(path, index=False, float_format=FLOAT_FORMAT)

    manifest_path = path.with_suffix(".json")
    manifest_path.write_text(json.dumps(ds.manifest(), indent=2))
    return path, manifest_path


def downsample_class(ds: LabeledDataset, class_id: int, keep: int, seed: int) -> LabeledDataset:
    """
    Оставляет ровно keep строк заданного класса (равномерно, без возвращения).

    Остальные строки не затрагиваются, порядок строк сохраняется.
    """
    rows = ds.rows_of(class_id)
    if rows.size == 0:
        raise UnknownClassError(f"class {class_id} not present", class_id=class_id)
    if keep < 0 or keep > rows.size:
        raise DatasetError(
            f"keep={keep} outside [0, {rows.size}] for class {class_id}",
            class_id=class_id, keep=keep, available=int(rows.size)
        )
    rng = np.random.default_rng(seed)
    chosen = rng.choice(rows, size=keep, replace=False)
    mask = ds.labels != class_id
    mask[chosen] = True
    return ds.subset(np.flatnonzero(mask))


_COMPARATORS: Dict[str, Callable] = {
    "<": operator.lt,
    "<=": operator.le,
    ">": operator.gt,
    ">=": operator.ge,
    "==": operator.eq,
}


@dataclass(frozen=True, eq=False)
class CovariatePredicate:
    """Пороговое условие на ковариату, например T < 0."""
    op: str
    threshold: float

    def __post_init__(self):
        if self.op not in _COMPARATORS:
            raise DatasetError(f"unsupported comparison '{self.op}'", op=self.op)

    def __call__(self, values: np.ndarray) -> np.ndarray:
        return _COMPARATORS[self.op](values, self.threshold)

    @classmethod
    def parse(cls, text: str) -> "CovariatePredicate":
        """Разбирает условие вида '<0' или '>= 2.5'."""
        match = re.fullmatch(r"\s*(<=|>=|==|<|>)\s*(\S+)\s*", text)
        if not match:
            raise DatasetError(f"cannot parse predicate '{text}'", predicate=text)
        return cls(match.group(1), float(match.group(2)))


def covariate_rows(
    ds: LabeledDataset,
    covariate: str,
    predicate: CovariatePredicate,
    max_n: Optional[int],
    seed: int,
    among: Optional[np.ndarray] = None,
) -> np.ndarray:
    """
    Позиции строк, удовлетворяющих условию, с равномерным прореживанием до max_n.

    Args:
        among: Ограничить поиск этими позициями (например, только нормальные строки)
    """
    if covariate not in ds.covariates:
        raise UnknownCovariateError(
            f"unknown covariate '{covariate}'", covariate=covariate,
            available=sorted(ds.covariates)
        )
    candidates = np.arange(ds.n) if among is None else np.asarray(among, dtype=np.int64)
    matches = candidates[predicate(ds.covariates[covariate][candidates])]
    if matches.size == 0:
        raise EmptySelectionError(
            f"no rows satisfy {covariate} {predicate.op} {predicate.threshold}",
            covariate=covariate
        )
    if max_n is not None and matches.size > max_n:
        rng = np.random.default_rng(seed)
        matches = np.sort(rng.choice(matches, size=max_n, replace=False))
    return matches


def select_by_covariate(
    ds: LabeledDataset,
    covariate: str,
    predicate: CovariatePredicate,
    max_n: Optional[int],
    seed: int,
) -> LabeledDataset:
    """Отбирает строки по пороговому условию на ковариату."""
    return ds.subset(covariate_rows(ds, covariate, predicate, max_n, seed))


def remove_class(ds: LabeledDataset, class_id: int) -> LabeledDataset:
    """Удаляет все строки класса (построение целевого домена для частичной адаптации)."""
    if ds.labels is None:
        raise DatasetError("dataset has no labels", domain_tag=ds.domain_tag)
    mask = ds.labels == class_id
    if not mask.any():
        raise UnknownClassError(f"class {class_id} not present", class_id=class_id)
    return ds.subset(np.flatnonzero(~mask))


def select_rows(ds: LabeledDataset, start: int, stop: Optional[int]) -> LabeledDataset:
    """Выбор диапазона строк по времени, например первые 200 измерений."""
    rows = np.arange(ds.n)[start:stop]
    if rows.size == 0:
        raise EmptySelectionError(f"row range [{start}:{stop}] is empty", start=start, stop=stop)
    return ds.subset(rows)


def concat_datasets(parts: Iterable[LabeledDataset], domain_tag: str) -> LabeledDataset:
    """Объединяет наборы с одинаковой размерностью в один домен."""
    parts = list(parts)
    if not parts:
        raise EmptySelectionError("nothing to concatenate")
    d = parts[0].d
    for part in parts:
        if part.d != d:
            raise DimensionMismatchError(
                f"cannot concatenate d={part.d} with d={d}", expected=d, actual=part.d
            )
    has_labels = all(p.labels is not None for p in parts)
    shared = set.intersection(*(set(p.covariates) for p in parts))
    offset = 0
    index = []
    for part in parts:
        index.append(np.arange(part.n) + offset)
        offset += part.n
    return LabeledDataset(
        features=np.vstack([p.features for p in parts]),
        labels=np.concatenate([p.labels for p in parts]) if has_labels else None,
        domain_tag=domain_tag,
        covariates={k: np.concatenate([p.covariates[k] for p in parts]) for k in shared},
        index=np.concatenate(index),
    )
