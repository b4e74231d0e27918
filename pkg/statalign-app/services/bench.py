"""
Стенд воспроизведения экспериментов.

Сценарии: полная адаптация (case1), частичная адаптация (partial),
выравнивание как предобработка для TCA/BDA/GFK (preproc), мостовой
конвейер на синтетических данных (bridge) и двумерный пример (toy).
Каждый сценарий выполняется для нескольких сидов, результат собирается
в BenchReport.
"""

from __future__ import annotations

import json
import logging
import platform
import time
import zlib
from pathlib import Path
from typing import Any, Dict, List, Literal, Optional, Sequence, Tuple, Union

import numpy as np
import pandas as pd
import scipy
import sklearn
from dotenv import dotenv_values
from pydantic import BaseModel, Field, ValidationError, field_validator

from core.config import KernelConfig
from core.exceptions import ConfigError, InsufficientDataError, StatAlignError
from core.settings import get_settings
from services.alignment import SA_METHODS, align
from services.dataset import (
    LabeledDataset, downsample_class, load_dataset, remove_class, save_dataset
)
from services.kernel_da import bda_fit, embed_apply, gfk, tca_fit
from services.metrics import confusion, macro_f1, scoring_labels
from services.models import knn_predict
from services.simulator import generate_domain, load_structure_spec

logger = logging.getLogger(__name__)

CASES = ("case1", "partial", "preproc", "bridge", "toy")
DA_METHODS = ("none", "tca", "bda", "gfk")
APP_DIR = Path(__file__).resolve().parent.parent
CASES_DIR = APP_DIR / "cases"
PERFECT_THRESHOLD = 0.99
# Ошибки, которые помечают ячейку как неудачную, не прерывая сценарий
CELL_ERRORS = (StatAlignError, np.linalg.LinAlgError, ValueError)

CaseName = Literal["case1", "partial", "preproc", "bridge", "toy"]


def parse_counts(text: str) -> Dict[int, int]:
    """Разбирает '0:200,1:200' в {0: 200, 1: 200}."""
    counts: Dict[int, int] = {}
    for item in filter(None, (part.strip() for part in text.split(","))):
        try:
            class_id, count = item.split(":")
            counts[int(class_id)] = int(count)
        except ValueError:
            raise ConfigError(f"cannot parse class count '{item}' (expected class:count)", item=item)
    return counts


def parse_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def parse_grid(text: str) -> List[int]:
    """Разбирает сетку 'start:stop:step' (stop включительно)."""
    try:
        start, stop, step = (int(part) for part in text.split(":"))
    except ValueError:
        raise ConfigError(f"cannot parse grid '{text}' (expected start:stop:step)", grid=text)
    if step <= 0 or start > stop:
        raise ConfigError(f"empty grid '{text}'", grid=text)
    return list(range(start, stop + 1, step))


class CaseConfig(BaseModel):
    """Конфигурация сценария стенда."""

    case: CaseName = Field(..., description="Идентификатор сценария")
    source_spec: Optional[str] = Field(None, description="Файл спецификации источника")
    target_spec: Optional[str] = Field(None, description="Файл спецификации цели")
    source_data: Optional[str] = Field(None, description="CSV источника вместо симуляции")
    target_data: Optional[str] = Field(None, description="CSV обучающей выборки цели")
    test_data: Optional[str] = Field(None, description="CSV тестовой выборки цели")
    source_counts: Dict[int, int] = Field(default_factory=dict)
    target_counts: Dict[int, int] = Field(default_factory=dict)
    test_counts: Dict[int, int] = Field(default_factory=dict)
    remove_classes: List[int] = Field(default_factory=list, description="Классы, удаляемые из цели")
    downsample: Dict[int, int] = Field(default_factory=dict, description="Прореживание классов цели и теста")
    f1_labels: Literal["true", "union"] = Field(
        "true", description="Классы macro-F1: из теста или объединение с предсказанными"
    )
    sa_methods: List[str] = Field(default_factory=lambda: list(SA_METHODS))
    da_methods: List[str] = Field(default_factory=lambda: ["tca", "bda", "gfk"])
    da_base: str = Field("n_stand", description="Выравнивание перед DA вне режима сетки")
    grid: bool = Field(False, description="Полная сетка SA x DA")
    seed: int = Field(default_factory=lambda: get_settings().bench.seed, ge=0)
    repeats: int = Field(default_factory=lambda: get_settings().bench.repeats, ge=1)
    kernel: KernelConfig = Field(default_factory=lambda: get_settings().kernel)
    knn_k: int = Field(default_factory=lambda: get_settings().model.knn_k, ge=1)
    write_plotdata: bool = True
    bridge: Dict[str, Any] = Field(default_factory=dict, description="Параметры синтетических мостов")

    @field_validator("sa_methods")
    @classmethod
    def sa_methods_registered(cls, v):
        unknown = [m for m in v if m not in SA_METHODS]
        if unknown:
            raise ValueError(f"unknown alignment methods {unknown}; registered: {sorted(SA_METHODS)}")
        return v

    @field_validator("da_base")
    @classmethod
    def da_base_registered(cls, v):
        if v not in SA_METHODS:
            raise ValueError(f"unknown alignment method '{v}'")
        return v

    @field_validator("da_methods")
    @classmethod
    def da_methods_registered(cls, v):
        unknown = [m for m in v if m not in DA_METHODS]
        if unknown:
            raise ValueError(f"unknown DA methods {unknown}; registered: {list(DA_METHODS)}")
        return v

    @field_validator("source_counts", "target_counts", "test_counts", "downsample")
    @classmethod
    def counts_non_negative(cls, v):
        if any(count < 0 for count in v.values()):
            raise ValueError("class counts must be non-negative")
        return v

    def cells(self) -> List[Tuple[str, str]]:
        """Ячейки (выравнивание, DA) в порядке вывода."""
        if self.grid:
            return [(sa, da) for sa in self.sa_methods for da in ["none", *[d for d in self.da_methods if d != "none"]]]
        cells = [(sa, "none") for sa in self.sa_methods]
        cells += [(self.da_base, da) for da in self.da_methods if da != "none"]
        return cells

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> "CaseConfig":
        """
        Читает конфигурацию сценария формата KEY=VALUE.

        Относительные пути разрешаются от каталога файла.
        """
        path = Path(path)
        if not path.is_file():
            raise ConfigError(f"case config not found: {path}", path=str(path))
        values = {k: v for k, v in dotenv_values(path).items() if v not in (None, "")}
        base = path.resolve().parent

        def resolve(key: str) -> Optional[str]:
            return str((base / values[key]).resolve()) if key in values else None

        data: Dict[str, Any] = {"case": values.get("CASE")}
        for key in ("SOURCE_SPEC", "TARGET_SPEC", "SOURCE_DATA", "TARGET_DATA", "TEST_DATA"):
            data[key.lower()] = resolve(key)
        for key in ("SOURCE_COUNTS", "TARGET_COUNTS", "TEST_COUNTS", "DOWNSAMPLE"):
            if key in values:
                data[key.lower()] = parse_counts(values[key])
        if "REMOVE_CLASSES" in values:
            data["remove_classes"] = [int(c) for c in parse_list(values["REMOVE_CLASSES"])]
        for key in ("SA_METHODS", "DA_METHODS"):
            if key in values:
                data[key.lower()] = parse_list(values[key])
        for key in ("DA_BASE", "SEED", "REPEATS", "KNN_K", "GRID", "WRITE_PLOTDATA", "F1_LABELS"):
            if key in values:
                data[key.lower()] = values[key]
        kernel = get_settings().kernel.model_dump()
        for key, field_name in (("LAM", "lam"), ("BALANCE", "balance"), ("BDA_ITERS", "bda_iters"),
                                ("GFK_DIM", "gfk_dim"), ("EIGEN_SELECTION", "eigen_selection"),
                                ("LENGTHSCALE_SCALE", "lengthscale_scale")):
            if key in values:
                kernel[field_name] = values[key]
        data["kernel"] = kernel
        data["bridge"] = {k[len("BRIDGE_"):].lower(): v for k, v in values.items() if k.startswith("BRIDGE_")}
        try:
            return cls(**{k: v for k, v in data.items() if v is not None})
        except ValidationError as exc:
            raise ConfigError(f"{path}: invalid case config", errors=json.loads(exc.json()))


def default_case_config(case: str) -> CaseConfig:
    """Конфигурация сценария из каталога cases/."""
    if case not in CASES:
        raise ConfigError(f"unknown case '{case}'", choices=list(CASES))
    return CaseConfig.from_file(CASES_DIR / f"{case}.conf")


class MethodRow(BaseModel):
    """Результат одного метода в одном повторе."""

    method: str
    alignment: str
    da: str = "none"
    repeat: int
    seeds: Dict[str, int] = Field(default_factory=dict)
    macro_f1: Optional[float] = Field(None, ge=0.0, le=1.0)
    confusion: Optional[Dict[str, Any]] = None
    hyperparameters: Dict[str, Any] = Field(default_factory=dict)
    extras: Dict[str, Any] = Field(default_factory=dict)
    wall_time: float = 0.0
    error: Optional[str] = None


class MethodSummary(BaseModel):
    method: str
    mean: Optional[float] = None
    min: Optional[float] = None
    max: Optional[float] = None
    n_ok: int = 0
    n_failed: int = 0
    n_perfect: int = Field(0, description="Повторы с macro-F1 не ниже порога")


class BenchReport(BaseModel):
    """Отчет сценария: строки методов, сводка, конфигурация и окружение."""

    case: str
    rows: List[MethodRow] = Field(default_factory=list)
    summary: List[MethodSummary] = Field(default_factory=list)
    config: Dict[str, Any] = Field(default_factory=dict)
    metadata: Dict[str, Any] = Field(default_factory=dict)
    artifacts: Dict[str, str] = Field(default_factory=dict)

    def methods(self) -> List[str]:
        return list(dict.fromkeys(row.method for row in self.rows))

    def scores(self, method: str) -> List[Optional[float]]:
        """macro-F1 метода по повторам (None для неудачных)."""
        return [row.macro_f1 for row in sorted(self.rows, key=lambda r: r.repeat) if row.method == method]

    def summarise(self, threshold: float = PERFECT_THRESHOLD) -> "BenchReport":
        summary = []
        for method in self.methods():
            values = [s for s in self.scores(method) if s is not None]
            failed = sum(1 for row in self.rows if row.method == method and row.error)
            summary.append(MethodSummary(
                method=method,
                mean=float(np.mean(values)) if values else None,
                min=float(np.min(values)) if values else None,
                max=float(np.max(values)) if values else None,
                n_ok=len(values),
                n_failed=failed,
                n_perfect=sum(1 for s in values if s >= threshold),
            ))
        self.summary = summary
        return self


def method_seed(case_seed: int, method: str, repeat: int) -> int:
    """Сид ячейки, выведенный из (сид сценария, метод, повтор)."""
    sequence = np.random.SeedSequence([case_seed, repeat, zlib.crc32(method.encode())])
    return int(sequence.generate_state(1)[0])


def repeat_seeds(case_seed: int, repeat: int) -> Dict[str, int]:
    """Сиды данных одного повтора."""
    states = np.random.SeedSequence([case_seed, repeat]).generate_state(5)
    return dict(zip(("source", "target", "test", "downsample", "test_downsample"), (int(s) for s in states)))


def environment_metadata() -> Dict[str, Any]:
    return {
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
        "scikit-learn": sklearn.__version__,
        "app_version": get_settings().app.version,
    }


def _domain(spec_path: Optional[str], data_path: Optional[str], counts: Dict[int, int], seed: int, tag: str) -> LabeledDataset:
    if data_path:
        loaded = load_dataset(data_path)
        return loaded.with_features(loaded.features, domain_tag=tag)
    if not spec_path:
        raise ConfigError(f"no structure spec or dataset given for '{tag}'", domain=tag)
    return generate_domain(load_structure_spec(spec_path), counts, seed, domain_tag=tag)


def prepare_domains(config: CaseConfig, repeat: int) -> Tuple[LabeledDataset, LabeledDataset, LabeledDataset, Dict[str, int]]:
    """
    Генерирует (или загружает) источник, обучающую и тестовую выборки цели.

    Для частичной адаптации из цели и теста удаляются классы remove_classes
    и прореживаются классы downsample (тест со своим сидом), так что тест
    повторяет состав обучающей выборки цели.
    """
    seeds = repeat_seeds(config.seed, repeat)
    source = _domain(config.source_spec, config.source_data, config.source_counts, seeds["source"], "source")
    target = _domain(config.target_spec, config.target_data, config.target_counts, seeds["target"], "target")
    test = _domain(config.target_spec, config.test_data, config.test_counts, seeds["test"], "target_test")

    for class_id in config.remove_classes:
        target = remove_class(target, class_id)
        test = remove_class(test, class_id)
    for class_id, keep in sorted(config.downsample.items()):
        target = downsample_class(target, class_id, keep, seeds["downsample"] + class_id)
        test = downsample_class(test, class_id, keep, seeds["test_downsample"] + class_id)
    return source, target, test, seeds


def evaluate_cell(
    sa: str,
    da: str,
    source: LabeledDataset,
    target: LabeledDataset,
    test: LabeledDataset,
    config: CaseConfig,
) -> Tuple[np.ndarray, Dict[str, Any], Any]:
    """
    Выравнивание, необязательная ядерная адаптация и 1-NN на тесте цели.

    Returns:
        Предсказания для теста, гиперпараметры и результат выравнивания
    """
    aligned = align(sa, source.features, target.features, source.normal_rows, target.normal_rows,
                    get_settings().align)
    test_features = aligned.target_map.apply(test.features)
    hyper: Dict[str, Any] = {"alignment": sa, "knn_k": config.knn_k}

    if da == "none":
        predictions = knn_predict(aligned.source, source.labels, test_features, k=config.knn_k)
    elif da == "tca":
        embedding = tca_fit(aligned.source, aligned.target, config.kernel)
        predictions = knn_predict(embedding.source, source.labels, embed_apply(embedding, test_features), k=config.knn_k)
        hyper.update(lam=config.kernel.lam, m=embedding.m, lengthscale=embedding.lengthscale,
                     lengthscale_scale=config.kernel.lengthscale_scale,
                     eigen_selection=config.kernel.eigen_selection)
    elif da == "bda":
        embedding, _ = bda_fit(aligned.source, source.labels, aligned.target, config.kernel)
        predictions = knn_predict(embedding.source, source.labels, embed_apply(embedding, test_features), k=config.knn_k)
        hyper.update(lam=config.kernel.lam, balance=config.kernel.balance, m=embedding.m,
                     lengthscale=embedding.lengthscale, lengthscale_scale=config.kernel.lengthscale_scale,
                     bda_iters=config.kernel.bda_iters,
                     eigen_selection=config.kernel.eigen_selection)
    elif da == "gfk":
        kernel = gfk(aligned.source, aligned.target, config.kernel.gfk_dim, config.kernel)
        predictions = knn_predict(aligned.source, source.labels, test_features, k=config.knn_k, metric=kernel)
        hyper.update(gfk_k=kernel.k, principal_angles=kernel.principal_angles.tolist(),
                     augmented_basis=kernel.augmented)
    else:
        raise ConfigError(f"unknown DA method '{da}'", choices=list(DA_METHODS))
    return predictions, hyper, aligned


def cell_name(sa: str, da: str) -> str:
    return sa if da == "none" else f"{sa}+{da}"


def run_repeat(config: CaseConfig, repeat: int, plot_dir: Optional[Path] = None) -> List[MethodRow]:
    """Один повтор: общие данные, затем каждая ячейка изолированно."""
    source, target, test, seeds = prepare_domains(config, repeat)
    rows = []
    for sa, da in config.cells():
        name = cell_name(sa, da)
        started = time.perf_counter()
        row = MethodRow(method=name, alignment=sa, da=da, repeat=repeat, seeds=dict(seeds))
        try:
            predictions, hyper, aligned = evaluate_cell(sa, da, source, target, test, config)
            labels = scoring_labels(test.labels, predictions, config.f1_labels)
            row.macro_f1 = macro_f1(test.labels, predictions, labels)
            row.confusion = confusion(test.labels, predictions).to_dict()
            row.hyperparameters = dict(hyper, f1_labels=config.f1_labels)
            if plot_dir is not None and da == "none":
                _save_aligned(plot_dir, name, source, test, aligned)
        except CELL_ERRORS as exc:
            row.error = f"{type(exc).__name__}: {exc}"
            logger.warning(f"[{config.case}] repeat {repeat} {name} failed: {exc}")
        row.wall_time = time.perf_counter() - started
        logger.info(f"[{config.case}] repeat {repeat} {name}: macro-F1={row.macro_f1} ({row.wall_time:.2f}s)")
        rows.append(row)

    if plot_dir is not None:
        for tag, ds in (("raw_source", source), ("raw_target", target), ("raw_test", test)):
            save_dataset(ds, plot_dir / f"{tag}.csv")
    return rows


def _save_aligned(plot_dir: Path, name: str, source: LabeledDataset, test: LabeledDataset, aligned) -> None:
    save_dataset(source.with_features(aligned.source, f"{name}_source"), plot_dir / f"{name}_source.csv")
    save_dataset(test.with_features(aligned.target_map.apply(test.features), f"{name}_test"),
                 plot_dir / f"{name}_test.csv")


def _plot_dir(config: CaseConfig, out_dir: Optional[Union[str, Path]]) -> Optional[Path]:
    if out_dir is None or not config.write_plotdata:
        return None
    return Path(out_dir) / "data"


def run_case(config: CaseConfig, out_dir: Optional[Union[str, Path]] = None) -> BenchReport:
    """
    Выполняет сценарий и при заданном out_dir записывает отчет и данные для графиков.

    Args:
        config: Конфигурация сценария
        out_dir: Каталог результатов

    Returns:
        BenchReport со сводкой по методам
    """
    if config.case == "bridge":
        from services.bridge import run_bridge_style

        report = run_bridge_style(config, _plot_dir(config, out_dir))
    elif config.case == "toy":
        report = run_toy(config, _plot_dir(config, out_dir))
    else:
        plot_dir = _plot_dir(config, out_dir)
        rows: List[MethodRow] = []
        for repeat in range(config.repeats):
            rows.extend(run_repeat(config, repeat, plot_dir if repeat == 0 else None))
        report = BenchReport(case=config.case, rows=rows)
        if plot_dir is not None:
            report.artifacts = {p.stem: str(p) for p in sorted(plot_dir.glob("*.csv"))}

    report.config = config.model_dump()
    report.metadata = dict(
        environment_metadata(),
        gfk_augmented_basis="source",
        eigen_selection=config.kernel.eigen_selection,
        structure_conventions={
            "gaussian_second_parameter": "variance",
            "gamma_parameterisation": "shape-scale",
            "features_unit": "Hz",
        },
    )
    report.summarise()
    if out_dir is not None:
        write_report(report, out_dir)
        if config.write_plotdata:
            from services.plotdata import export_plotdata

            export_plotdata(report, Path(out_dir) / "plots", seed=config.seed)
    return report


def _require_case(config: CaseConfig, case: str) -> None:
    if config.case != case:
        raise ConfigError(f"expected a '{case}' config, got '{config.case}'", case=config.case)


def run_case1(config: Optional[CaseConfig] = None, out_dir: Optional[Union[str, Path]] = None) -> BenchReport:
    """Полная адаптация между двумя трехэтажными конструкциями."""
    config = config or default_case_config("case1")
    _require_case(config, "case1")
    return run_case(config, out_dir)


def run_case_partial(config: Optional[CaseConfig] = None, out_dir: Optional[Union[str, Path]] = None) -> BenchReport:
    """Частичная адаптация: в цели нормальное состояние и 10 выборок повреждения этажа 3."""
    config = config or default_case_config("partial")
    _require_case(config, "partial")
    return run_case(config, out_dir)


def run_case_preproc(config: Optional[CaseConfig] = None, out_dir: Optional[Union[str, Path]] = None) -> BenchReport:
    """Сетка выравнивание x {none, TCA, BDA, GFK} для 3- и 7-этажной конструкций."""
    config = config or default_case_config("preproc")
    _require_case(config, "preproc")
    return run_case(config, out_dir)


def write_report(report: BenchReport, out_dir: Union[str, Path]) -> Dict[str, Path]:
    """Записывает report.json, rows.csv и summary.csv."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = {
        "json": out_dir / "report.json",
        "rows": out_dir / "rows.csv",
        "summary": out_dir / "summary.csv",
    }
    paths["json"].write_text(report.model_dump_json(indent=2))
    pd.DataFrame([
        {
            "method": r.method, "alignment": r.alignment, "da": r.da, "repeat": r.repeat,
            "macro_f1": r.macro_f1, "wall_time": r.wall_time, "error": r.error,
            "seeds": json.dumps(r.seeds), "hyperparameters": json.dumps(r.hyperparameters),
        }
        for r in report.rows
    ]).to_csv(paths["rows"], index=False)
    pd.DataFrame([s.model_dump() for s in report.summary]).to_csv(paths["summary"], index=False)
    logger.info(f"Report for '{report.case}' written to {out_dir}")
    return paths


def load_report(path: Union[str, Path]) -> BenchReport:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"report not found: {path}", path=str(path))
    try:
        return BenchReport.model_validate_json(path.read_text())
    except ValidationError as exc:
        raise ConfigError(f"{path}: invalid report", errors=json.loads(exc.json()))


def sensitivity_table(ds: LabeledDataset, sizes: Sequence[int]) -> pd.DataFrame:
    """
    Моменты первых s строк каждого признака для всех размеров сетки.

    Returns:
        Таблица (size, feature, mean, std), std со знаменателем s

    Raises:
        InsufficientDataError: Если размер меньше 2 или больше n
        ConfigError: Если размеры не возрастают
    """
    sizes = [int(s) for s in sizes]
    if not sizes:
        raise ConfigError("sensitivity grid is empty")
    if any(b <= a for a, b in zip(sizes, sizes[1:])):
        raise ConfigError("sensitivity sizes must be strictly ascending", sizes=sizes)
    if sizes[0] < 2:
        raise InsufficientDataError(f"sample size must be at least 2, got {sizes[0]}")
    if sizes[-1] > ds.n:
        raise InsufficientDataError(
            f"largest size {sizes[-1]} exceeds dataset size {ds.n}", n=ds.n, size=sizes[-1]
        )
    records = []
    for size in sizes:
        window = ds.features[:size]
        means, stds = window.mean(axis=0), window.std(axis=0)
        for feature in range(ds.d):
            records.append({"size": size, "feature": f"f{feature}",
                            "mean": float(means[feature]), "std": float(stds[feature])})
    return pd.DataFrame.from_records(records, columns=["size", "feature", "mean", "std"])


def run_sensitivity(
    data: Union[LabeledDataset, str, Path],
    sizes: Optional[Sequence[int]] = None,
    seed: int = 0,
    out_path: Optional[Union[str, Path]] = None,
) -> pd.DataFrame:
    """
    Анализ чувствительности статистик к размеру выборки.

    Args:
        data: Набор данных, путь к CSV или путь к спецификации (*.conf):
            по спецификации генерируются нормальные выборки
        sizes: Размеры; по умолчанию сетка из настроек (10..500 с шагом 10)
        seed: Сид симуляции
        out_path: Необязательный путь CSV
    """
    sizes = list(sizes) if sizes is not None else parse_grid(get_settings().bench.sensitivity_grid)
    if isinstance(data, (str, Path)):
        path = Path(data)
        if path.suffix == ".conf":
            data = generate_domain(load_structure_spec(path), {0: max(sizes)}, seed, domain_tag=path.stem)
        else:
            data = load_dataset(path)
    table = sensitivity_table(data, sizes)
    if out_path is not None:
        Path(out_path).parent.mkdir(parents=True, exist_ok=True)
        table.to_csv(out_path, index=False, float_format="%.17g")
    return table


def generate_toy_partial(seed: int) -> Tuple[LabeledDataset, LabeledDataset]:
    """
    Двумерный пример частичной адаптации.

    Источник: три гауссовых кластера (класс 0: 20, 1: 8, 2: 8). Цель:
    классы 0 (20) и 1 (4), связанные с источником покомпонентным
    аффинным преобразованием.
    """
    rng = np.random.default_rng(np.random.SeedSequence([seed, 0]))
    centres = {0: (0.0, 0.0), 1: (3.0, 0.5), 2: (0.5, 3.0)}

    def clusters(counts: Dict[int, int]) -> Tuple[np.ndarray, np.ndarray]:
        features, labels = [], []
        for class_id, count in counts.items():
            features.append(rng.normal(centres[class_id], 0.4, size=(count, 2)))
            labels.append(np.full(count, class_id))
        return np.vstack(features), np.concatenate(labels)

    xs, ys = clusters({0: 20, 1: 8, 2: 8})
    xt, yt = clusters({0: 20, 1: 4})
    xt = xt * np.array([2.0, 0.5]) + np.array([10.0, -4.0])
    return (
        LabeledDataset(features=xs, labels=ys, domain_tag="toy_source"),
        LabeledDataset(features=xt, labels=yt, domain_tag="toy_target"),
    )


def run_toy(config: CaseConfig, plot_dir: Optional[Path] = None) -> BenchReport:
    """Пример частичной адаптации: N-, A-стандартизация и NCA с 1-NN, оценка на самой цели."""
    rows = []
    for repeat in range(config.repeats):
        seed = repeat_seeds(config.seed, repeat)["source"]
        source, target = generate_toy_partial(seed)
        for sa in config.sa_methods:
            started = time.perf_counter()
            row = MethodRow(method=sa, alignment=sa, repeat=repeat,
                            seeds={"data": seed})
            try:
                aligned = align(sa, source.features, target.features, source.normal_rows, target.normal_rows,
                                get_settings().align)
                predictions = knn_predict(aligned.source, source.labels, aligned.target, k=config.knn_k)
                row.macro_f1 = macro_f1(
                    target.labels, predictions, scoring_labels(target.labels, predictions, config.f1_labels)
                )
                row.confusion = confusion(target.labels, predictions).to_dict()
                row.hyperparameters = {"alignment": sa, "knn_k": config.knn_k}
                if plot_dir is not None and repeat == 0:
                    save_dataset(source.with_features(aligned.source, f"{sa}_source"), plot_dir / f"{sa}_source.csv")
                    save_dataset(target.with_features(aligned.target, f"{sa}_target"), plot_dir / f"{sa}_target.csv")
            except CELL_ERRORS as exc:
                row.error = f"{type(exc).__name__}: {exc}"
                logger.warning(f"[toy] repeat {repeat} {sa} failed: {exc}")
            row.wall_time = time.perf_counter() - started
            rows.append(row)
    report = BenchReport(case="toy", rows=rows)
    if plot_dir is not None:
        report.artifacts = {p.stem: str(p) for p in sorted(plot_dir.glob("*.csv"))}
    return report
