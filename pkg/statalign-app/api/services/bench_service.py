"""Сервис запуска симуляций и сценариев стенда из HTTP-слоя."""

import asyncio
import logging
from functools import partial
from pathlib import Path
from typing import List, Optional

import numpy as np

from core.exceptions import ConfigError
from core.settings import get_settings
from services.bench import (
    APP_DIR, CASES_DIR, BenchReport, CaseConfig, default_case_config, parse_grid, run_case, run_sensitivity
)
from services.dataset import LabeledDataset
from services.simulator import StructureSpec, generate_domain, load_structure_spec

from ..schemas import (
    BenchRequest, SensitivityRequest, SensitivityResponse, SensitivityRow,
    SimulateRequest, SimulateResponse
)

logger = logging.getLogger(__name__)

SPECS_DIR = APP_DIR / "specs"
# Поля CaseConfig с путями к файлам, которые запрос не может переопределить
_PATH_FIELDS = ("source_spec", "target_spec", "source_data", "target_data", "test_data")


def results_root() -> Path:
    """Каталог результатов из настроек; относительный путь берется от каталога приложения."""
    root = Path(get_settings().bench.out_dir)
    return (root if root.is_absolute() else APP_DIR / root).resolve()


def confine_path(name: str, root: Path, what: str) -> Path:
    """
    Разрешает путь запроса относительно root и запрещает выход за его пределы.

    Raises:
        ConfigError: Если путь указывает за пределы root
    """
    root = root.resolve()
    candidate = Path(name)
    resolved = (candidate if candidate.is_absolute() else root / candidate).resolve()
    if resolved != root and root not in resolved.parents:
        raise ConfigError(f"{what} must stay inside {root}, got {name}", path=name, root=str(root))
    return resolved


def resolve_spec_path(name: str) -> Path:
    """
    Находит файл спецификации: путь как есть, путь от каталога приложения
    или имя файла из specs/ (расширение .conf можно опустить).
    """
    for candidate in (Path(name), APP_DIR / name, SPECS_DIR / name, SPECS_DIR / f"{name}.conf"):
        if candidate.is_file():
            return candidate
    raise ConfigError(f"structure spec not found: {name}", path=name)


class BenchService:
    """Сервис для симуляции и стенда."""

    @staticmethod
    def _spec(spec: Optional[StructureSpec], spec_path: Optional[str]) -> StructureSpec:
        return spec if spec is not None else load_structure_spec(resolve_spec_path(spec_path))

    @staticmethod
    async def simulate(request: SimulateRequest) -> SimulateResponse:
        """
        Генерирует популяцию в отдельном потоке.

        Args:
            request: Спецификация, число выборок по классам и сид

        Returns:
            Манифест и строки набора
        """
        spec = BenchService._spec(request.spec, request.spec_path)
        loop = asyncio.get_running_loop()
        ds: LabeledDataset = await loop.run_in_executor(
            None,
            partial(generate_domain, spec, request.class_counts, request.seed, request.domain_tag),
        )
        return SimulateResponse(
            manifest=ds.manifest(),
            features=ds.features.tolist(),
            labels=ds.labels.tolist(),
            covariates={name: values.tolist() for name, values in ds.covariates.items()},
            spec_metadata=spec.metadata(),
        )

    @staticmethod
    def case_config(case: str, request: BenchRequest) -> CaseConfig:
        """Конфигурация сценария с примененными переопределениями запроса."""
        if request.config_path:
            config = CaseConfig.from_file(confine_path(request.config_path, CASES_DIR, "config_path"))
        else:
            config = default_case_config(case)
        if config.case != case:
            raise ConfigError(f"config describes case '{config.case}', not '{case}'", case=config.case)
        data = config.model_dump()
        blocked = sorted(set(request.overrides) & set(_PATH_FIELDS))
        if blocked:
            raise ConfigError(f"file paths cannot be overridden over HTTP: {blocked}", fields=blocked)
        data.update(request.overrides)
        for field_name in ("repeats", "seed", "sa_methods", "da_methods"):
            value = getattr(request, field_name)
            if value is not None:
                data[field_name] = value
        data["case"] = case
        return CaseConfig(**data)

    @staticmethod
    async def run_bench(case: str, request: BenchRequest) -> BenchReport:
        """Запускает сценарий в отдельном потоке и возвращает отчет."""
        config = BenchService.case_config(case, request)
        out_dir = confine_path(request.out_dir, results_root(), "out_dir") if request.out_dir else None
        logger.info(f"Running case '{case}' with {config.repeats} repeats (seed {config.seed})")
        loop = asyncio.get_running_loop()
        return await loop.run_in_executor(None, partial(run_case, config, out_dir))

    @staticmethod
    async def sensitivity(request: SensitivityRequest) -> SensitivityResponse:
        sizes: Optional[List[int]] = request.sizes
        if request.grid is not None:
            sizes = parse_grid(request.grid)
        if request.rows is not None:
            data = LabeledDataset(features=np.asarray(request.rows, dtype=np.float64), domain_tag="request")
        else:
            data = resolve_spec_path(request.spec_path)
        loop = asyncio.get_running_loop()
        table = await loop.run_in_executor(None, partial(run_sensitivity, data, sizes, request.seed))
        return SensitivityResponse(rows=[SensitivityRow(**record) for record in table.to_dict(orient="records")])
