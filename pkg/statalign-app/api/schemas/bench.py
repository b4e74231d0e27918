from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator


class BenchRequest(BaseModel):
    """
    Параметры запуска сценария.

    Без config_path берется конфигурация из cases/; остальные поля
    переопределяют ее значения. Пути к файлам данных через overrides
    не принимаются.
    """
    config_path: Optional[str] = Field(None, description="Файл конфигурации сценария внутри cases/")
    repeats: Optional[int] = Field(None, ge=1, description="Число повторов")
    seed: Optional[int] = Field(None, ge=0, description="Сид сценария")
    sa_methods: Optional[List[str]] = Field(None, description="Методы выравнивания")
    da_methods: Optional[List[str]] = Field(None, description="Методы ядерной адаптации")
    overrides: Dict = Field(default_factory=dict, description="Прочие поля CaseConfig")
    out_dir: Optional[str] = Field(
        None, description="Каталог для отчета и данных графиков внутри каталога результатов (STATALIGN_BENCH_OUT_DIR)"
    )


class SensitivityRequest(BaseModel):
    """Запрос анализа чувствительности моментов к размеру выборки."""
    spec_path: Optional[str] = Field(None, description="Спецификация конструкции (нормальное состояние)")
    rows: Optional[List[List[float]]] = Field(None, description="Строки признаков")
    sizes: Optional[List[int]] = Field(None, description="Размеры выборки по возрастанию")
    grid: Optional[str] = Field(None, description="Сетка start:stop:step")
    seed: int = Field(0, ge=0)

    @model_validator(mode="after")
    def exactly_one_source(self):
        if (self.spec_path is None) == (self.rows is None):
            raise ValueError("exactly one of 'spec_path' and 'rows' must be given")
        if self.sizes is not None and self.grid is not None:
            raise ValueError("'sizes' and 'grid' are mutually exclusive")
        return self


class SensitivityRow(BaseModel):
    size: int
    feature: str
    mean: float
    std: float


class SensitivityResponse(BaseModel):
    rows: List[SensitivityRow]
