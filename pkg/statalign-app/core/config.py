from pydantic import BaseModel, Field, field_validator
from typing import Literal


class AppConfig(BaseModel):
    """Конфигурация приложения."""

    app_name: str = Field("Statistic Alignment Bench", description="Название приложения")
    debug: bool = Field(False, description="Режим отладки")
    version: str = Field("0.1.0", description="Версия приложения")


class RunConfig(BaseModel):
    """Конфигурация запуска HTTP-сервера."""

    host: str = Field("0.0.0.0", description="Хост для запуска сервера")
    port: int = Field(8000, description="Порт для запуска сервера", ge=1000, le=65535)


class ApiPrefix(BaseModel):
    """Конфигурация префикса API."""

    prefix: str = Field("/api", description="Префикс API")

    @field_validator("prefix")
    @classmethod
    def prefix_must_start_with_slash(cls, v):
        if not v.startswith("/"):
            return f"/{v}"
        return v


class LogConfig(BaseModel):
    """Конфигурация логирования."""

    level: str = Field("INFO", description="Уровень логирования")
    format: str = Field(
        "%(asctime)s - %(name)s - %(levelname)s - %(message)s",
        description="Формат логов"
    )

    @field_validator("level")
    @classmethod
    def level_must_be_valid(cls, v):
        valid_levels = ["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"]
        if v.upper() not in valid_levels:
            raise ValueError(f"Log level must be one of {valid_levels}")
        return v.upper()


class AlignmentConfig(BaseModel):
    """Константы статистического выравнивания."""

    ridge_eps: float = Field(
        1e-6, description="Относительная регуляризация ковариации (eps * tr(C) / d)", ge=0.0
    )
    std_floor: float = Field(
        1e-12, description="Нижняя граница стандартного отклонения", gt=0.0
    )
    degenerate_ratio: float = Field(
        1e-12, description="Порог вырожденности std относительно размаха признака", ge=0.0
    )
    normal_eig_floor: float = Field(
        0.1,
        description="NCORAL: нижняя граница собственных значений ковариаций нормального состояния "
                    "относительно наибольшего",
        ge=0.0, lt=1.0
    )


class KernelConfig(BaseModel):
    """Гиперпараметры ядерных методов адаптации (TCA, BDA, GFK)."""

    lam: float = Field(0.1, description="Регуляризатор Фробениуса", gt=0.0)
    balance: float = Field(0.5, description="Балансирующий коэффициент BDA", ge=0.0, le=1.0)
    bda_iters: int = Field(10, description="Число итераций BDA", ge=1)
    gfk_dim: int = Field(1, description="Размерность подпространства GFK", ge=1)
    eigen_selection: Literal["min_trace", "max_trace"] = Field(
        "min_trace",
        description="Выбор собственных векторов: минимум следа или максимум"
    )
    lengthscale_scale: float = Field(
        1.0, description="Множитель медианной эвристики длины масштаба RBF", gt=0.0
    )


class ModelConfig(BaseModel):
    """Параметры моделей после выравнивания."""

    knn_k: int = Field(1, description="Число соседей k-NN", ge=1)
    gmm_max_iters: int = Field(500, description="Максимум итераций EM", ge=1)
    gmm_tol: float = Field(1e-6, description="Порог относительного изменения правдоподобия", gt=0.0)
    gmm_restarts: int = Field(5, description="Число перезапусков при вырождении компоненты", ge=0)
    gmm_kmeans_steps: int = Field(10, description="Шаги k-means перед EM", ge=0)


class SimulationConfig(BaseModel):
    """Параметры симулятора популяции."""

    max_damping_redraws: int = Field(
        100, description="Максимум повторных выборок демпфирования", ge=1
    )


class BenchConfig(BaseModel):
    """Параметры стенда воспроизведения экспериментов."""

    repeats: int = Field(10, description="Число повторов с разными сидами", ge=1)
    seed: int = Field(0, description="Базовый сид", ge=0)
    plot_fraction: float = Field(
        0.2, description="Доля выборки для диаграмм рассеяния", gt=0.0, le=1.0
    )
    kde_points: int = Field(200, description="Число точек сетки KDE", ge=10)
    sensitivity_grid: str = Field("10:500:10", description="Сетка размеров выборки start:stop:step")
    out_dir: str = Field("results", description="Каталог для результатов")


class Settings(BaseModel):
    """Основные настройки приложения."""

    app: AppConfig = Field(default_factory=AppConfig)
    run: RunConfig = Field(default_factory=RunConfig)
    api: ApiPrefix = Field(default_factory=ApiPrefix)
    log: LogConfig = Field(default_factory=LogConfig)
    align: AlignmentConfig = Field(default_factory=AlignmentConfig)
    kernel: KernelConfig = Field(default_factory=KernelConfig)
    model: ModelConfig = Field(default_factory=ModelConfig)
    simulation: SimulationConfig = Field(default_factory=SimulationConfig)
    bench: BenchConfig = Field(default_factory=BenchConfig)
