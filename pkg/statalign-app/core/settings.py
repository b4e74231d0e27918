from pydantic_settings import BaseSettings, SettingsConfigDict
from typing import Optional
from functools import lru_cache

from .config import Settings as AppSettings
from .config import (
    AppConfig, RunConfig, ApiPrefix, LogConfig,
    AlignmentConfig, KernelConfig, ModelConfig, SimulationConfig, BenchConfig
)


class EnvSettings(BaseSettings):
    """
    Настройки приложения, загружаемые из переменных окружения.

    Префикс для всех переменных - "STATALIGN_".
    Например, STATALIGN_LOG_LEVEL=DEBUG, STATALIGN_KERNEL_LAM=0.5
    """

    # Настройки приложения
    APP_NAME: Optional[str] = None
    APP_DEBUG: Optional[bool] = None

    # Настройки запуска
    RUN_HOST: Optional[str] = None
    RUN_PORT: Optional[int] = None

    # Настройки API
    API_PREFIX: Optional[str] = None

    # Настройки логирования
    LOG_LEVEL: Optional[str] = None
    LOG_FORMAT: Optional[str] = None

    # Выравнивание
    ALIGN_RIDGE_EPS: Optional[float] = None
    ALIGN_STD_FLOOR: Optional[float] = None
    ALIGN_DEGENERATE_RATIO: Optional[float] = None
    ALIGN_NORMAL_EIG_FLOOR: Optional[float] = None

    # Ядерные методы
    KERNEL_LAM: Optional[float] = None
    KERNEL_BALANCE: Optional[float] = None
    KERNEL_BDA_ITERS: Optional[int] = None
    KERNEL_GFK_DIM: Optional[int] = None
    KERNEL_EIGEN_SELECTION: Optional[str] = None
    KERNEL_LENGTHSCALE_SCALE: Optional[float] = None

    # Модели
    MODEL_KNN_K: Optional[int] = None
    MODEL_GMM_MAX_ITERS: Optional[int] = None
    MODEL_GMM_TOL: Optional[float] = None

    # Стенд
    BENCH_REPEATS: Optional[int] = None
    BENCH_SEED: Optional[int] = None
    BENCH_OUT_DIR: Optional[str] = None

    model_config = SettingsConfigDict(
        env_prefix="STATALIGN_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )


def _pick(value, default):
    """Возвращает значение из окружения, если оно задано, иначе значение по умолчанию."""
    return value if value is not None else default


@lru_cache
def get_settings() -> AppSettings:
    """
    Загружает настройки из переменных окружения и объединяет
    их с настройками по умолчанию.

    Returns:
        Настройки приложения с примененными переменными окружения
    """
    env = EnvSettings()

    app_config = AppConfig(
        app_name=_pick(env.APP_NAME, AppConfig().app_name),
        debug=_pick(env.APP_DEBUG, AppConfig().debug),
    )
    run_config = RunConfig(
        host=_pick(env.RUN_HOST, RunConfig().host),
        port=_pick(env.RUN_PORT, RunConfig().port),
    )
    api_config = ApiPrefix(prefix=_pick(env.API_PREFIX, ApiPrefix().prefix))
    log_config = LogConfig(
        level=_pick(env.LOG_LEVEL, LogConfig().level),
        format=_pick(env.LOG_FORMAT, LogConfig().format),
    )

    defaults = AlignmentConfig()
    align_config = AlignmentConfig(
        ridge_eps=_pick(env.ALIGN_RIDGE_EPS, defaults.ridge_eps),
        std_floor=_pick(env.ALIGN_STD_FLOOR, defaults.std_floor),
        degenerate_ratio=_pick(env.ALIGN_DEGENERATE_RATIO, defaults.degenerate_ratio),
        normal_eig_floor=_pick(env.ALIGN_NORMAL_EIG_FLOOR, defaults.normal_eig_floor),
    )

    kdefaults = KernelConfig()
    kernel_config = KernelConfig(
        lam=_pick(env.KERNEL_LAM, kdefaults.lam),
        balance=_pick(env.KERNEL_BALANCE, kdefaults.balance),
        bda_iters=_pick(env.KERNEL_BDA_ITERS, kdefaults.bda_iters),
        gfk_dim=_pick(env.KERNEL_GFK_DIM, kdefaults.gfk_dim),
        eigen_selection=_pick(env.KERNEL_EIGEN_SELECTION, kdefaults.eigen_selection),
        lengthscale_scale=_pick(env.KERNEL_LENGTHSCALE_SCALE, kdefaults.lengthscale_scale),
    )

    mdefaults = ModelConfig()
    model_config = ModelConfig(
        knn_k=_pick(env.MODEL_KNN_K, mdefaults.knn_k),
        gmm_max_iters=_pick(env.MODEL_GMM_MAX_ITERS, mdefaults.gmm_max_iters),
        gmm_tol=_pick(env.MODEL_GMM_TOL, mdefaults.gmm_tol),
    )

    bdefaults = BenchConfig()
    bench_config = BenchConfig(
        repeats=_pick(env.BENCH_REPEATS, bdefaults.repeats),
        seed=_pick(env.BENCH_SEED, bdefaults.seed),
        out_dir=_pick(env.BENCH_OUT_DIR, bdefaults.out_dir),
    )

    return AppSettings(
        app=app_config,
        run=run_config,
        api=api_config,
        log=log_config,
        align=align_config,
        kernel=kernel_config,
        model=model_config,
        simulation=SimulationConfig(),
        bench=bench_config,
    )
