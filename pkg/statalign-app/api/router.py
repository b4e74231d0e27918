"""API-роутер для приложения."""

from fastapi import APIRouter

from core.settings import get_settings
from .routes import simulation, bench

# Создаем основной роутер
router = APIRouter()

# Подключаем все подроутеры
router.include_router(simulation.router, tags=["simulation"])
router.include_router(bench.router, tags=["bench"])


# Роут статуса для проверки работоспособности
@router.get("/health", tags=["health"])
async def health_check():
    """Проверка работоспособности API."""
    return {"status": "ok", "version": get_settings().app.version}
