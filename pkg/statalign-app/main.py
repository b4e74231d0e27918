"""HTTP-точка входа: FastAPI-приложение стенда статистического выравнивания."""

import logging
from contextlib import asynccontextmanager
from typing import List, Union

import uvicorn
from fastapi import FastAPI, Request
from fastapi.exceptions import RequestValidationError
from fastapi.responses import JSONResponse
from pydantic import ValidationError

from api import router as api_router
from core.config import Settings
from core.exceptions import StatAlignError
from core.log import setup_logging
from core.settings import get_settings

logger = logging.getLogger(__name__)


def _error_items(exc: Union[RequestValidationError, ValidationError]) -> List[dict]:
    """Ошибки валидации в формате {field, message, type}; корень 'body' опускается."""
    return [
        {
            "field": ".".join(str(part) for part in error["loc"] if part != "body"),
            "message": error["msg"],
            "type": error["type"],
        }
        for error in exc.errors()
    ]


async def validation_error_handler(request: Request, exc: Union[RequestValidationError, ValidationError]):
    """Ошибки валидации запроса и моделей: 422 с перечнем полей."""
    errors = _error_items(exc)
    logger.warning(f"{type(exc).__name__} on {request.url.path}: {errors}")
    return JSONResponse(status_code=422, content={"detail": "Validation error", "errors": errors})


async def statalign_error_handler(request: Request, exc: StatAlignError):
    """Ошибки предметной области отдаются в том же JSON, что печатает CLI."""
    logger.warning(f"{type(exc).__name__} on {request.url.path}: {exc}")
    return JSONResponse(status_code=422, content=exc.to_dict())


def create_app(settings: Settings) -> FastAPI:
    """
    Собирает приложение: обработчики ошибок и маршруты под префиксом API.

    Args:
        settings: Настройки приложения

    Returns:
        Экземпляр FastAPI
    """

    @asynccontextmanager
    async def lifespan(app: FastAPI):
        logger.info(f"{settings.app.app_name} v{settings.app.version} started")
        yield
        logger.info(f"{settings.app.app_name} stopped")

    app = FastAPI(
        title=settings.app.app_name,
        version=settings.app.version,
        description="Симуляция популяций, статистическое выравнивание и сценарии адаптации доменов",
        docs_url=f"{settings.api.prefix}/docs",
        redoc_url=f"{settings.api.prefix}/redoc",
        openapi_url=f"{settings.api.prefix}/openapi.json",
        debug=settings.app.debug,
        lifespan=lifespan,
    )
    app.add_exception_handler(RequestValidationError, validation_error_handler)
    app.add_exception_handler(ValidationError, validation_error_handler)
    app.add_exception_handler(StatAlignError, statalign_error_handler)

    @app.exception_handler(Exception)
    async def unexpected_error_handler(request: Request, exc: Exception):
        logger.exception(f"Unexpected error on {request.url.path}: {exc}")
        return JSONResponse(
            status_code=500,
            content={
                "detail": "Internal server error",
                "message": str(exc) if settings.app.debug else "An unexpected error occurred",
            },
        )

    app.include_router(api_router, prefix=settings.api.prefix)
    return app


settings = get_settings()
setup_logging(settings)
app = create_app(settings)


if __name__ == "__main__":
    logger.info(f"Serving on {settings.run.host}:{settings.run.port}")
    uvicorn.run("main:app", host=settings.run.host, port=settings.run.port, reload=settings.app.debug)
