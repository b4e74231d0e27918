"""API-маршруты стенда: сценарии и анализ чувствительности."""

from typing import Optional

from fastapi import APIRouter, Body

from services.bench import BenchReport, CaseName
from ..schemas import BenchRequest, SensitivityRequest, SensitivityResponse
from ..services import BenchService

router = APIRouter()


@router.post("/bench/{case}", response_model=BenchReport)
async def run_bench(case: CaseName, request: Optional[BenchRequest] = Body(None)):
    """
    Запустить сценарий стенда.

    Тело запроса необязательно: без него используется конфигурация из cases/.
    """
    return await BenchService.run_bench(case, request or BenchRequest())


@router.post("/sensitivity", response_model=SensitivityResponse)
async def sensitivity(request: SensitivityRequest):
    """Моменты первых s строк каждого признака для сетки размеров."""
    return await BenchService.sensitivity(request)
