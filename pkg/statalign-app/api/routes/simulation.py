"""API-маршруты симулятора популяции."""

from fastapi import APIRouter

from ..schemas import SimulateRequest, SimulateResponse
from ..services import BenchService

# Создаем роутер для симуляции
router = APIRouter()


@router.post("/simulate", response_model=SimulateResponse)
async def simulate(request: SimulateRequest):
    """
    Сгенерировать набор признаков популяции конструкций.

    Args:
        request: Спецификация (или путь к ней), число выборок по классам и сид

    Returns:
        Манифест набора, признаки в Гц, метки и ковариаты E, rho, c
    """
    return await BenchService.simulate(request)
