# Schemas for API
from .simulation import SimulateRequest, SimulateResponse
from .bench import BenchRequest, SensitivityRequest, SensitivityRow, SensitivityResponse


__all__ = [
    "SimulateRequest", "SimulateResponse",
    "BenchRequest", "SensitivityRequest", "SensitivityRow", "SensitivityResponse",
]
