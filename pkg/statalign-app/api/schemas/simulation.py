from typing import Dict, List, Optional

from pydantic import BaseModel, Field, model_validator

from services.simulator import StructureSpec


class SimulateRequest(BaseModel):
    """Запрос на симуляцию популяции."""
    spec: Optional[StructureSpec] = Field(None, description="Описание конструкции в СИ")
    spec_path: Optional[str] = Field(
        None, description="Файл спецификации (путь или имя из specs/, например case1_source)"
    )
    class_counts: Dict[int, int] = Field(..., description="Число выборок по классам")
    seed: int = Field(0, ge=0)
    domain_tag: str = Field("simulated", description="Имя домена")

    @model_validator(mode="after")
    def exactly_one_spec(self):
        if (self.spec is None) == (self.spec_path is None):
            raise ValueError("exactly one of 'spec' and 'spec_path' must be given")
        if not self.class_counts:
            raise ValueError("class_counts must not be empty")
        return self


class SimulateResponse(BaseModel):
    """Сгенерированный набор: манифест и строки."""
    manifest: Dict
    features: List[List[float]]
    labels: List[int]
    covariates: Dict[str, List[float]] = Field(default_factory=dict)
    spec_metadata: Dict = Field(default_factory=dict)
