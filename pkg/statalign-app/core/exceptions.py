"""
Иерархия исключений приложения.

Каждое исключение несет машиночитаемый словарь details, который
CLI и HTTP-обработчики отдают в одном и том же JSON-формате.
"""

from typing import Any, Dict, Optional


class StatAlignError(ValueError):
    """Базовое исключение приложения."""

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details: Dict[str, Any] = details

    def to_dict(self) -> Dict[str, Any]:
        """Сериализует ошибку в формат ответа об ошибке."""
        error = {"message": self.message, "type": type(self).__name__}
        error.update(self.details)
        return {
            "detail": self.message,
            "type": type(self).__name__,
            "errors": [error],
        }


class ConfigError(StatAlignError):
    """Ошибка конфигурации или файла спецификации."""


class DatasetError(StatAlignError):
    """Ошибка работы с набором данных."""


class DatasetParseError(DatasetError):
    """Ошибка разбора CSV с указанием строки и столбца."""

    def __init__(self, message: str, row: Optional[int] = None, column: Optional[str] = None):
        super().__init__(message, row=row, column=column)
        self.row = row
        self.column = column


class UnknownClassError(DatasetError):
    """Запрошенный класс отсутствует в наборе."""


class UnknownCovariateError(DatasetError):
    """Запрошенная ковариата отсутствует в наборе."""


class EmptySelectionError(DatasetError):
    """Выборка не содержит ни одной строки."""


class DimensionMismatchError(StatAlignError):
    """Несовпадение размерностей признаков."""


class InsufficientDataError(StatAlignError):
    """Недостаточно строк для оценки статистик."""


class NumericalError(StatAlignError):
    """Численный сбой (собственные значения, ковариация)."""


class SimulationError(StatAlignError):
    """Ошибка симулятора популяции."""


class OverdampedModeError(SimulationError):
    """Запрошенная мода оказалась передемпфированной."""


class ModelError(StatAlignError):
    """Ошибка обучения или применения модели."""


class ComponentCollapseError(ModelError):
    """Компонента смеси выродилась после всех перезапусков."""
