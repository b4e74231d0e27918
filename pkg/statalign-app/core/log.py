import logging

from .config import Settings


def setup_logging(settings: Settings) -> None:
    """
    Настраивает корневой логгер по конфигурации.

    Args:
        settings: Настройки приложения
    """
    logging.basicConfig(
        level=getattr(logging, settings.log.level),
        format=settings.log.format
    )
