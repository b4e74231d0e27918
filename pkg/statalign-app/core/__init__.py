from .config import Settings
from .settings import get_settings
from .log import setup_logging

__all__ = ["Settings", "get_settings", "setup_logging"]
