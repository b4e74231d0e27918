"""Модуль содержит API-роуты приложения."""

# Импортируем все роуты
from . import simulation, bench
