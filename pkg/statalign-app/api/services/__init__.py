from .bench_service import BenchService

__all__ = ["BenchService"]
