# dynamic_dps/__init__.py

from .config import RunConfig, RunConfigBuilder
from .solver import SolveReport, solve

__all__ = ["RunConfig", "RunConfigBuilder", "SolveReport", "solve"]
