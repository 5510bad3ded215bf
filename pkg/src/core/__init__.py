"""Core configuration, errors and logging."""

from .config import EstimationConfig, RuntimeConfig, SimulationDefaults
from .exceptions import GeoquantError

__all__ = ["EstimationConfig", "GeoquantError", "RuntimeConfig", "SimulationDefaults"]
