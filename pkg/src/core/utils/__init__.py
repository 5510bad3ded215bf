"""JSON logging helpers shared by every geoquant module."""

from .logger import JSONFormatter, Logger, LogLevel, set_global_level, setup_logger

__all__ = ["JSONFormatter", "LogLevel", "Logger", "set_global_level", "setup_logger"]
