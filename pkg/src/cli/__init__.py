"""Command-line front-end."""

from .config import RunConfig, build_run_config, read_config_file

__all__ = ["RunConfig", "build_run_config", "read_config_file"]
