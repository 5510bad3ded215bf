"""Simulation design and Monte Carlo harness."""

from .dgp import ErrorDist, SimConfig, simulate_covariates, simulate_responses
from .monte_carlo import CoverageReport, McReport, run_band_coverage, run_monte_carlo

__all__ = [
    "CoverageReport",
    "ErrorDist",
    "McReport",
    "SimConfig",
    "run_band_coverage",
    "run_monte_carlo",
    "simulate_covariates",
    "simulate_responses",
]
