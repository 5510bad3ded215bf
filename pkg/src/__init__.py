"""geoquant.

Kernel estimators of conditional means, covariances and geometric quantiles for
multivariate time series, with a simulation harness and a CSV-driven replay pipeline.
"""

__version__ = "0.1.0"

from . import core, dataio, estimators, models, sim

__all__ = ["core", "dataio", "estimators", "models", "sim"]
