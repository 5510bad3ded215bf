"""Kernel estimators: mean, covariance, geometric quantiles, bandwidths and risk measures."""

from .bandwidth import CvConfig, CvReport, blocked_cv_bandwidth, rate_bandwidth
from .covariance import CovEstimate, estimate_cov, generalized_variance
from .geoquantile import Direction, IrlsConfig, QuantileEstimate, estimate_quantile
from .mean import BandResult, MeanEstimate, confidence_band, estimate_mean
from .risk import VarEstimate, rolling_volatility, var_estimate

__all__ = [
    "BandResult",
    "CovEstimate",
    "CvConfig",
    "CvReport",
    "Direction",
    "IrlsConfig",
    "MeanEstimate",
    "QuantileEstimate",
    "VarEstimate",
    "blocked_cv_bandwidth",
    "confidence_band",
    "estimate_cov",
    "estimate_mean",
    "estimate_quantile",
    "generalized_variance",
    "rate_bandwidth",
    "rolling_volatility",
    "var_estimate",
]
