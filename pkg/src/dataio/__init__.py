"""CSV ingestion, log returns and alignment."""

from .loader import (
    AlignmentReport,
    PriceSeries,
    RiskIndexSeries,
    align,
    align_with_report,
    load_price_csv,
    load_risk_csv,
    log_returns,
)

__all__ = [
    "AlignmentReport",
    "PriceSeries",
    "RiskIndexSeries",
    "align",
    "align_with_report",
    "load_price_csv",
    "load_risk_csv",
    "log_returns",
]
