"""Conditional Value-at-Risk from geometric quantiles of losses, and rolling volatility.

Losses are negated returns, L_t = -Y_t, so VaR at level alpha is a large positive number
for a risky position.
"""

from dataclasses import dataclass

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.core.config import RuntimeConfig
from src.core.exceptions import InvalidArgumentError
from src.core.utils.logger import setup_logger
from src.estimators.geoquantile import IrlsConfig, direction_from_level, estimate_quantile
from src.models.dataset import Dataset
from src.models.kernels import Bandwidth, KernelSpec

logger = setup_logger(__name__)

WEEK_END = "W-FRI"


@dataclass(frozen=True, eq=False)
class VarEstimate:
    level: float
    value: np.ndarray
    x: np.ndarray
    converged: bool = True

    def __post_init__(self) -> None:
        if not 0.0 < self.level < 1.0:
            raise InvalidArgumentError(f"VaR level must lie in (0, 1), got {self.level}")


def loss_dataset(data: Dataset) -> Dataset:
    return data.with_responses(-data.responses)


def var_estimate(  # noqa: PLR0913
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b: Bandwidth | float,
    alpha: float,
    cfg: IrlsConfig | None = None,
) -> VarEstimate:
    """VaR_alpha(x): the geometric quantile of the losses at direction_from_level(alpha).

    Args:
        data: Dataset of returns.
        x: Conditioning point on the standardized covariate scale.
        spec: Kernel.
        b: Quantile bandwidth.
        alpha: VaR level, e.g. 0.95.
        cfg: IRLS settings.

    Returns:
        VarEstimate: Per-asset VaR in loss units.

    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"VaR level must lie in (0, 1), got {alpha}")
    fit = estimate_quantile(
        loss_dataset(data), x, spec, b, direction_from_level(alpha, data.p), cfg
    )
    return VarEstimate(
        level=alpha,
        value=fit.q,
        x=np.asarray(x, dtype=float),
        converged=fit.converged,
    )


def rolling_volatility(series: np.ndarray, window: int) -> np.ndarray:
    """Sample standard deviation (denominator window - 1) over each full window."""
    values = pd.Series(np.asarray(series, dtype=float))
    if not 2 <= window <= len(values):  # noqa: PLR2004
        raise InvalidArgumentError(
            f"Window must lie in [2, {len(values)}], got {window}"
        )
    return values.rolling(window).std(ddof=1).to_numpy()[window - 1 :]


def volatility_frame(returns: pd.DataFrame, window: int = 5) -> pd.DataFrame:
    """Rolling volatility of every column, indexed by the window's last date."""
    if not 2 <= window <= len(returns):  # noqa: PLR2004
        raise InvalidArgumentError(f"Window must lie in [2, {len(returns)}], got {window}")
    vol = returns.rolling(window).std(ddof=1).iloc[window - 1 :]
    return vol.rename(columns=lambda c: f"vol_{c}")


def weekly_var_series(  # noqa: PLR0913
    data: Dataset,
    spec: KernelSpec,
    b: Bandwidth | float,
    alpha: float,
    cfg: IrlsConfig | None = None,
    n_jobs: int | None = None,
) -> pd.DataFrame:
    """VaR fitted at the last covariate value of each week (weeks end on Friday).

    Returns:
        pd.DataFrame: Indexed by week end, columns ``date`` (the conditioning trading day)
            and ``var_1..var_p``.

    """
    if not isinstance(data.times, pd.DatetimeIndex):
        raise InvalidArgumentError("Weekly VaR needs a dataset indexed by calendar dates")
    n_jobs = RuntimeConfig().n_jobs if n_jobs is None else n_jobs

    positions = pd.Series(np.arange(data.n), index=data.times)
    last_of_week = positions.groupby(pd.Grouper(freq=WEEK_END)).last().dropna().astype(int)

    estimates = Parallel(n_jobs=n_jobs)(
        delayed(var_estimate)(data, data.scaled[pos], spec, b, alpha, cfg)
        for pos in last_of_week.to_numpy()
    )
    frame = pd.DataFrame(
        np.vstack([est.value for est in estimates]),
        index=last_of_week.index.rename("week"),
        columns=[f"var_{j + 1}" for j in range(data.p)],
    )
    frame.insert(0, "date", data.times[last_of_week.to_numpy()])
    frame["converged"] = [est.converged for est in estimates]

    unconverged = int((~frame["converged"]).sum())
    if unconverged:
        logger.log_warning("Weekly VaR fits without convergence", count=unconverged)
    logger.log_info("Weekly VaR series computed", weeks=len(frame), level=alpha)
    return frame
