"""CSV ingestion of prices and geopolitical-risk indices, log returns and date alignment.

File conventions: comma-delimited UTF-8, ISO dates (YYYY-MM-DD), ``.`` as decimal
separator. Row numbers in diagnostics are file line numbers (the header is line 1).
"""

import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import pandas as pd

from src.core.exceptions import AlignmentError, DataParseError, InvalidArgumentError
from src.core.utils.logger import setup_logger
from src.models.dataset import Dataset

logger = setup_logger(__name__)

DATE_FORMAT = "%Y-%m-%d"
PRICE_COLUMNS = ("date", "close")
RISK_COLUMNS = ("date", "gprd", "gprd_a", "gprd_t")
HEADER_LINES = 1


def _line_numbers(mask: pd.Series) -> list[int]:
    return [int(i) + HEADER_LINES + 1 for i in np.flatnonzero(mask.to_numpy())]


def _strictly_increasing(dates: pd.DatetimeIndex) -> bool:
    return bool(len(dates) < 2 or (np.diff(dates.asi8) > 0).all())  # noqa: PLR2004


@dataclass(frozen=True, eq=False)
class PriceSeries:
    dates: pd.DatetimeIndex
    close: np.ndarray
    name: str = "close"

    def __post_init__(self) -> None:
        if len(self.dates) != len(self.close):
            raise InvalidArgumentError("Dates and closing prices differ in length")
        if not _strictly_increasing(self.dates):
            raise InvalidArgumentError("Price dates must be strictly increasing")
        if not (np.isfinite(self.close).all() and (self.close > 0).all()):
            raise InvalidArgumentError("Closing prices must be finite and positive")

    def __len__(self) -> int:
        return len(self.dates)

    def to_series(self) -> pd.Series:
        return pd.Series(self.close, index=self.dates, name=self.name)


@dataclass(frozen=True, eq=False)
class RiskIndexSeries:
    """Overall (GPRD), act-based (GPRD-A) and threat-based (GPRD-T) daily indices."""

    dates: pd.DatetimeIndex
    gprd: np.ndarray
    gprd_a: np.ndarray
    gprd_t: np.ndarray

    def __post_init__(self) -> None:
        columns = (self.gprd, self.gprd_a, self.gprd_t)
        if any(len(col) != len(self.dates) for col in columns):
            raise InvalidArgumentError("Risk index columns differ in length")
        if not _strictly_increasing(self.dates):
            raise InvalidArgumentError("Risk index dates must be strictly increasing")
        if not all(np.isfinite(col).all() and (col >= 0).all() for col in columns):
            raise InvalidArgumentError("Risk indices must be finite and non-negative")

    def __len__(self) -> int:
        return len(self.dates)

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            {"gprd": self.gprd, "gprd_a": self.gprd_a, "gprd_t": self.gprd_t},
            index=self.dates,
        )


def _read_table(path: str | Path, required: tuple[str, ...]) -> pd.DataFrame:
    """Read a CSV with string dates and round-trip float parsing, checking the header."""
    try:
        frame = pd.read_csv(
            path, dtype={"date": str}, float_precision="round_trip", skipinitialspace=True
        )
    except FileNotFoundError:
        logger.log_error(
            "Input file not found",
            ex=FileNotFoundError(f"File not found: {path}"),
            file_path=str(path),
        )
        raise
    except pd.errors.EmptyDataError as e:
        raise DataParseError(f"{path}: file is empty") from e
    except pd.errors.ParserError as e:
        raise DataParseError(f"{path}: malformed CSV ({e})") from e

    frame.columns = [str(c).strip().lower() for c in frame.columns]
    missing = [c for c in required if c not in frame.columns]
    if missing:
        raise DataParseError(f"{path}: missing required columns {missing}")
    if frame.empty:
        raise DataParseError(f"{path}: no data rows")
    return frame


def _parse_dates(frame: pd.DataFrame, path: str | Path) -> pd.Series:
    raw = frame["date"].astype("string").str.strip()
    dates = pd.to_datetime(raw, format=DATE_FORMAT, errors="coerce")
    bad = dates.isna()
    if bad.any():
        rows = _line_numbers(bad)
        raise DataParseError(f"{path}: unparseable date in rows {rows}", rows=rows)
    duplicated = dates.duplicated(keep=False)
    if duplicated.any():
        rows = _line_numbers(duplicated)
        raise DataParseError(f"{path}: duplicate dates in rows {rows}", rows=rows)
    return dates


def _parse_numeric(frame: pd.DataFrame, column: str, path: str | Path) -> pd.Series:
    values = pd.to_numeric(frame[column], errors="coerce")
    bad = values.isna() | ~np.isfinite(values.astype(float))
    if bad.any():
        rows = _line_numbers(bad)
        raise DataParseError(f"{path}: missing or non-numeric {column} in rows {rows}", rows=rows)
    return values.astype(float)


def load_price_csv(path: str | Path, name: str | None = None) -> PriceSeries:
    """Load a ``date,close`` file, sorted by date.

    Raises:
        FileNotFoundError: If ``path`` does not exist.
        DataParseError: On an empty file, a bad header, or rows with a malformed date,
            duplicate date, or missing / non-positive close (offending rows listed).

    """
    start_time = time.time()
    frame = _read_table(path, PRICE_COLUMNS)
    dates = _parse_dates(frame, path)
    close = _parse_numeric(frame, "close", path)
    non_positive = close <= 0
    if non_positive.any():
        rows = _line_numbers(non_positive)
        raise DataParseError(f"{path}: non-positive close in rows {rows}", rows=rows)

    order = np.argsort(dates.to_numpy(), kind="stable")
    series = PriceSeries(
        dates=pd.DatetimeIndex(dates.to_numpy()[order]),
        close=close.to_numpy()[order],
        name=name or Path(path).stem,
    )
    logger.log_info(
        "Price series loaded",
        file_path=str(path),
        row_count=len(series),
        load_time_ms=round((time.time() - start_time) * 1000, 2),
    )
    return series


def load_risk_csv(path: str | Path) -> RiskIndexSeries:
    """Load a ``date,gprd,gprd_a,gprd_t`` file, sorted by date."""
    start_time = time.time()
    frame = _read_table(path, RISK_COLUMNS)
    dates = _parse_dates(frame, path)
    values = {c: _parse_numeric(frame, c, path) for c in RISK_COLUMNS[1:]}
    for column, series in values.items():
        negative = series < 0
        if negative.any():
            rows = _line_numbers(negative)
            raise DataParseError(f"{path}: negative {column} in rows {rows}", rows=rows)

    order = np.argsort(dates.to_numpy(), kind="stable")
    risk = RiskIndexSeries(
        dates=pd.DatetimeIndex(dates.to_numpy()[order]),
        **{c: v.to_numpy()[order] for c, v in values.items()},
    )
    logger.log_info(
        "Risk index series loaded",
        file_path=str(path),
        row_count=len(risk),
        load_time_ms=round((time.time() - start_time) * 1000, 2),
    )
    return risk


def write_price_csv(series: PriceSeries, path: str | Path) -> None:
    pd.DataFrame(
        {"date": series.dates.strftime(DATE_FORMAT), "close": series.close}
    ).to_csv(path, index=False)


def write_risk_csv(series: RiskIndexSeries, path: str | Path) -> None:
    frame = series.to_frame()
    frame.insert(0, "date", series.dates.strftime(DATE_FORMAT))
    frame.to_csv(path, index=False)


def log_returns(prices: PriceSeries) -> pd.Series:
    """r_t = ln(close_{t+1} / close_t), dated by the later day."""
    if len(prices) < 2:  # noqa: PLR2004
        raise InvalidArgumentError(f"Log returns need at least 2 prices, got {len(prices)}")
    returns = np.log(prices.close[1:] / prices.close[:-1])
    return pd.Series(returns, index=prices.dates[1:], name=prices.name)


@dataclass(frozen=True)
class AlignmentReport:
    n: int
    dropped_dates: tuple[str, ...]
    lag: int

    def to_dict(self) -> dict:
        return {"n": self.n, "dropped_dates": list(self.dropped_dates), "lag": self.lag}


def align_with_report(
    returns_a: pd.Series,
    returns_b: pd.Series,
    risk: RiskIndexSeries,
    lag: int = 0,
    *,
    standardize: bool = True,
) -> tuple[Dataset, AlignmentReport]:
    """Inner-join two return series with the risk indices on date.

    Args:
        returns_a: Returns of the first asset (response y1).
        returns_b: Returns of the second asset (response y2).
        risk: Risk indices (covariates x1..x3).
        lag: Pair the return on day t with the indices of day t - lag (calendar days).
        standardize: Standardize covariates for kernel evaluation.

    Returns:
        tuple[Dataset, AlignmentReport]: Aligned data and the dates dropped by the join.

    Raises:
        AlignmentError: If no date is common to all three inputs.

    """
    if lag < 0:
        raise InvalidArgumentError(f"Lag must be non-negative, got {lag}")
    covariates = risk.to_frame()
    if lag:
        covariates = covariates.shift(lag, freq="D")

    responses = pd.concat(
        [returns_a.rename("y1"), returns_b.rename("y2")], axis=1, join="inner"
    )
    joined = responses.join(covariates, how="inner").sort_index()

    every_date = returns_a.index.union(returns_b.index).union(covariates.index)
    dropped = every_date.difference(joined.index)
    if joined.empty:
        logger.log_error(
            "Inputs share no dates",
            ex=AlignmentError("empty intersection"),
            returns_a=len(returns_a),
            returns_b=len(returns_b),
            risk=len(risk),
            lag=lag,
        )
        raise AlignmentError("Returns and risk indices share no dates")

    data = Dataset.from_arrays(
        joined[["y1", "y2"]].to_numpy(),
        joined[["gprd", "gprd_a", "gprd_t"]].to_numpy(),
        times=pd.DatetimeIndex(joined.index),
        standardize=standardize,
    )
    report = AlignmentReport(
        n=data.n,
        dropped_dates=tuple(pd.DatetimeIndex(dropped).strftime(DATE_FORMAT)),
        lag=lag,
    )
    logger.log_info(
        "Series aligned", n=report.n, dropped=len(report.dropped_dates), lag=lag
    )
    return data, report


def align(
    returns_a: pd.Series, returns_b: pd.Series, risk: RiskIndexSeries, lag: int = 0
) -> Dataset:
    return align_with_report(returns_a, returns_b, risk, lag)[0]


def write_dataset_csv(data: Dataset, path: str | Path) -> None:
    """``date,y1..yp,x1..xk`` with raw covariates."""
    data.to_frame().to_csv(path, index=False)


def _numbered_columns(frame: pd.DataFrame, prefix: str) -> list[str]:
    found = [c for c in frame.columns if c.startswith(prefix) and c[len(prefix) :].isdigit()]
    return sorted(found, key=lambda c: int(c[len(prefix) :]))


def load_dataset_csv(path: str | Path, *, standardize: bool = True) -> Dataset:
    """Inverse of :func:`write_dataset_csv`, rows sorted by date.

    Raises:
        DataParseError: On missing y/x columns or malformed, duplicate or missing cells.

    """
    frame = _read_table(path, ("date",))
    y_cols = _numbered_columns(frame, "y")
    x_cols = _numbered_columns(frame, "x")
    if not y_cols or not x_cols:
        raise DataParseError(f"{path}: expected y1.. and x1.. columns, got {list(frame.columns)}")
    dates = _parse_dates(frame, path)
    Y = np.column_stack([_parse_numeric(frame, c, path).to_numpy() for c in y_cols])
    X = np.column_stack([_parse_numeric(frame, c, path).to_numpy() for c in x_cols])
    order = np.argsort(dates.to_numpy(), kind="stable")
    times = pd.DatetimeIndex(dates.to_numpy()[order])
    return Dataset.from_arrays(Y[order], X[order], times=times, standardize=standardize)
