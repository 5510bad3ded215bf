from dataclasses import dataclass

import numpy as np
import pandas as pd

from src.core.exceptions import InvalidArgumentError
from src.core.utils.logger import setup_logger

logger = setup_logger(__name__)


@dataclass(frozen=True, eq=False)
class Dataset:
    """Paired multivariate series: responses Y (n x p) and covariates X (n x k).

    ``covariates`` keeps the raw values; ``scaled`` holds the copy on which kernels are
    evaluated. With standardization on, ``scaled = (covariates - location) / scale`` with
    the per-coordinate sample standard deviation as scale.
    """

    responses: np.ndarray
    covariates: np.ndarray
    times: pd.Index
    scaled: np.ndarray
    location: np.ndarray
    scale: np.ndarray

    @classmethod
    def from_arrays(
        cls,
        responses: np.ndarray,
        covariates: np.ndarray,
        times: pd.Index | np.ndarray | None = None,
        *,
        standardize: bool = True,
    ) -> "Dataset":
        """Validate raw arrays and build a dataset.

        Args:
            responses: Array of shape (n, p) or (n,).
            covariates: Array of shape (n, k) or (n,).
            times: Optional ordered index of length n; defaults to 0..n-1.
            standardize: Whether kernel coordinates are standardized covariates.

        Raises:
            InvalidArgumentError: On empty input, row-count mismatch, non-finite entries or
                an unordered time index.

        """
        Y = _as_matrix(responses, "responses")
        X = _as_matrix(covariates, "covariates")
        n = Y.shape[0]
        if n < 1:
            raise InvalidArgumentError("Dataset needs at least one observation")
        if X.shape[0] != n:
            raise InvalidArgumentError(
                f"Row counts differ: {n} responses vs {X.shape[0]} covariates"
            )
        if not (np.isfinite(Y).all() and np.isfinite(X).all()):
            raise InvalidArgumentError("Dataset contains non-finite entries")

        index = pd.RangeIndex(n) if times is None else pd.Index(times)
        if len(index) != n:
            raise InvalidArgumentError(f"Time index has length {len(index)}, expected {n}")
        if not (index.is_monotonic_increasing and index.is_unique):
            raise InvalidArgumentError("Time index must be strictly increasing")

        if standardize:
            location = X.mean(axis=0)
            scale = X.std(axis=0, ddof=1) if n > 1 else np.ones(X.shape[1])
            flat = ~(scale > 0)
            if flat.any():
                logger.log_warning(
                    "Constant covariate column kept on unit scale",
                    columns=np.flatnonzero(flat).tolist(),
                )
                scale = np.where(flat, 1.0, scale)
        else:
            location = np.zeros(X.shape[1])
            scale = np.ones(X.shape[1])

        return cls._build(Y, X, index, location, scale)

    @classmethod
    def _build(cls, Y, X, index, location, scale) -> "Dataset":
        scaled = (X - location) / scale
        for arr in (Y, X, scaled, location, scale):
            arr.setflags(write=False)
        return cls(Y, X, index, scaled, location, scale)

    @property
    def n(self) -> int:
        return self.responses.shape[0]

    @property
    def p(self) -> int:
        return self.responses.shape[1]

    @property
    def k(self) -> int:
        return self.covariates.shape[1]

    def take(self, indices: np.ndarray) -> "Dataset":
        """Subset rows, keeping the parent's standardization."""
        idx = np.asarray(indices)
        return self._build(
            self.responses[idx].copy(),
            self.covariates[idx].copy(),
            self.times[idx],
            self.location.copy(),
            self.scale.copy(),
        )

    def with_responses(self, responses: np.ndarray) -> "Dataset":
        """Same covariates and standardization, new responses."""
        Y = _as_matrix(responses, "responses")
        if Y.shape[0] != self.n:
            raise InvalidArgumentError(f"Expected {self.n} response rows, got {Y.shape[0]}")
        if not np.isfinite(Y).all():
            raise InvalidArgumentError("Dataset contains non-finite entries")
        return self._build(
            Y.copy(), self.covariates.copy(), self.times, self.location.copy(), self.scale.copy()
        )

    def standardize_point(self, x_raw: np.ndarray) -> np.ndarray:
        """Map a point (or rows of points) in raw covariate units to the kernel scale."""
        return (np.asarray(x_raw, dtype=float) - self.location) / self.scale

    def raw_point(self, x_std: np.ndarray) -> np.ndarray:
        return np.asarray(x_std, dtype=float) * self.scale + self.location

    def to_frame(self) -> pd.DataFrame:
        """``date, y1..yp, x1..xk`` frame with raw covariates."""
        frame = pd.DataFrame(
            np.hstack([self.responses, self.covariates]),
            columns=[f"y{j + 1}" for j in range(self.p)] + [f"x{j + 1}" for j in range(self.k)],
        )
        frame.insert(0, "date", _format_times(self.times))
        return frame


def _as_matrix(values: np.ndarray, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    if arr.ndim != 2:  # noqa: PLR2004
        raise InvalidArgumentError(f"{name} must be a matrix, got {arr.ndim} dimensions")
    return np.array(arr, copy=True)


def _format_times(times: pd.Index) -> list:
    if isinstance(times, pd.DatetimeIndex):
        return times.strftime("%Y-%m-%d").tolist()
    return list(times)
