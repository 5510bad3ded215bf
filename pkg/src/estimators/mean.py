"""Nadaraya-Watson conditional mean, kernel density, jackknife correction and bands."""

from dataclasses import dataclass
from math import sqrt
from typing import Literal

import numpy as np
from scipy import stats

from src.core.exceptions import DegeneratePointError, EmptyNeighborhoodError, InvalidArgumentError
from src.core.utils.logger import setup_logger
from src.models.dataset import Dataset
from src.models.kernels import (
    Bandwidth,
    KernelSpec,
    as_bandwidth,
    jackknife_variance_constant,
    kernel_constants,
    kernel_values,
    scaled_kernel_values,
)

logger = setup_logger(__name__)

JACKKNIFE_RATIO = sqrt(2.0)

VarianceConstant = Literal["kernel", "jackknife"]


@dataclass(frozen=True)
class MeanEstimate:
    point: np.ndarray
    density: float
    effective_mass: float
    bandwidth: Bandwidth


@dataclass(frozen=True)
class BandResult:
    """Confidence interval for the linear functional a^T mu(x)."""

    center: float
    half_width: float
    contrast: np.ndarray
    level: float

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width


def check_point(data: Dataset, x: np.ndarray, spec: KernelSpec) -> np.ndarray:
    """Coerce an evaluation point on the standardized scale and check its dimension."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.ndim != 1 or x.shape[0] != data.k or spec.dim != data.k:
        raise InvalidArgumentError(
            f"Evaluation point of shape {x.shape} does not match covariate dimension "
            f"{data.k} / kernel dimension {spec.dim}"
        )
    return x


def kernel_weights(
    data: Dataset, x: np.ndarray, spec: KernelSpec, b: Bandwidth | float
) -> np.ndarray:
    """Unnormalized weights K_b(x - X_t) for every observation."""
    x = check_point(data, x, spec)
    return scaled_kernel_values(spec, as_bandwidth(b), x - data.scaled)


def _normalize(raw: np.ndarray, x: np.ndarray, b: Bandwidth) -> tuple[np.ndarray, float]:
    total = float(raw.sum())
    if not total > 0:
        raise EmptyNeighborhoodError(
            f"No observation carries kernel weight at x={np.round(x, 6).tolist()} "
            f"with bandwidth {b.value:g}"
        )
    return raw / total, total


def nw_weights(
    data: Dataset, x: np.ndarray, spec: KernelSpec, b: Bandwidth | float
) -> np.ndarray:
    """Nadaraya-Watson weights nu_t(x), non-negative and summing to one.

    Raises:
        EmptyNeighborhoodError: If every kernel weight vanishes at ``x``.

    """
    b = as_bandwidth(b)
    weights, _ = _normalize(kernel_weights(data, x, spec, b), np.asarray(x, dtype=float), b)
    return weights


def estimate_mean(
    data: Dataset, x: np.ndarray, spec: KernelSpec, b: Bandwidth | float
) -> MeanEstimate:
    """Local constant estimate mu_hat(x) = sum_t nu_t(x) Y_t with the density f_hat(x)."""
    b = as_bandwidth(b)
    raw = kernel_weights(data, x, spec, b)
    weights, total = _normalize(raw, np.asarray(x, dtype=float), b)
    return MeanEstimate(
        point=weights @ data.responses,
        density=total / data.n,
        effective_mass=total,
        bandwidth=b,
    )


def jackknife_mean(
    data: Dataset, x: np.ndarray, spec: KernelSpec, b: Bandwidth | float
) -> np.ndarray:
    """Bias-corrected mean 2 mu_hat_b(x) - mu_hat_{sqrt(2) b}(x)."""
    b = as_bandwidth(b)
    narrow = estimate_mean(data, x, spec, b).point
    wide = estimate_mean(data, x, spec, b.scaled(JACKKNIFE_RATIO)).point
    return 2.0 * narrow - wide


def in_sample_means(
    data: Dataset,
    spec: KernelSpec,
    b: Bandwidth | float,
    rows: np.ndarray | None = None,
    chunk_size: int = 512,
) -> np.ndarray:
    """mu_hat(X_t) at the requested observations (all by default), leaving t in.

    Rows whose neighbourhood is empty come back as NaN; callers decide whether that
    matters for them.
    """
    b = as_bandwidth(b)
    targets = data.scaled if rows is None else data.scaled[np.asarray(rows)]
    fitted = np.full((len(targets), data.p), np.nan)
    for start in range(0, len(targets), chunk_size):
        block = targets[start : start + chunk_size]
        diffs = (block[:, None, :] - data.scaled[None, :, :]) / b.value
        K = kernel_values(spec, diffs.reshape(-1, data.k)).reshape(len(block), data.n)
        mass = K.sum(axis=1)
        ok = mass > 0
        out = np.full((len(block), data.p), np.nan)
        out[ok] = (K[ok] @ data.responses) / mass[ok, None]
        fitted[start : start + len(block)] = out
    return fitted


def chi2_quantile(p: int, alpha: float) -> float:
    """Upper quantile chi^2_{p; 1-alpha}."""
    if not 0 < alpha < 1:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    return float(stats.chi2.ppf(1.0 - alpha, df=p))


def band_half_width(phi_K: float, chi2: float, quad_form: float, effective_size: float) -> float:
    """sqrt(phi_K chi2 a^T Sigma a / (n b^k f_hat))."""
    if not effective_size > 0:
        raise DegeneratePointError("Band undefined where the density estimate is not positive")
    return sqrt(phi_K * chi2 * max(quad_form, 0.0) / effective_size)


def confidence_band(  # noqa: PLR0913
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b: Bandwidth | float,
    a: np.ndarray,
    alpha: float,
    *,
    cov_matrix: np.ndarray | None = None,
    b_cov: Bandwidth | float | None = None,
    variance_constant: VarianceConstant = "kernel",
) -> BandResult:
    """Band for a^T mu(x) centred at the jackknife estimate.

    Args:
        data: Dataset.
        x: Evaluation point on the standardized scale.
        spec: Kernel.
        b: Mean bandwidth.
        a: Contrast vector of length p.
        alpha: Significance level in (0, 1).
        cov_matrix: Precomputed Sigma_hat(x); estimated with ``b_cov`` (default ``b``)
            when omitted.
        b_cov: Outer bandwidth for the covariance estimate.
        variance_constant: ``"kernel"`` scales by phi_K; ``"jackknife"`` by the variance
            constant of the bias-corrected centre (see
            :func:`src.models.kernels.jackknife_variance_constant`).

    Returns:
        BandResult: Centre, half width, contrast and confidence level 1 - alpha.

    Raises:
        DegeneratePointError: If the density estimate at ``x`` is not positive.

    """
    b = as_bandwidth(b)
    a = np.atleast_1d(np.asarray(a, dtype=float))
    if a.shape != (data.p,):
        raise InvalidArgumentError(f"Contrast must have length {data.p}, got shape {a.shape}")
    chi2 = chi2_quantile(data.p, alpha)

    estimate = estimate_mean(data, x, spec, b)
    if not estimate.density > 0:
        raise DegeneratePointError("Density estimate is not positive at the evaluation point")
    if cov_matrix is None:
        from src.estimators.covariance import estimate_cov  # noqa: PLC0415

        cov_matrix = estimate_cov(data, x, spec, b_cov or b, b).matrix

    center = float(a @ jackknife_mean(data, x, spec, b))
    effective_size = data.n * b.value**spec.dim * estimate.density
    if variance_constant == "jackknife":
        phi = jackknife_variance_constant(spec)
    elif variance_constant == "kernel":
        phi = kernel_constants(spec).phi_K
    else:
        raise InvalidArgumentError(f"Unknown variance constant: {variance_constant!r}")
    half_width = band_half_width(phi, chi2, float(a @ cov_matrix @ a), effective_size)
    return BandResult(center=center, half_width=half_width, contrast=a, level=1.0 - alpha)


def basis_bands(
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b: Bandwidth | float,
    alpha: float,
    *,
    cov_matrix: np.ndarray | None = None,
    b_cov: Bandwidth | float | None = None,
    variance_constant: VarianceConstant = "kernel",
) -> list[BandResult]:
    """Bands for every basis contrast e_1..e_p (family-wise level 1 - alpha)."""
    if cov_matrix is None:
        from src.estimators.covariance import estimate_cov  # noqa: PLC0415

        cov_matrix = estimate_cov(data, x, spec, b_cov or b, b).matrix
    return [
        confidence_band(
            data, x, spec, b, row, alpha, cov_matrix=cov_matrix, variance_constant=variance_constant
        )
        for row in np.eye(data.p)
    ]
