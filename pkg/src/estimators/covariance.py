"""Kernel-weighted conditional covariance Sigma_hat(x) and its determinant."""

from dataclasses import dataclass

import numpy as np

from src.core.exceptions import DiagnosticsError, InvalidArgumentError, ResidualEvaluationError
from src.core.utils.logger import setup_logger
from src.estimators.mean import in_sample_means, nw_weights
from src.models.dataset import Dataset
from src.models.kernels import Bandwidth, KernelSpec, as_bandwidth

logger = setup_logger(__name__)

PSD_TOLERANCE = 1e-10


@dataclass(frozen=True)
class CovEstimate:
    matrix: np.ndarray
    generalized_variance: float
    bandwidth: Bandwidth


def weighted_residual_cov(residuals: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """sum_t w_t r_t r_t^T, symmetrized."""
    R = np.atleast_2d(np.asarray(residuals, dtype=float))
    w = np.asarray(weights, dtype=float)
    if R.shape[0] != w.shape[0]:
        raise InvalidArgumentError(f"{R.shape[0]} residual rows but {w.shape[0]} weights")
    matrix = (R * w[:, None]).T @ R
    return 0.5 * (matrix + matrix.T)


def generalized_variance(cov: "CovEstimate | np.ndarray") -> float:
    """det Sigma, with values within -1e-10 of zero clamped to 0."""
    matrix = cov.matrix if isinstance(cov, CovEstimate) else np.asarray(cov, dtype=float)
    det = float(np.linalg.det(matrix))
    if -PSD_TOLERANCE <= det < 0:
        return 0.0
    return det


def estimate_cov(  # noqa: PLR0913
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b_cov: Bandwidth | float,
    b_mean: Bandwidth | float | None = None,
    *,
    fitted: np.ndarray | None = None,
) -> CovEstimate:
    """Sigma_hat(x) = sum_t nu_t(x) (Y_t - mu_hat(X_t)) (Y_t - mu_hat(X_t))^T.

    Args:
        data: Dataset.
        x: Evaluation point on the standardized scale.
        spec: Kernel.
        b_cov: Bandwidth of the outer weights nu_t(x).
        b_mean: Bandwidth of the in-sample mean fits; defaults to ``b_cov``.
        fitted: Precomputed ``in_sample_means(data, spec, b_mean)`` (n x p) to share
            across many evaluation points.

    Returns:
        CovEstimate: Symmetric PSD matrix with its determinant.

    Raises:
        EmptyNeighborhoodError: If no observation carries weight at ``x``.
        ResidualEvaluationError: If the mean fit is undefined at a weighted X_t.
        DiagnosticsError: If the result has an eigenvalue below -1e-10.

    """
    b_cov = as_bandwidth(b_cov)
    b_mean = b_cov if b_mean is None else as_bandwidth(b_mean)

    weights = nw_weights(data, x, spec, b_cov)
    support = np.flatnonzero(weights > 0)
    if fitted is None:
        local_fit = in_sample_means(data, spec, b_mean, rows=support)
    else:
        local_fit = np.asarray(fitted, dtype=float)[support]

    missing = np.isnan(local_fit).any(axis=1)
    if missing.any():
        raise ResidualEvaluationError(
            f"Mean fit undefined at {int(missing.sum())} weighted observation(s) "
            f"with bandwidth {b_mean.value:g}"
        )

    residuals = data.responses[support] - local_fit
    matrix = weighted_residual_cov(residuals, weights[support])

    smallest = float(np.linalg.eigvalsh(matrix).min())
    if smallest < -PSD_TOLERANCE:
        logger.log_error(
            "Covariance estimate is not positive semidefinite",
            ex=DiagnosticsError(f"smallest eigenvalue {smallest:g}"),
            smallest_eigenvalue=smallest,
        )
        raise DiagnosticsError(f"Covariance estimate has eigenvalue {smallest:g}")

    return CovEstimate(
        matrix=matrix, generalized_variance=generalized_variance(matrix), bandwidth=b_cov
    )


def covariance_components(cov: "CovEstimate | np.ndarray") -> dict[str, float]:
    """Upper-triangle entries keyed ``s11``, ``s12``, ``s22``, ..."""
    matrix = cov.matrix if isinstance(cov, CovEstimate) else np.asarray(cov, dtype=float)
    p = matrix.shape[0]
    return {f"s{i + 1}{j + 1}": float(matrix[i, j]) for i in range(p) for j in range(i, p)}
