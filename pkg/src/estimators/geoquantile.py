"""Conditional geometric quantiles fitted by iteratively reweighted least squares.

For a direction u in the open unit ball the sample objective at covariate value x is

    M(q) = n^-1 sum_t K_b(x - X_t) (||Y_t - q|| + <u, Y_t - q>)

and each IRLS step minimizes the quadratic majorizer built from the current distances
d_t = ||Y_t - q_k||:

    q_{k+1} = (drift * sum_t K_t u + sum_t c_t Y_t) / sum_t c_t,
    c_t = K_t^2 / (K_t d_t + stabilizer).

With ``drift_factor = 1`` the iterates minimize M itself. A general factor makes the
scheme minimize the objective for the direction ``drift_factor * u``, which is what the
trace and the descent safeguard are evaluated on.
"""

import time
from dataclasses import dataclass, field
from math import sqrt

import numpy as np
from scipy.spatial.distance import pdist, squareform

from src.core.config import EstimationConfig
from src.core.exceptions import DegeneratePointError, EmptyNeighborhoodError, InvalidArgumentError
from src.core.utils.logger import setup_logger
from src.estimators.mean import kernel_weights
from src.models.dataset import Dataset
from src.models.kernels import Bandwidth, KernelSpec, as_bandwidth

logger = setup_logger(__name__)

# relative round-off allowed when comparing successive objective values
DESCENT_SLACK = 1e-12


@dataclass(frozen=True, eq=False)
class Direction:
    """Direction vector u with ||u|| < 1 and, optionally, the scalar level it encodes."""

    u: np.ndarray
    level_tag: float | None = None

    def __post_init__(self) -> None:
        u = np.atleast_1d(np.asarray(self.u, dtype=float)).copy()
        if u.ndim != 1 or not np.isfinite(u).all():
            raise InvalidArgumentError(f"Direction must be a finite vector, got {self.u!r}")
        if not np.linalg.norm(u) < 1.0:
            raise InvalidArgumentError(
                f"Direction must lie in the open unit ball, got norm {np.linalg.norm(u):.6g}"
            )
        u.setflags(write=False)
        object.__setattr__(self, "u", u)

    @property
    def p(self) -> int:
        return self.u.shape[0]


def direction_from_level(tau: float, p: int) -> Direction:
    """u = (2 tau - 1) (1/sqrt(p), ..., 1/sqrt(p)); tau = 0.5 gives the spatial median."""
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"Quantile level must lie in (0, 1), got {tau}")
    if int(p) != p or p < 1:
        raise InvalidArgumentError(f"Response dimension must be a positive integer, got {p}")
    return Direction(u=np.full(int(p), (2.0 * tau - 1.0) / sqrt(p)), level_tag=float(tau))


def as_direction(u: "Direction | np.ndarray | float", p: int | None = None) -> Direction:
    direction = u if isinstance(u, Direction) else Direction(u=np.atleast_1d(u))
    if p is not None and direction.p != p:
        raise InvalidArgumentError(f"Direction has length {direction.p}, responses have p={p}")
    return direction


@dataclass(frozen=True)
class IrlsConfig:
    max_iter: int = field(default_factory=lambda: EstimationConfig().irls_max_iter)
    tol: float = field(default_factory=lambda: EstimationConfig().irls_tol)
    stabilizer: float = field(default_factory=lambda: EstimationConfig().irls_stabilizer)
    drift_factor: float = 1.0

    def __post_init__(self) -> None:
        if int(self.max_iter) != self.max_iter or self.max_iter < 1:
            raise InvalidArgumentError(f"max_iter must be a positive integer, got {self.max_iter}")
        if not self.tol > 0:
            raise InvalidArgumentError(f"tol must be positive, got {self.tol}")
        if not self.stabilizer >= 0:
            raise InvalidArgumentError(f"stabilizer must be non-negative, got {self.stabilizer}")
        if not self.drift_factor > 0:
            raise InvalidArgumentError(f"drift_factor must be positive, got {self.drift_factor}")


@dataclass(frozen=True)
class QuantileEstimate:
    q: np.ndarray
    iterations: int
    objective_trace: tuple[float, ...]
    foc_residual_norm: float
    converged: bool
    direction: Direction | None = None


def _local_problem(
    data: Dataset, x: np.ndarray, spec: KernelSpec, b: Bandwidth
) -> tuple[np.ndarray, np.ndarray]:
    """Kernel weights and responses of the observations with positive weight at x."""
    K = kernel_weights(data, x, spec, b)
    support = K > 0
    if not support.any():
        raise EmptyNeighborhoodError(
            f"No observation carries kernel weight at x={np.round(x, 6).tolist()} "
            f"with bandwidth {b.value:g}"
        )
    return K[support], data.responses[support]


def _objective(K: np.ndarray, Y: np.ndarray, u: np.ndarray, q: np.ndarray, n: int) -> float:
    diffs = Y - q
    return float(K @ (np.linalg.norm(diffs, axis=1) + diffs @ u)) / n


def _step(
    K: np.ndarray, Y: np.ndarray, u: np.ndarray, q: np.ndarray, cfg: IrlsConfig
) -> np.ndarray:
    dist = np.linalg.norm(Y - q, axis=1)
    scaled = K * dist + cfg.stabilizer
    if (scaled <= 0).any():
        raise DegeneratePointError(
            "Unstabilized IRLS weight is infinite: iterate coincides with a data point"
        )
    c = K**2 / scaled
    denom = float(c.sum())
    if not denom > 0 or not np.isfinite(denom):
        raise EmptyNeighborhoodError("All IRLS weights vanish")
    return (cfg.drift_factor * K.sum() * u + c @ Y) / denom


def _foc(K: np.ndarray, Y: np.ndarray, u: np.ndarray, q: np.ndarray) -> float:
    diffs = Y - q
    dist = np.linalg.norm(diffs, axis=1)
    # terms at zero distance contribute their limit 0
    live = dist > 0
    total = (K[live, None] * (diffs[live] / dist[live, None] + u)).sum(axis=0)
    return float(np.linalg.norm(total) / K.sum())


def weighted_geometric_quantile(
    responses: np.ndarray,
    weights: np.ndarray,
    u: "Direction | np.ndarray",
    cfg: IrlsConfig | None = None,
    n: int | None = None,
) -> QuantileEstimate:
    """Minimize sum_t w_t (||Y_t - q|| + <u, Y_t - q>) by IRLS.

    Args:
        responses: Points Y_t, shape (m, p).
        weights: Non-negative weights w_t; rows with zero weight are ignored.
        u: Direction.
        cfg: Iteration settings.
        n: Normalizer of the recorded objective; defaults to m.

    Returns:
        QuantileEstimate: Fitted point with its objective trace and FOC residual.

    """
    cfg = cfg or IrlsConfig()
    Y = np.atleast_2d(np.asarray(responses, dtype=float))
    K = np.asarray(weights, dtype=float)
    n = n or Y.shape[0]
    direction = as_direction(u, Y.shape[1])
    keep = K > 0
    if not keep.any():
        raise EmptyNeighborhoodError("All observation weights are zero")
    K, Y = K[keep], Y[keep]
    u_vec = direction.u
    u_eff = cfg.drift_factor * u_vec

    start_time = time.time()
    if (Y == Y[0]).all():
        q = Y[0].copy()
        return QuantileEstimate(
            q=q,
            iterations=0,
            objective_trace=(_objective(K, Y, u_eff, q, n),),
            foc_residual_norm=0.0,
            converged=True,
            direction=direction,
        )

    q = (K @ Y) / K.sum()
    trace = [_objective(K, Y, u_eff, q, n)]
    converged = False
    iterations = 0
    for iteration in range(1, cfg.max_iter + 1):
        try:
            q_next = _step(K, Y, u_vec, q, cfg)
        except DegeneratePointError:
            logger.log_debug("IRLS stopped on a data point", iteration=iteration)
            break
        step = float(np.linalg.norm(q_next - q))
        small = step <= cfg.tol * (1.0 + float(np.linalg.norm(q)))
        value = _objective(K, Y, u_eff, q_next, n)
        if value > trace[-1] + DESCENT_SLACK * max(1.0, abs(trace[-1])):
            # ascent can only come from the stabilizer near a data point; keep q
            converged = small
            break
        q = q_next
        trace.append(min(value, trace[-1]))
        iterations = iteration
        if small:
            converged = True
            break

    elapsed_ms = (time.time() - start_time) * 1000
    logger.log_fit(
        "irls",
        iterations,
        elapsed_ms,
        converged=converged,
        p=Y.shape[1],
        support=int(K.shape[0]),
    )
    if not converged:
        logger.log_warning(
            "IRLS did not converge", max_iter=cfg.max_iter, iterations=iterations
        )
    return QuantileEstimate(
        q=q,
        iterations=iterations,
        objective_trace=tuple(trace),
        foc_residual_norm=_foc(K, Y, u_vec, q),
        converged=converged,
        direction=direction,
    )


def objective_value(  # noqa: PLR0913
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b: Bandwidth | float,
    u: "Direction | np.ndarray",
    q: np.ndarray,
) -> float:
    """Sample objective n^-1 sum_t K_b(x - X_t) (||Y_t - q|| + <u, Y_t - q>)."""
    K, Y = _local_problem(data, x, spec, as_bandwidth(b))
    direction = as_direction(u, data.p)
    return _objective(K, Y, direction.u, np.asarray(q, dtype=float), data.n)


def irls_step(  # noqa: PLR0913
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b: Bandwidth | float,
    u: "Direction | np.ndarray",
    q_k: np.ndarray,
    cfg: IrlsConfig | None = None,
) -> np.ndarray:
    """One IRLS update from ``q_k``."""
    K, Y = _local_problem(data, x, spec, as_bandwidth(b))
    direction = as_direction(u, data.p)
    return _step(K, Y, direction.u, np.asarray(q_k, dtype=float), cfg or IrlsConfig())


def estimate_quantile(  # noqa: PLR0913
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b: Bandwidth | float,
    u: "Direction | np.ndarray",
    cfg: IrlsConfig | None = None,
) -> QuantileEstimate:
    """Conditional geometric quantile q_hat(u, x), iterated from the kernel-weighted mean.

    Non-convergence is reported through ``converged=False`` rather than raised. When every
    weighted observation is the same point, that point is returned as converged.

    Raises:
        EmptyNeighborhoodError: If no observation carries kernel weight at ``x``.

    """
    K, Y = _local_problem(data, x, spec, as_bandwidth(b))
    return weighted_geometric_quantile(Y, K, as_direction(u, data.p), cfg, n=data.n)


def foc_residual(  # noqa: PLR0913
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b: Bandwidth | float,
    u: "Direction | np.ndarray",
    q: np.ndarray,
) -> float:
    """|| sum_t K_t [(Y_t - q) / ||Y_t - q|| + u] || / sum_t K_t.

    Terms with Y_t = q are skipped.

    Raises:
        EmptyNeighborhoodError: If no observation carries kernel weight at ``x``.

    """
    K, Y = _local_problem(data, x, spec, as_bandwidth(b))
    return _foc(K, Y, as_direction(u, data.p).u, np.asarray(q, dtype=float))


@dataclass(frozen=True)
class NonCrossingReport:
    levels: tuple[float, ...]
    directions: tuple[Direction, ...]
    quantiles: np.ndarray
    distances: np.ndarray
    min_separation: float
    separation_floor: float
    passed: bool
    converged: tuple[bool, ...] = ()


def check_noncrossing(  # noqa: PLR0913
    data: Dataset,
    x: np.ndarray,
    spec: KernelSpec,
    b: Bandwidth | float,
    levels: list[float],
    cfg: IrlsConfig | None = None,
    separation_floor: float | None = None,
) -> tuple[bool, NonCrossingReport]:
    """Fit every level at ``x`` and check that the fitted quantiles are pairwise distinct.

    Returns:
        tuple[bool, NonCrossingReport]: Whether every pairwise distance exceeds the
            separation floor, and the report with the full distance matrix.

    """
    levels = [float(tau) for tau in levels]
    if len(set(levels)) != len(levels):
        raise InvalidArgumentError(f"Quantile levels must be distinct, got {levels}")
    floor = EstimationConfig().separation_floor if separation_floor is None else separation_floor

    directions = [direction_from_level(tau, data.p) for tau in levels]
    fits = [estimate_quantile(data, x, spec, b, d, cfg) for d in directions]
    quantiles = np.vstack([fit.q for fit in fits])
    if len(levels) > 1:
        pairwise = pdist(quantiles)
        distances = squareform(pairwise)
        min_sep = float(pairwise.min())
    else:
        distances = np.zeros((1, 1))
        min_sep = float("inf")
    passed = min_sep > floor

    if not passed:
        logger.log_warning(
            "Fitted quantiles cross", levels=levels, min_separation=min_sep, floor=floor
        )
    report = NonCrossingReport(
        levels=tuple(levels),
        directions=tuple(directions),
        quantiles=quantiles,
        distances=distances,
        min_separation=min_sep,
        separation_floor=floor,
        passed=passed,
        converged=tuple(fit.converged for fit in fits),
    )
    return passed, report
