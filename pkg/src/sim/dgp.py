"""Data-generating process for the Monte Carlo study.

Three AR(1) covariates share part of their innovations:

    X_{j,t} = phi X_{j,t-1} + eps_{j,t},   eps_{j,t} = sqrt(1 - lam) xi_{j,t} + sqrt(lam) zeta_t

and two responses load on them,

    Y_1 = (X_1 + X_2 + X_3) / 3 + e_1,     Y_2 = b_1 X_1 + b_2 X_2 + b_3 X_3 + e_2,

with centred errors from one of three designs (light tail, heavy tail, skewed).
"""

from dataclasses import dataclass, field, replace
from enum import Enum

import numpy as np
from scipy.signal import lfilter

from src.core.config import SimulationDefaults
from src.core.exceptions import InvalidArgumentError
from src.estimators.geoquantile import (
    IrlsConfig,
    direction_from_level,
    weighted_geometric_quantile,
)
from src.models.dataset import Dataset

N_COVARIATES = 3
N_RESPONSES = 2

_MASK64 = (1 << 64) - 1


class ErrorDist(Enum):
    NORMAL = "normal"
    STUDENT_T3 = "t3"
    SHIFTED_EXPONENTIAL = "shifted_exp"

    @classmethod
    def parse(cls, name: "str | ErrorDist") -> "ErrorDist":
        if isinstance(name, ErrorDist):
            return name
        try:
            return cls(name.strip().lower())
        except ValueError as e:
            raise InvalidArgumentError(f"Unknown error distribution: {name!r}") from e


@dataclass(frozen=True)
class SimConfig:
    n: int = 100
    ar_coeff: float = field(default_factory=lambda: SimulationDefaults().ar_coeff)
    common_innovation_weight: float = field(
        default_factory=lambda: SimulationDefaults().common_innovation_weight
    )
    b_coeffs: tuple[float, float, float] = field(
        default_factory=lambda: SimulationDefaults().b_coeffs
    )
    error_dist: ErrorDist = ErrorDist.NORMAL
    seed: int = field(default_factory=lambda: SimulationDefaults().seed)
    replications: int = field(default_factory=lambda: SimulationDefaults().replications)
    k: int = N_COVARIATES
    p: int = N_RESPONSES

    def __post_init__(self) -> None:
        object.__setattr__(self, "error_dist", ErrorDist.parse(self.error_dist))
        object.__setattr__(self, "b_coeffs", tuple(float(v) for v in self.b_coeffs))
        if self.k != N_COVARIATES or self.p != N_RESPONSES:
            raise InvalidArgumentError(
                "The simulation design has k=3 covariates and p=2 responses"
            )
        if self.n < 2:  # noqa: PLR2004
            raise InvalidArgumentError(f"Sample size must be at least 2, got {self.n}")
        if not -1.0 < self.ar_coeff < 1.0:
            raise InvalidArgumentError(f"AR coefficient must lie in (-1, 1), got {self.ar_coeff}")
        if not 0.0 <= self.common_innovation_weight <= 1.0:
            raise InvalidArgumentError(
                f"Common innovation weight must lie in [0, 1], got {self.common_innovation_weight}"
            )
        total = sum(self.b_coeffs)
        if len(self.b_coeffs) != N_COVARIATES or abs(total - 1.0) > 1e-12:  # noqa: PLR2004
            raise InvalidArgumentError(
                f"b coefficients must be 3 values summing to 1, got {self.b_coeffs}"
            )
        if self.replications < 1:
            raise InvalidArgumentError(f"Replications must be positive, got {self.replications}")
        if not 0 <= self.seed <= _MASK64:
            raise InvalidArgumentError(f"Seed must be an unsigned 64-bit integer, got {self.seed}")

    def with_n(self, n: int) -> "SimConfig":
        return replace(self, n=n)

    def with_error(self, error_dist: "ErrorDist | str") -> "SimConfig":
        return replace(self, error_dist=ErrorDist.parse(error_dist))


def split_seed(master_seed: int, index: int) -> int:
    """SplitMix64 of (master_seed + index) mod 2^64."""
    z = (master_seed + index + 0x9E3779B97F4A7C15) & _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def _rng(cfg: SimConfig, rng: np.random.Generator | None) -> np.random.Generator:
    return rng if rng is not None else np.random.default_rng(cfg.seed)


def simulate_covariates(cfg: SimConfig, rng: np.random.Generator | None = None) -> np.ndarray:
    """n x 3 AR(1) covariates with common innovations; X_0 from the stationary marginal."""
    rng = _rng(cfg, rng)
    lam = cfg.common_innovation_weight
    idiosyncratic = rng.standard_normal((cfg.n, N_COVARIATES))
    common = rng.standard_normal(cfg.n)
    innovations = np.sqrt(1.0 - lam) * idiosyncratic + np.sqrt(lam) * common[:, None]
    innovations[0] /= np.sqrt(1.0 - cfg.ar_coeff**2)
    return lfilter([1.0], [1.0, -cfg.ar_coeff], innovations, axis=0)


def error_draws(
    error_dist: "ErrorDist | str", size: int | tuple[int, ...], rng: np.random.Generator
) -> np.ndarray:
    """Centred errors: N(0,1), Student t with 3 degrees of freedom, or Exp(1) - 1."""
    dist = ErrorDist.parse(error_dist)
    if dist is ErrorDist.NORMAL:
        return rng.standard_normal(size)
    if dist is ErrorDist.STUDENT_T3:
        return rng.standard_t(3, size)
    return rng.exponential(1.0, size) - 1.0


def conditional_mean(X_raw: np.ndarray, cfg: SimConfig) -> np.ndarray:
    """Exact regression function E[Y | X = x] for rows of raw covariates."""
    X = np.atleast_2d(np.asarray(X_raw, dtype=float))
    return np.column_stack([X.mean(axis=1), X @ np.asarray(cfg.b_coeffs)])


def simulate_responses(
    X: np.ndarray,
    cfg: SimConfig,
    rng: np.random.Generator | None = None,
    errors: np.ndarray | None = None,
) -> np.ndarray:
    """n x 2 responses; ``errors`` overrides the drawn error matrix."""
    if errors is None:
        errors = error_draws(cfg.error_dist, (len(X), N_RESPONSES), _rng(cfg, rng))
    return conditional_mean(X, cfg) + np.asarray(errors, dtype=float)


def simulate_dataset(cfg: SimConfig, rng: np.random.Generator | None = None) -> Dataset:
    rng = _rng(cfg, rng)
    X = simulate_covariates(cfg, rng)
    Y = simulate_responses(X, cfg, rng)
    return Dataset.from_arrays(Y, X)


def evaluation_grid(
    X_raw: np.ndarray,
    size: int,
    rng: np.random.Generator,
    coverage: float | None = None,
) -> np.ndarray:
    """Sample ``size`` observed covariate rows lying inside the central ``coverage`` band
    of every coordinate's empirical distribution."""
    coverage = SimulationDefaults().grid_coverage if coverage is None else coverage
    if not 0.0 < coverage <= 1.0:
        raise InvalidArgumentError(f"Grid coverage must lie in (0, 1], got {coverage}")
    tail = (1.0 - coverage) / 2.0
    lo, hi = np.quantile(X_raw, [tail, 1.0 - tail], axis=0)
    eligible = np.flatnonzero(((X_raw >= lo) & (X_raw <= hi)).all(axis=1))
    if len(eligible) < size:
        raise InvalidArgumentError(
            f"Only {len(eligible)} observations lie in the central region, need {size}"
        )
    rows = np.sort(rng.choice(eligible, size=size, replace=False))
    return np.asarray(X_raw)[rows]


def oracle_error_quantiles(
    error_dist: "ErrorDist | str",
    levels: list[float],
    n_draws: int,
    rng: np.random.Generator,
    cfg: IrlsConfig | None = None,
) -> dict[float, np.ndarray]:
    """Geometric quantiles of the bivariate error distribution from ``n_draws`` draws."""
    draws = error_draws(error_dist, (n_draws, N_RESPONSES), rng)
    weights = np.ones(n_draws)
    cfg = cfg or IrlsConfig(max_iter=2000, tol=1e-10)
    return {
        float(tau): weighted_geometric_quantile(
            draws, weights, direction_from_level(tau, N_RESPONSES), cfg
        ).q
        for tau in levels
    }


def oracle_truths(  # noqa: PLR0913
    grid_raw: np.ndarray,
    cfg: SimConfig,
    levels: list[float],
    n_draws: int | None = None,
    rng: np.random.Generator | None = None,
    error_quantiles: dict[float, np.ndarray] | None = None,
) -> dict[str, np.ndarray]:
    """Ground truth at every grid row: ``"mean"`` and one entry per level τ.

    The conditional law of Y given x is the error law shifted by the regression function,
    so each conditional geometric quantile is mu(x) plus the error quantile, which is
    computed once from Monte Carlo draws and shared across the grid.
    """
    mean = conditional_mean(grid_raw, cfg)
    if error_quantiles is None:
        n_draws = SimulationDefaults().oracle_draws if n_draws is None else n_draws
        error_quantiles = oracle_error_quantiles(cfg.error_dist, levels, n_draws, _rng(cfg, rng))
    truths = {"mean": mean}
    for tau in levels:
        truths[target_name(tau)] = mean + error_quantiles[float(tau)]
    return truths


def target_name(tau: float | None) -> str:
    return "mean" if tau is None else f"quantile-{float(tau):g}"
