"""Monte Carlo harness: RMSE / relative-MAPE tables and confidence-band coverage."""

import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.metrics import mean_absolute_percentage_error, mean_squared_error
from tqdm import tqdm

from src.core.config import RuntimeConfig, SimulationDefaults
from src.core.exceptions import GeoquantError, InvalidArgumentError
from src.core.utils.logger import setup_logger
from src.estimators.bandwidth import CvConfig, anchored_rate_bandwidth, blocked_cv_bandwidth
from src.estimators.covariance import estimate_cov
from src.estimators.geoquantile import IrlsConfig, direction_from_level, estimate_quantile
from src.estimators.mean import basis_bands, estimate_mean, in_sample_means
from src.models.kernels import default_spec
from src.sim.dgp import (
    N_COVARIATES,
    ErrorDist,
    SimConfig,
    conditional_mean,
    evaluation_grid,
    oracle_error_quantiles,
    oracle_truths,
    simulate_dataset,
    split_seed,
    target_name,
)

logger = setup_logger(__name__)

# seed streams that cannot collide with sample sizes
ORACLE_STREAM = 1 << 40
ANCHOR_STREAM = (1 << 40) + 1
COVERAGE_STREAM = (1 << 40) + 2


def parse_target(target: "str | float | None") -> float | None:
    """``"mean"``/None -> None; ``0.95`` or ``"quantile-0.95"`` -> 0.95."""
    if target is None or target == "mean":
        return None
    if isinstance(target, str):
        text = target.removeprefix("quantile-")
        try:
            target = float(text)
        except ValueError as e:
            raise InvalidArgumentError(f"Unknown Monte Carlo target: {target!r}") from e
    tau = float(target)
    if not 0.0 < tau < 1.0:
        raise InvalidArgumentError(f"Quantile target must lie in (0, 1), got {tau}")
    return tau


@dataclass(frozen=True)
class McRow:
    n: int
    error_dist: str
    target: str
    rmse: float
    relative_mape: float
    replications_used: int


@dataclass(frozen=True)
class McReport:
    rows: tuple[McRow, ...]
    seed: int
    replications: int

    COLUMNS = ("n", "error_dist", "target", "rmse", "relative_mape", "replications_used")

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame(
            [[getattr(row, c) for c in self.COLUMNS] for row in self.rows],
            columns=list(self.COLUMNS),
        )

    def to_csv(self, path: str) -> None:
        self.to_frame().to_csv(path, index=False)

    def row(self, n: int, error_dist: "ErrorDist | str", target: str) -> McRow:
        dist = ErrorDist.parse(error_dist).value
        for row in self.rows:
            if row.n == n and row.error_dist == dist and row.target == target:
                return row
        raise KeyError((n, dist, target))

    def pretty(self) -> str:
        header = (
            f"{'Errors':<12} | {'Target':<16} | {'n':>6} | {'RMSE':^10} | "
            f"{'Rel. MAPE':^10} | {'Reps':>5}"
        )
        separator = f"{'-' * 12} | {'-' * 16} | {'-' * 6} | {'-' * 10} | {'-' * 10} | {'-' * 5}"
        lines = [header, separator]
        for row in self.rows:
            lines.append(
                f"{row.error_dist:<12} | {row.target:<16} | {row.n:>6} | {row.rmse:^10.3f} | "
                f"{row.relative_mape:^10.3f} | {row.replications_used:>5}"
            )
        return "\n".join(lines)


@dataclass
class _Outcome:
    estimates: dict[str, np.ndarray]
    truths: dict[str, np.ndarray]
    failed_fraction: float
    failures: list[str] = field(default_factory=list)


def _fit_grid(fit, grid: np.ndarray, name: str, failures: list[str]) -> np.ndarray:
    out = np.full((len(grid), 2), np.nan)
    for i, x in enumerate(grid):
        try:
            out[i] = fit(x)
        except GeoquantError as e:
            failures.append(f"{name}[{i}]: {e.category}")
    return out


def _replication(  # noqa: PLR0913
    cfg: SimConfig,
    seed: int,
    targets: list[float | None],
    b_quantile: float | None,
    error_quantiles: dict[float, np.ndarray],
    grid_size: int,
    cv_cfg: CvConfig | None,
    irls_cfg: IrlsConfig | None,
) -> _Outcome:
    rng = np.random.default_rng(seed)
    data = simulate_dataset(cfg, rng)
    grid_raw = evaluation_grid(data.covariates, grid_size, rng)
    levels = [tau for tau in targets if tau is not None]
    truths = oracle_truths(grid_raw, cfg, levels, error_quantiles=error_quantiles)
    grid = data.standardize_point(grid_raw)
    spec = default_spec(N_COVARIATES)

    failures: list[str] = []
    estimates = {}
    for tau in targets:
        name = target_name(tau)
        if tau is None:
            b_mean = blocked_cv_bandwidth(data, spec, cv_cfg, n_jobs=1).selected
            estimates[name] = _fit_grid(
                lambda x, b=b_mean: estimate_mean(data, x, spec, b).point, grid, name, failures
            )
        else:
            direction = direction_from_level(tau, cfg.p)
            estimates[name] = _fit_grid(
                lambda x, d=direction: estimate_quantile(data, x, spec, b_quantile, d, irls_cfg).q,
                grid,
                name,
                failures,
            )
    return _Outcome(
        estimates=estimates,
        truths={target_name(tau): truths[target_name(tau)] for tau in targets},
        failed_fraction=len(failures) / (len(grid) * len(targets)),
        failures=failures,
    )


def _pooled_metrics(outcomes: list[_Outcome], name: str) -> tuple[float, float]:
    if not outcomes:
        return float("nan"), float("nan")
    truth = np.vstack([o.truths[name] for o in outcomes])
    est = np.vstack([o.estimates[name] for o in outcomes])
    ok = np.isfinite(est).all(axis=1)
    if not ok.any():
        return float("nan"), float("nan")
    rmse = float(np.sqrt(mean_squared_error(truth[ok], est[ok])))
    mape = float(mean_absolute_percentage_error(truth[ok], est[ok]))
    return rmse, mape


def run_monte_carlo(  # noqa: PLR0913, PLR0915
    cfg: SimConfig,
    targets: list["str | float | None"] | None = None,
    sample_sizes: list[int] | None = None,
    error_dists: list["ErrorDist | str"] | None = None,
    *,
    n_jobs: int | None = None,
    grid_size: int | None = None,
    oracle_draws: int | None = None,
    cv_cfg: CvConfig | None = None,
    irls_cfg: IrlsConfig | None = None,
    progress: bool = True,
) -> McReport:
    """Replicate the simulation design and tabulate estimation error against ground truth.

    Per replication the data are simulated, the mean bandwidth is chosen by blocked CV,
    every target is fitted at a seeded interior grid and compared with the oracle. The
    quantile bandwidth follows the rate rule anchored at a CV bandwidth chosen once per
    error design at the smallest sample size. Replications where more than the allowed
    share of grid fits fail are discarded.

    Args:
        cfg: Simulation design; ``cfg.n`` is ignored in favour of ``sample_sizes``.
        targets: ``"mean"`` and/or quantile levels; defaults to the mean and the
            configured levels.
        sample_sizes: Sample sizes; the smallest is the relative-MAPE baseline.
        error_dists: Error designs; defaults to all three.
        n_jobs: joblib workers over replications.
        grid_size: Evaluation points per replication.
        oracle_draws: Draws for the ground-truth error quantiles.
        cv_cfg: Blocked-CV settings.
        irls_cfg: IRLS settings.
        progress: Show tqdm progress bars.

    Returns:
        McReport: One row per (error design, target, n).

    """
    defaults = SimulationDefaults()
    n_jobs = RuntimeConfig().n_jobs if n_jobs is None else n_jobs
    grid_size = grid_size or defaults.grid_size
    oracle_draws = oracle_draws or defaults.oracle_draws
    parsed = [parse_target(t) for t in (targets or ["mean", *defaults.levels])]
    levels = [tau for tau in parsed if tau is not None]
    sizes = sorted(sample_sizes or defaults.sample_sizes)
    baseline = sizes[0]
    dists = [ErrorDist.parse(d) for d in (error_dists or list(ErrorDist))]
    spec = default_spec(N_COVARIATES)

    overall_start = time.time()
    rows: list[McRow] = []
    for dist in dists:
        dist_cfg = cfg.with_error(dist)
        dist_seed = split_seed(cfg.seed, list(ErrorDist).index(dist))
        error_quantiles = oracle_error_quantiles(
            dist, levels, oracle_draws, np.random.default_rng(split_seed(dist_seed, ORACLE_STREAM))
        )
        b_anchor = None
        if levels:
            anchor_data = simulate_dataset(
                dist_cfg.with_n(baseline),
                np.random.default_rng(split_seed(dist_seed, ANCHOR_STREAM)),
            )
            b_anchor = blocked_cv_bandwidth(anchor_data, spec, cv_cfg, n_jobs=1).selected
            logger.log_info(
                "Quantile bandwidth anchored", error_dist=dist.value, bandwidth=b_anchor.value
            )

        metrics: dict[str, dict[int, tuple[float, float, int]]] = {
            target_name(tau): {} for tau in parsed
        }
        for n in sizes:
            start_time = time.time()
            b_q = (
                anchored_rate_bandwidth(n, N_COVARIATES, b_anchor, baseline).value
                if b_anchor is not None
                else None
            )
            n_seed = split_seed(dist_seed, n)
            outcomes = Parallel(n_jobs=n_jobs)(
                delayed(_replication)(
                    dist_cfg.with_n(n),
                    split_seed(n_seed, r),
                    parsed,
                    b_q,
                    error_quantiles,
                    grid_size,
                    cv_cfg,
                    irls_cfg,
                )
                for r in tqdm(
                    range(cfg.replications),
                    desc=f"{dist.value} n={n}",
                    disable=not progress,
                )
            )

            used = []
            for r, outcome in enumerate(outcomes):
                if outcome.failed_fraction > defaults.max_failed_fraction:
                    logger.log_warning(
                        "Replication discarded",
                        error_dist=dist.value,
                        n=n,
                        replication=r,
                        failed_fraction=round(outcome.failed_fraction, 3),
                        failures=outcome.failures[:5],
                    )
                else:
                    used.append(outcome)

            for tau in parsed:
                name = target_name(tau)
                rmse, mape = _pooled_metrics(used, name)
                metrics[name][n] = (rmse, mape, len(used))

            logger.log_info(
                "Monte Carlo cell completed",
                error_dist=dist.value,
                n=n,
                replications_used=len(used),
                total_time_ms=round((time.time() - start_time) * 1000, 2),
            )

        for tau in parsed:
            name = target_name(tau)
            base_mape = metrics[name][baseline][1]
            for n in sizes:
                rmse, mape, used_count = metrics[name][n]
                relative = 1.0 if n == baseline else mape / base_mape
                rows.append(McRow(n, dist.value, name, rmse, relative, used_count))

    logger.log_info(
        "Monte Carlo study completed",
        rows=len(rows),
        total_time_ms=round((time.time() - overall_start) * 1000, 2),
    )
    return McReport(rows=tuple(rows), seed=cfg.seed, replications=cfg.replications)


@dataclass(frozen=True)
class CoverageReport:
    n: int
    alpha: float
    grid_size: int
    replications_used: int
    evaluated_points: int
    coverage: float
    coverage_jackknife: float

    def to_frame(self) -> pd.DataFrame:
        return pd.DataFrame([self.__dict__])


def _coverage_replication(
    cfg: SimConfig, seed: int, grid_size: int, alpha: float, cv_cfg: CvConfig | None
) -> tuple[int, int, int]:
    rng = np.random.default_rng(seed)
    data = simulate_dataset(cfg, rng)
    grid_raw = evaluation_grid(data.covariates, grid_size, rng)
    truth = conditional_mean(grid_raw, cfg)
    spec = default_spec(N_COVARIATES)
    b = blocked_cv_bandwidth(data, spec, cv_cfg, n_jobs=1).selected
    fitted = in_sample_means(data, spec, b)

    hits = hits_jackknife = evaluated = 0
    for x, mu in zip(data.standardize_point(grid_raw), truth, strict=True):
        try:
            cov = estimate_cov(data, x, spec, b, b, fitted=fitted).matrix
            plain = basis_bands(data, x, spec, b, alpha, cov_matrix=cov)
            wide = basis_bands(
                data, x, spec, b, alpha, cov_matrix=cov, variance_constant="jackknife"
            )
        except GeoquantError as e:
            logger.log_debug("Band evaluation failed", category=e.category)
            continue
        evaluated += 1
        hits += all(
            abs(band.center - m) <= band.half_width for band, m in zip(plain, mu, strict=True)
        )
        hits_jackknife += all(
            abs(band.center - m) <= band.half_width for band, m in zip(wide, mu, strict=True)
        )
    return hits, hits_jackknife, evaluated


def run_band_coverage(  # noqa: PLR0913
    cfg: SimConfig,
    grid_size: int | None = None,
    alpha: float = 0.05,
    replications: int | None = None,
    *,
    n_jobs: int | None = None,
    cv_cfg: CvConfig | None = None,
    progress: bool = True,
) -> CoverageReport:
    """Empirical simultaneous coverage of the basis-contrast mean bands at interior points.

    Both the phi_K band and the band scaled by the jackknife variance constant are
    evaluated on the same fits.
    """
    if not 0.0 < alpha < 1.0:
        raise InvalidArgumentError(f"alpha must lie in (0, 1), got {alpha}")
    grid_size = grid_size or SimulationDefaults().grid_size
    replications = replications or cfg.replications
    n_jobs = RuntimeConfig().n_jobs if n_jobs is None else n_jobs
    stream = split_seed(cfg.seed, COVERAGE_STREAM)

    start_time = time.time()
    results = Parallel(n_jobs=n_jobs)(
        delayed(_coverage_replication)(cfg, split_seed(stream, r), grid_size, alpha, cv_cfg)
        for r in tqdm(range(replications), desc=f"coverage n={cfg.n}", disable=not progress)
    )
    hits = sum(r[0] for r in results)
    hits_jackknife = sum(r[1] for r in results)
    evaluated = sum(r[2] for r in results)
    used = sum(1 for r in results if r[2] > 0)

    report = CoverageReport(
        n=cfg.n,
        alpha=alpha,
        grid_size=grid_size,
        replications_used=used,
        evaluated_points=evaluated,
        coverage=hits / evaluated if evaluated else float("nan"),
        coverage_jackknife=hits_jackknife / evaluated if evaluated else float("nan"),
    )
    logger.log_info(
        "Band coverage study completed",
        coverage=round(report.coverage, 4),
        coverage_jackknife=round(report.coverage_jackknife, 4),
        total_time_ms=round((time.time() - start_time) * 1000, 2),
    )
    return report
