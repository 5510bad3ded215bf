"""Command implementations. Every command writes its artifacts into the output directory
and returns their file names together with a small summary for the manifest."""

import time
from collections.abc import Callable
from dataclasses import dataclass, field, replace
from functools import partial
from pathlib import Path
from typing import Any

import numpy as np
import pandas as pd
from joblib import Parallel, delayed

from src.cli.config import RunConfig
from src.core.exceptions import ConfigError, GeoquantError
from src.core.utils.logger import setup_logger
from src.dataio.loader import (
    AlignmentReport,
    align_with_report,
    load_dataset_csv,
    load_price_csv,
    load_risk_csv,
    log_returns,
    write_dataset_csv,
)
from src.estimators.bandwidth import CvConfig, CvReport, blocked_cv_bandwidth
from src.estimators.covariance import covariance_components, estimate_cov
from src.estimators.geoquantile import IrlsConfig, check_noncrossing
from src.estimators.mean import basis_bands, estimate_mean, in_sample_means
from src.estimators.risk import var_estimate, volatility_frame, weekly_var_series
from src.models.dataset import Dataset
from src.models.kernels import Bandwidth, KernelSpec, as_bandwidth, default_spec
from src.sim.dgp import SimConfig
from src.sim.monte_carlo import run_band_coverage, run_monte_carlo

logger = setup_logger(__name__)

SWEEP_RANGE = (0.05, 0.95)


@dataclass
class CommandResult:
    artifacts: list[str] = field(default_factory=list)
    summary: dict[str, Any] = field(default_factory=dict)
    alignment: AlignmentReport | None = None


@dataclass(frozen=True)
class Bandwidths:
    mean: Bandwidth
    cov: Bandwidth
    quantile: Bandwidth
    cv_report: CvReport | None = None


def load_inputs(cfg: RunConfig) -> tuple[Dataset, AlignmentReport | None]:
    """A prepared ``date,y..,x..`` dataset, or two price files aligned with the risk file."""
    if cfg.dataset:
        return load_dataset_csv(cfg.dataset), None
    if not (cfg.prices_a and cfg.prices_b and cfg.risk):
        raise ConfigError("Provide --dataset, or all of --prices-a, --prices-b and --risk")
    returns_a = log_returns(load_price_csv(cfg.prices_a, name="a"))
    returns_b = log_returns(load_price_csv(cfg.prices_b, name="b"))
    return align_with_report(returns_a, returns_b, load_risk_csv(cfg.risk), cfg.lag)


def resolve_bandwidths(cfg: RunConfig, data: Dataset, spec: KernelSpec) -> Bandwidths:
    """Explicit overrides win; otherwise the mean bandwidth comes from blocked CV and the
    covariance and quantile bandwidths follow it (the rate rule anchored at this n)."""
    report = None
    if cfg.bandwidth is None:
        report = blocked_cv_bandwidth(
            data, spec, CvConfig(cfg.cv_grid, cfg.cv_blocks), n_jobs=cfg.n_jobs
        )
        b_mean = report.selected
    else:
        b_mean = as_bandwidth(cfg.bandwidth)
    return Bandwidths(
        mean=b_mean,
        cov=b_mean if cfg.cov_bandwidth is None else as_bandwidth(cfg.cov_bandwidth),
        quantile=b_mean if cfg.quantile_bandwidth is None else as_bandwidth(cfg.quantile_bandwidth),
        cv_report=report,
    )


def evaluation_points(cfg: RunConfig, data: Dataset) -> tuple[pd.DataFrame, np.ndarray]:
    """Row labels and standardized evaluation points for the configured grid mode.

    Per-observation mode labels rows by date; explicit points (raw units) and covariate
    sweeps label them by point number and raw coordinates.
    """
    columns = [f"x{j + 1}" for j in range(data.k)]
    if cfg.points is not None:
        raw = np.asarray(cfg.points, dtype=float)
        if raw.ndim != 2 or raw.shape[1] != data.k:  # noqa: PLR2004
            raise ConfigError(f"Each point needs {data.k} coordinates, got {cfg.points}")
        grid = data.standardize_point(raw)
    elif cfg.sweep_covariate is not None:
        j = cfg.sweep_covariate - 1
        if not 0 <= j < data.k:
            raise ConfigError(f"sweep_covariate must lie in [1, {data.k}], got {j + 1}")
        if cfg.sweep_size < 2:  # noqa: PLR2004
            raise ConfigError(f"sweep_size must be at least 2, got {cfg.sweep_size}")
        lo, hi = np.quantile(data.scaled[:, j], SWEEP_RANGE)
        grid = np.zeros((cfg.sweep_size, data.k))
        grid[:, j] = np.linspace(lo, hi, cfg.sweep_size)
        raw = data.raw_point(grid)
    else:
        return pd.DataFrame({"date": data.to_frame()["date"]}), data.scaled

    labels = pd.DataFrame(raw, columns=columns)
    labels.insert(0, "point", np.arange(1, len(raw) + 1))
    return labels, grid


def _guarded(fit: Callable[[np.ndarray], dict], x: np.ndarray) -> dict:
    try:
        row = fit(x)
    except GeoquantError as e:
        return {"status": e.category}
    row["status"] = "ok"
    return row


def fit_rows(
    fit: Callable[[np.ndarray], dict],
    labels: pd.DataFrame,
    points: np.ndarray,
    columns: list[str],
    n_jobs: int,
) -> pd.DataFrame:
    """Apply ``fit`` at every point; failed points keep NaN values and their error category."""
    rows = Parallel(n_jobs=n_jobs)(delayed(_guarded)(fit, x) for x in points)
    frame = pd.DataFrame(rows, columns=[*columns, "status"])
    failed = int((frame["status"] != "ok").sum())
    if failed:
        logger.log_warning(
            "Evaluation points without an estimate",
            failed=failed,
            categories=sorted(set(frame.loc[frame["status"] != "ok", "status"])),
        )
    return pd.concat([labels.reset_index(drop=True), frame], axis=1)


def _mean_row(  # noqa: PLR0913
    data: Dataset,
    spec: KernelSpec,
    bw: Bandwidths,
    alpha: float,
    variance_constant: str,
    fitted: np.ndarray,
    x: np.ndarray,
) -> dict:
    est = estimate_mean(data, x, spec, bw.mean)
    cov = estimate_cov(data, x, spec, bw.cov, bw.mean, fitted=fitted)
    bands = basis_bands(
        data, x, spec, bw.mean, alpha, cov_matrix=cov.matrix, variance_constant=variance_constant
    )
    row = {f"mu_{j + 1}": float(v) for j, v in enumerate(est.point)}
    for j, band in enumerate(bands):
        row[f"band_low_{j + 1}"] = band.lower
        row[f"band_high_{j + 1}"] = band.upper
    row["density"] = est.density
    return row


def _mean_columns(p: int) -> list[str]:
    return [
        *(f"mu_{j + 1}" for j in range(p)),
        *(c for j in range(p) for c in (f"band_low_{j + 1}", f"band_high_{j + 1}")),
        "density",
    ]


def _cov_row(
    data: Dataset, spec: KernelSpec, bw: Bandwidths, fitted: np.ndarray, x: np.ndarray
) -> dict:
    cov = estimate_cov(data, x, spec, bw.cov, bw.mean, fitted=fitted)
    return {**covariance_components(cov), "generalized_variance": cov.generalized_variance}


def _cov_columns(p: int) -> list[str]:
    upper = [f"s{i + 1}{j + 1}" for i in range(p) for j in range(i, p)]
    return [*upper, "generalized_variance"]


def _quantile_row(  # noqa: PLR0913
    data: Dataset,
    spec: KernelSpec,
    b: Bandwidth,
    levels: tuple[float, ...],
    irls: IrlsConfig,
    x: np.ndarray,
) -> dict:
    passed, report = check_noncrossing(data, x, spec, b, list(levels), irls)
    row = {
        f"q{tau:g}_{j + 1}": float(report.quantiles[i, j])
        for i, tau in enumerate(levels)
        for j in range(data.p)
    }
    row["min_separation"] = report.min_separation
    row["noncrossing"] = passed
    row["converged"] = all(report.converged)
    return row


def _quantile_columns(levels: tuple[float, ...], p: int) -> list[str]:
    blocks = [f"q{tau:g}_{j + 1}" for tau in levels for j in range(p)]
    return [*blocks, "min_separation", "noncrossing", "converged"]


def _var_row(
    data: Dataset, spec: KernelSpec, b: Bandwidth, level: float, irls: IrlsConfig, x: np.ndarray
) -> dict:
    est = var_estimate(data, x, spec, b, level, irls)
    row = {f"var_{j + 1}": float(v) for j, v in enumerate(est.value)}
    row["converged"] = est.converged
    return row


def _write(frame: pd.DataFrame, out_dir: Path, name: str, result: CommandResult) -> None:
    frame.to_csv(out_dir / name, index=False, lineterminator="\n")
    result.artifacts.append(name)


def _mean_frame(  # noqa: PLR0913
    cfg: RunConfig,
    data: Dataset,
    spec: KernelSpec,
    bw: Bandwidths,
    labels: pd.DataFrame,
    points: np.ndarray,
    fitted: np.ndarray,
) -> pd.DataFrame:
    fit = partial(_mean_row, data, spec, bw, cfg.alpha, cfg.variance_constant, fitted)
    return fit_rows(fit, labels, points, _mean_columns(data.p), cfg.n_jobs)


def _cov_frame(  # noqa: PLR0913
    cfg: RunConfig,
    data: Dataset,
    spec: KernelSpec,
    bw: Bandwidths,
    labels: pd.DataFrame,
    points: np.ndarray,
    fitted: np.ndarray,
) -> pd.DataFrame:
    fit = partial(_cov_row, data, spec, bw, fitted)
    return fit_rows(fit, labels, points, _cov_columns(data.p), cfg.n_jobs)


def _quantile_frame(  # noqa: PLR0913
    cfg: RunConfig,
    data: Dataset,
    spec: KernelSpec,
    bw: Bandwidths,
    labels: pd.DataFrame,
    points: np.ndarray,
) -> pd.DataFrame:
    fit = partial(_quantile_row, data, spec, bw.quantile, cfg.levels, IrlsConfig())
    return fit_rows(fit, labels, points, _quantile_columns(cfg.levels, data.p), cfg.n_jobs)


def _var_frame(  # noqa: PLR0913
    cfg: RunConfig,
    data: Dataset,
    spec: KernelSpec,
    bw: Bandwidths,
    labels: pd.DataFrame,
    points: np.ndarray,
) -> pd.DataFrame:
    if cfg.frequency == "weekly":
        weekly = weekly_var_series(
            data, spec, bw.quantile, cfg.var_level, IrlsConfig(), n_jobs=cfg.n_jobs
        )
        weekly = weekly.reset_index()
        weekly["week"] = weekly["week"].dt.strftime("%Y-%m-%d")
        weekly["date"] = weekly["date"].dt.strftime("%Y-%m-%d")
        return weekly
    fit = partial(_var_row, data, spec, bw.quantile, cfg.var_level, IrlsConfig())
    columns = [*(f"var_{j + 1}" for j in range(data.p)), "converged"]
    return fit_rows(fit, labels, points, columns, cfg.n_jobs)


def _bandwidth_summary(bw: Bandwidths) -> dict[str, float]:
    return {
        "bandwidth": bw.mean.value,
        "cov_bandwidth": bw.cov.value,
        "quantile_bandwidth": bw.quantile.value,
    }


def _prepare(cfg: RunConfig) -> tuple[Dataset, KernelSpec, Bandwidths, CommandResult]:
    data, alignment = load_inputs(cfg)
    spec = default_spec(data.k, cfg.kernel)
    bw = resolve_bandwidths(cfg, data, spec)
    result = CommandResult(alignment=alignment, summary={"n": data.n, **_bandwidth_summary(bw)})
    return data, spec, bw, result


def fit_mean(cfg: RunConfig, out_dir: Path) -> CommandResult:
    data, spec, bw, result = _prepare(cfg)
    labels, points = evaluation_points(cfg, data)
    fitted = in_sample_means(data, spec, bw.mean)
    _write(_mean_frame(cfg, data, spec, bw, labels, points, fitted), out_dir, "mean.csv", result)
    return result


def fit_cov(cfg: RunConfig, out_dir: Path) -> CommandResult:
    data, spec, bw, result = _prepare(cfg)
    labels, points = evaluation_points(cfg, data)
    fitted = in_sample_means(data, spec, bw.mean)
    frame = _cov_frame(cfg, data, spec, bw, labels, points, fitted)
    _write(frame, out_dir, "covariance.csv", result)
    return result


def fit_quantile(cfg: RunConfig, out_dir: Path) -> CommandResult:
    data, spec, bw, result = _prepare(cfg)
    labels, points = evaluation_points(cfg, data)
    frame = _quantile_frame(cfg, data, spec, bw, labels, points)
    _write(frame, out_dir, "quantiles.csv", result)
    result.summary["crossing_points"] = int((~frame["noncrossing"].astype(bool)).sum())
    return result


def value_at_risk(cfg: RunConfig, out_dir: Path) -> CommandResult:
    data, spec, bw, result = _prepare(cfg)
    labels, points = evaluation_points(cfg, data)
    _write(_var_frame(cfg, data, spec, bw, labels, points), out_dir, "var.csv", result)
    return result


def select_bandwidth(cfg: RunConfig, out_dir: Path) -> CommandResult:
    data, _ = load_inputs(cfg)
    spec = default_spec(data.k, cfg.kernel)
    report = blocked_cv_bandwidth(
        data, spec, CvConfig(cfg.cv_grid, cfg.cv_blocks), n_jobs=cfg.n_jobs
    )
    result = CommandResult(summary={"n": data.n, "selected": report.selected.value})
    _write(report.to_frame(), out_dir, "cv_report.csv", result)
    return result


def simulate(cfg: RunConfig, out_dir: Path) -> CommandResult:
    sim_cfg = SimConfig(n=cfg.n, seed=cfg.seed, replications=cfg.replications)
    cv_cfg = CvConfig(cfg.cv_grid, cfg.cv_blocks)
    result = CommandResult()
    if cfg.experiment == "coverage":
        report = run_band_coverage(
            sim_cfg,
            grid_size=cfg.grid_size,
            alpha=cfg.alpha,
            n_jobs=cfg.n_jobs,
            cv_cfg=cv_cfg,
        )
        frame = report.to_frame()
        _write(frame, out_dir, "coverage_report.csv", result)
        result.summary = {
            "coverage": report.coverage,
            "coverage_jackknife": report.coverage_jackknife,
        }
        print(frame.to_string(index=False))  # noqa: T201
        return result

    report = run_monte_carlo(
        sim_cfg,
        targets=list(cfg.targets),
        sample_sizes=list(cfg.sample_sizes),
        error_dists=list(cfg.errors),
        n_jobs=cfg.n_jobs,
        grid_size=cfg.grid_size,
        oracle_draws=cfg.oracle_draws,
        cv_cfg=cv_cfg,
    )
    report.to_csv(out_dir / "mc_report.csv")
    result.artifacts.append("mc_report.csv")
    result.summary = {"rows": len(report.rows)}
    print(report.pretty())  # noqa: T201
    return result


def replay(cfg: RunConfig, out_dir: Path) -> CommandResult:
    """The full application pipeline at every observation."""
    start_time = time.time()
    data, spec, bw, result = _prepare(cfg)
    write_dataset_csv(data, out_dir / "dataset.csv")
    result.artifacts.append("dataset.csv")
    if bw.cv_report is not None:
        _write(bw.cv_report.to_frame(), out_dir, "cv_report.csv", result)

    # replay always evaluates at the observations
    labels = pd.DataFrame({"date": data.to_frame()["date"]})
    points = data.scaled
    fitted = in_sample_means(data, spec, bw.mean)
    _write(_mean_frame(cfg, data, spec, bw, labels, points, fitted), out_dir, "mean.csv", result)
    frame = _cov_frame(cfg, data, spec, bw, labels, points, fitted)
    _write(frame, out_dir, "covariance.csv", result)
    quantiles = _quantile_frame(cfg, data, spec, bw, labels, points)
    _write(quantiles, out_dir, "quantiles.csv", result)
    result.summary["crossing_points"] = int((~quantiles["noncrossing"].astype(bool)).sum())

    var_cfg = cfg
    if not isinstance(data.times, pd.DatetimeIndex) and cfg.frequency == "weekly":
        logger.log_warning("Dataset has no calendar dates; VaR is reported per observation")
        var_cfg = replace(cfg, frequency="daily")
    _write(_var_frame(var_cfg, data, spec, bw, labels, points), out_dir, "var.csv", result)

    returns = pd.DataFrame(data.responses, columns=[f"y{j + 1}" for j in range(data.p)])
    vol = volatility_frame(returns, cfg.volatility_window)
    vol.insert(0, "date", labels["date"].iloc[cfg.volatility_window - 1 :].to_numpy())
    _write(vol, out_dir, "volatility.csv", result)

    logger.log_info(
        "Replay completed",
        n=data.n,
        artifacts=len(result.artifacts),
        total_time_ms=round((time.time() - start_time) * 1000, 2),
    )
    return result


COMMAND_HANDLERS: dict[str, Callable[[RunConfig, Path], CommandResult]] = {
    "fit-mean": fit_mean,
    "fit-cov": fit_cov,
    "fit-quantile": fit_quantile,
    "var": value_at_risk,
    "simulate": simulate,
    "replay": replay,
    "select-bandwidth": select_bandwidth,
}
