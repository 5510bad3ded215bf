"""Bandwidth selection: blocked cross-validation for the mean and the rate rule for quantiles."""

import time
from dataclasses import dataclass, field

import numpy as np
import pandas as pd
from joblib import Parallel, delayed
from sklearn.model_selection import KFold

from src.core.config import EstimationConfig, RuntimeConfig
from src.core.exceptions import InvalidArgumentError, SelectionFailureError
from src.core.utils.logger import setup_logger
from src.models.dataset import Dataset
from src.models.kernels import Bandwidth, KernelSpec, as_bandwidth, kernel_values

logger = setup_logger(__name__)

SUPPORTED_LOSSES = ("squared_error",)


@dataclass(frozen=True)
class CvConfig:
    candidate_grid: tuple[float, ...] = field(default_factory=lambda: EstimationConfig().cv_grid)
    n_blocks: int = field(default_factory=lambda: EstimationConfig().cv_blocks)
    loss: str = "squared_error"

    def __post_init__(self) -> None:
        grid = tuple(float(v) for v in self.candidate_grid)
        object.__setattr__(self, "candidate_grid", grid)
        if not grid:
            raise InvalidArgumentError("Candidate grid is empty")
        if grid[0] <= 0 or any(hi <= lo for lo, hi in zip(grid, grid[1:], strict=False)):
            raise InvalidArgumentError(
                f"Candidate grid must be positive and strictly increasing, got {grid}"
            )
        if self.n_blocks < 2:  # noqa: PLR2004
            raise InvalidArgumentError(f"Need at least 2 blocks, got {self.n_blocks}")
        if self.loss not in SUPPORTED_LOSSES:
            raise InvalidArgumentError(f"Unsupported CV loss: {self.loss!r}")


@dataclass(frozen=True)
class CvReport:
    selected: Bandwidth
    scores: dict[float, float]
    per_block_scores: np.ndarray
    empty_counts: dict[float, int] = field(default_factory=dict)

    def to_frame(self) -> pd.DataFrame:
        """One row per candidate: ``bandwidth, score, block_1..block_B``."""
        grid = list(self.scores)
        frame = pd.DataFrame(
            self.per_block_scores,
            columns=[f"block_{j + 1}" for j in range(self.per_block_scores.shape[1])],
        )
        frame.insert(0, "score", [self.scores[b] for b in grid])
        frame.insert(0, "bandwidth", grid)
        frame["selected"] = [b == self.selected.value for b in grid]
        return frame


def contiguous_blocks(n: int, n_blocks: int) -> list[np.ndarray]:
    """Partition 0..n-1 into contiguous folds; the first n mod B blocks get one extra row."""
    if not 2 <= n_blocks <= n:  # noqa: PLR2004
        raise InvalidArgumentError(f"Cannot split {n} observations into {n_blocks} blocks")
    folds = KFold(n_splits=n_blocks, shuffle=False)
    return [test for _, test in folds.split(np.arange(n))]


def _block_loss(
    data: Dataset,
    spec: KernelSpec,
    b: float,
    test: np.ndarray,
    penalty: float,
    chunk_size: int = 256,
) -> tuple[float, int]:
    """Mean squared Euclidean prediction error on ``test`` from a fit on the other rows."""
    train = np.setdiff1d(np.arange(data.n), test, assume_unique=True)
    X_train, Y_train = data.scaled[train], data.responses[train]
    losses = np.empty(len(test))
    empty = 0
    for start in range(0, len(test), chunk_size):
        rows = test[start : start + chunk_size]
        diffs = (data.scaled[rows][:, None, :] - X_train[None, :, :]) / b
        K = kernel_values(spec, diffs.reshape(-1, data.k)).reshape(len(rows), len(train))
        mass = K.sum(axis=1)
        ok = mass > 0
        chunk = np.full(len(rows), penalty)
        if ok.any():
            pred = (K[ok] @ Y_train) / mass[ok, None]
            chunk[ok] = np.sum((data.responses[rows][ok] - pred) ** 2, axis=1)
        losses[start : start + len(rows)] = chunk
        empty += int((~ok).sum())
    return float(losses.mean()), empty


def blocked_cv_bandwidth(
    data: Dataset,
    spec: KernelSpec,
    cfg: CvConfig | None = None,
    n_jobs: int | None = None,
) -> CvReport:
    """Select the mean bandwidth by contiguous-block cross-validation.

    Each block is predicted by the Nadaraya-Watson mean fitted on the remaining blocks.
    Held-out points with an empty neighbourhood are charged the marginal response
    variance. The score of a candidate is the mean loss over all n held-out predictions;
    ties go to the larger bandwidth.

    Args:
        data: Dataset in time order.
        spec: Kernel.
        cfg: Candidate grid and block count.
        n_jobs: joblib workers for the candidate x block evaluations; defaults to
            ``GEOQ_N_JOBS``.

    Returns:
        CvReport: Selected bandwidth with per-candidate and per-block scores.

    Raises:
        InvalidArgumentError: If n < 2 * n_blocks.
        SelectionFailureError: If every candidate leaves every held-out point empty.

    """
    cfg = cfg or CvConfig()
    n_jobs = RuntimeConfig().n_jobs if n_jobs is None else n_jobs
    if data.n < 2 * cfg.n_blocks:
        raise InvalidArgumentError(
            f"Blocked CV with {cfg.n_blocks} blocks needs n >= {2 * cfg.n_blocks}, got {data.n}"
        )

    start_time = time.time()
    blocks = contiguous_blocks(data.n, cfg.n_blocks)
    sizes = np.array([len(block) for block in blocks])
    penalty = float(np.var(data.responses, axis=0).sum())

    results = Parallel(n_jobs=n_jobs)(
        delayed(_block_loss)(data, spec, b, block, penalty)
        for b in cfg.candidate_grid
        for block in blocks
    )
    per_block = np.array([loss for loss, _ in results]).reshape(len(cfg.candidate_grid), -1)
    empties = np.array([count for _, count in results]).reshape(len(cfg.candidate_grid), -1)

    scores = {
        b: float(per_block[i] @ sizes / data.n) for i, b in enumerate(cfg.candidate_grid)
    }
    empty_counts = {b: int(empties[i].sum()) for i, b in enumerate(cfg.candidate_grid)}
    if all(count == data.n for count in empty_counts.values()):
        raise SelectionFailureError(
            "Every candidate bandwidth leaves all held-out points without neighbours"
        )

    best = min(scores.values())
    selected = max(b for b, score in scores.items() if score == best)

    elapsed_ms = (time.time() - start_time) * 1000
    logger.log_fit(
        "blocked_cv",
        len(results),
        elapsed_ms,
        selected=selected,
        score=best,
        n=data.n,
        n_blocks=cfg.n_blocks,
    )
    return CvReport(
        selected=Bandwidth(selected),
        scores=scores,
        per_block_scores=per_block,
        empty_counts=empty_counts,
    )


def rate_bandwidth(n: int, k: int, scale: float = 1.0) -> Bandwidth:
    """scale * n^(-1/(k+4))."""
    if n < 2:  # noqa: PLR2004
        raise InvalidArgumentError(f"Rate bandwidth needs n >= 2, got {n}")
    if k < 1:
        raise InvalidArgumentError(f"Covariate dimension must be positive, got {k}")
    if not scale > 0:
        raise InvalidArgumentError(f"Scale must be positive, got {scale}")
    return Bandwidth(scale * float(n) ** (-1.0 / (k + 4)))


def anchored_rate_bandwidth(
    n: int, k: int, anchor: Bandwidth | float, anchor_n: int
) -> Bandwidth:
    """Rate rule whose constant makes it pass through ``anchor`` at sample size ``anchor_n``."""
    anchor = as_bandwidth(anchor)
    scale = anchor.value * float(anchor_n) ** (1.0 / (k + 4))
    return rate_bandwidth(n, k, scale)
