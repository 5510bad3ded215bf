import os
from dataclasses import dataclass, field

from dotenv import load_dotenv

env_file = ".env"
load_dotenv(env_file, override=False)


def _env_floats(name: str, default: str) -> tuple[float, ...]:
    return tuple(float(v) for v in os.getenv(name, default).split(",") if v.strip())


def _env_ints(name: str, default: str) -> tuple[int, ...]:
    return tuple(int(v) for v in os.getenv(name, default).split(",") if v.strip())


@dataclass
class RuntimeConfig:
    """Process-level settings: parallelism, logging and output location."""

    n_jobs: int = field(default_factory=lambda: int(os.getenv("GEOQ_N_JOBS", "1")))
    log_level: str = field(default_factory=lambda: os.getenv("GEOQ_LOG_LEVEL", "INFO"))
    output_dir: str = field(default_factory=lambda: os.getenv("GEOQ_OUTPUT_DIR", "data/output"))


@dataclass
class EstimationConfig:
    """Defaults shared by the kernel estimators, IRLS and blocked cross-validation."""

    kernel: str = field(default_factory=lambda: os.getenv("GEOQ_KERNEL", "epanechnikov"))
    irls_tol: float = field(default_factory=lambda: float(os.getenv("GEOQ_IRLS_TOL", "1e-8")))
    irls_max_iter: int = field(
        default_factory=lambda: int(os.getenv("GEOQ_IRLS_MAX_ITER", "500"))
    )
    irls_stabilizer: float = field(
        default_factory=lambda: float(os.getenv("GEOQ_IRLS_STABILIZER", "1e-10"))
    )
    cv_grid: tuple[float, ...] = field(
        default_factory=lambda: _env_floats("GEOQ_CV_GRID", "0.3,0.5,0.75,1.0,1.5,2.0")
    )
    cv_blocks: int = field(default_factory=lambda: int(os.getenv("GEOQ_CV_BLOCKS", "5")))
    # Gaussian kernel is cut at this radius; tail mass beyond 8 is below 1e-14
    gaussian_truncation: float = 8.0
    separation_floor: float = 1e-8


@dataclass
class SimulationDefaults:
    """Data-generating process and Monte Carlo defaults."""

    ar_coeff: float = 0.5
    common_innovation_weight: float = 0.5
    b_coeffs: tuple[float, float, float] = (0.5, 0.3, 0.2)
    replications: int = field(
        default_factory=lambda: int(os.getenv("GEOQ_SIM_REPLICATIONS", "50"))
    )
    sample_sizes: tuple[int, ...] = field(
        default_factory=lambda: _env_ints("GEOQ_SIM_SAMPLE_SIZES", "100,500,1000")
    )
    levels: tuple[float, ...] = (0.05, 0.1, 0.5, 0.9, 0.95)
    grid_size: int = 25
    grid_coverage: float = 0.8
    oracle_draws: int = 100_000
    max_failed_fraction: float = 0.1
    seed: int = 20240401
