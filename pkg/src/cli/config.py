"""Run configuration: defaults, flat ``key = value`` config files and validation.

Precedence is command-line flags, then the config file, then the defaults below. A JSON
manifest written by a previous run is accepted as a config file as well; its ``config``
block replays that run.
"""

import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Any

from src.core.config import EstimationConfig, RuntimeConfig, SimulationDefaults
from src.core.exceptions import ConfigError

COMMANDS = (
    "fit-mean",
    "fit-cov",
    "fit-quantile",
    "var",
    "simulate",
    "replay",
    "select-bandwidth",
)
EXPERIMENTS = ("table", "coverage")
FREQUENCIES = ("weekly", "daily")
VARIANCE_CONSTANTS = ("kernel", "jackknife")


def parse_floats(text: str) -> tuple[float, ...]:
    return tuple(float(v) for v in text.split(",") if v.strip())


def parse_ints(text: str) -> tuple[int, ...]:
    return tuple(int(v) for v in text.split(",") if v.strip())


def parse_strings(text: str) -> tuple[str, ...]:
    return tuple(v.strip() for v in text.split(",") if v.strip())


def parse_points(text: str) -> tuple[tuple[float, ...], ...]:
    """``"a,b,c;d,e,f"`` -> ((a, b, c), (d, e, f))."""
    return tuple(parse_floats(chunk) for chunk in text.split(";") if chunk.strip())


def parse_optional_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


def parse_optional_int(text: str) -> int | None:
    return None if text.strip().lower() in ("", "none") else int(text)


@dataclass
class RunConfig:
    command: str
    # inputs
    dataset: str | None = None
    prices_a: str | None = None
    prices_b: str | None = None
    risk: str | None = None
    lag: int = 0
    # estimation
    kernel: str = field(default_factory=lambda: EstimationConfig().kernel)
    bandwidth: float | None = None
    cov_bandwidth: float | None = None
    quantile_bandwidth: float | None = None
    cv_grid: tuple[float, ...] = field(default_factory=lambda: EstimationConfig().cv_grid)
    cv_blocks: int = field(default_factory=lambda: EstimationConfig().cv_blocks)
    levels: tuple[float, ...] = (0.05, 0.5, 0.95)
    alpha: float = 0.05
    variance_constant: str = "jackknife"
    var_level: float = 0.95
    frequency: str = "weekly"
    volatility_window: int = 5
    # evaluation grid
    points: tuple[tuple[float, ...], ...] | None = None
    sweep_covariate: int | None = None
    sweep_size: int = 50
    # simulation
    experiment: str = "table"
    n: int = 1000
    replications: int = field(default_factory=lambda: SimulationDefaults().replications)
    sample_sizes: tuple[int, ...] = field(
        default_factory=lambda: SimulationDefaults().sample_sizes
    )
    errors: tuple[str, ...] = ("normal", "t3", "shifted_exp")
    targets: tuple[str, ...] = field(
        default_factory=lambda: ("mean", *(f"{t:g}" for t in SimulationDefaults().levels))
    )
    grid_size: int = field(default_factory=lambda: SimulationDefaults().grid_size)
    oracle_draws: int = field(default_factory=lambda: SimulationDefaults().oracle_draws)
    seed: int = field(default_factory=lambda: SimulationDefaults().seed)
    # runtime
    output_dir: str = field(default_factory=lambda: RuntimeConfig().output_dir)
    n_jobs: int = field(default_factory=lambda: RuntimeConfig().n_jobs)
    log_level: str = field(default_factory=lambda: RuntimeConfig().log_level)

    def validate(self) -> "RunConfig":  # noqa: C901
        if self.command not in COMMANDS:
            raise ConfigError(f"Unknown command {self.command!r}")
        for name in ("levels",):
            if not all(0.0 < tau < 1.0 for tau in getattr(self, name)):
                raise ConfigError(f"{name} must lie in (0, 1), got {getattr(self, name)}")
        if len(set(self.levels)) != len(self.levels):
            raise ConfigError(f"levels must be distinct, got {self.levels}")
        if not 0.0 < self.alpha < 1.0:
            raise ConfigError(f"alpha must lie in (0, 1), got {self.alpha}")
        if not 0.0 < self.var_level < 1.0:
            raise ConfigError(f"var_level must lie in (0, 1), got {self.var_level}")
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"experiment must be one of {EXPERIMENTS}, got {self.experiment!r}")
        if self.frequency not in FREQUENCIES:
            raise ConfigError(f"frequency must be one of {FREQUENCIES}, got {self.frequency!r}")
        if self.variance_constant not in VARIANCE_CONSTANTS:
            raise ConfigError(
                f"variance_constant must be one of {VARIANCE_CONSTANTS}, "
                f"got {self.variance_constant!r}"
            )
        if self.lag < 0:
            raise ConfigError(f"lag must be non-negative, got {self.lag}")
        if self.points is not None and self.sweep_covariate is not None:
            raise ConfigError("points and sweep_covariate are mutually exclusive")
        for name in ("bandwidth", "cov_bandwidth", "quantile_bandwidth"):
            value = getattr(self, name)
            if value is not None and not value > 0:
                raise ConfigError(f"{name} must be positive, got {value}")
        if self.replications < 1 or self.n_jobs == 0 or self.grid_size < 1:
            raise ConfigError("replications and grid_size must be positive, n_jobs non-zero")
        return self

    def to_dict(self) -> dict[str, Any]:
        return asdict(self)


FIELD_PARSERS = {
    "dataset": str,
    "prices_a": str,
    "prices_b": str,
    "risk": str,
    "lag": int,
    "kernel": str,
    "bandwidth": parse_optional_float,
    "cov_bandwidth": parse_optional_float,
    "quantile_bandwidth": parse_optional_float,
    "cv_grid": parse_floats,
    "cv_blocks": int,
    "levels": parse_floats,
    "alpha": float,
    "variance_constant": str,
    "var_level": float,
    "frequency": str,
    "volatility_window": int,
    "points": parse_points,
    "sweep_covariate": parse_optional_int,
    "sweep_size": int,
    "experiment": str,
    "n": int,
    "replications": int,
    "sample_sizes": parse_ints,
    "errors": parse_strings,
    "targets": parse_strings,
    "grid_size": int,
    "oracle_draws": int,
    "seed": int,
    "output_dir": str,
    "n_jobs": int,
    "log_level": str,
}


def _coerce(key: str, value: Any) -> Any:
    if value is None:
        return None
    if isinstance(value, str):
        return FIELD_PARSERS[key](value)
    if isinstance(value, list):
        return tuple(tuple(v) if isinstance(v, list) else v for v in value)
    return value


def read_config_file(path: str | Path) -> dict[str, Any]:
    """Settings from a flat ``key = value`` file (``#`` comments) or a JSON manifest."""
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except FileNotFoundError as e:
        raise ConfigError(f"Config file not found: {path}") from e

    if path.suffix.lower() == ".json":
        try:
            payload = json.loads(text)
        except json.JSONDecodeError as e:
            raise ConfigError(f"{path}: invalid JSON ({e.msg})") from e
        raw = dict(payload.get("config", payload))
        raw.pop("command", None)
    else:
        raw = {}
        for number, line in enumerate(text.splitlines(), start=1):
            stripped = line.split("#", 1)[0].strip()
            if not stripped:
                continue
            if "=" not in stripped:
                raise ConfigError(f"{path}:{number}: expected 'key = value', got {line!r}")
            key, value = (part.strip() for part in stripped.split("=", 1))
            raw[key.replace("-", "_")] = value

    settings = {}
    for key, value in raw.items():
        if key not in FIELD_PARSERS:
            raise ConfigError(f"{path}: unknown setting {key!r}")
        try:
            settings[key] = _coerce(key, value)
        except ValueError as e:
            raise ConfigError(f"{path}: invalid value for {key}: {value!r}") from e
    return settings


def build_run_config(
    command: str, flags: dict[str, Any], config_path: str | None = None
) -> RunConfig:
    """Merge defaults < config file < flags and validate."""
    known = {f.name for f in fields(RunConfig)}
    settings = read_config_file(config_path) if config_path else {}
    settings.update({k: v for k, v in flags.items() if k in known})
    settings["command"] = command
    return RunConfig(**settings).validate()
