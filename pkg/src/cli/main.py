"""``geoquant`` command-line entry point.

Exit codes: 0 success, 1 estimation or runtime failure, 2 usage error. A failure prints
one machine-readable line on stderr, ``error category=<category> message=<text>``.
"""

import argparse
import json
import sys
import time
from datetime import datetime
from pathlib import Path

from src import __version__
from src.cli.commands import COMMAND_HANDLERS, CommandResult
from src.cli.config import (
    COMMANDS,
    EXPERIMENTS,
    FREQUENCIES,
    VARIANCE_CONSTANTS,
    RunConfig,
    build_run_config,
    parse_floats,
    parse_ints,
    parse_points,
    parse_strings,
)
from src.core.exceptions import ConfigError, GeoquantError
from src.core.utils.logger import LogLevel, set_global_level, setup_logger

logger = setup_logger(__name__)

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
MANIFEST_NAME = "manifest.json"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> None:  # type: ignore[override]
        self.print_usage(sys.stderr)
        raise ConfigError(message)


def _section(**kwargs: object) -> argparse.ArgumentParser:
    return _Parser(add_help=False, argument_default=argparse.SUPPRESS, **kwargs)


def _common_options() -> argparse.ArgumentParser:
    parser = _section()
    parser.add_argument("--config", help="flat key = value file or a previous manifest.json")
    parser.add_argument("--output-dir", dest="output_dir", help="directory for artifacts")
    parser.add_argument("--seed", type=int)
    parser.add_argument("--n-jobs", dest="n_jobs", type=int, help="joblib workers")
    parser.add_argument("--log-level", dest="log_level")
    parser.add_argument("--kernel", choices=("epanechnikov", "gaussian"))
    return parser


def _data_options() -> argparse.ArgumentParser:
    parser = _section()
    parser.add_argument("--dataset", help="aligned date,y1..,x1.. CSV")
    parser.add_argument("--prices-a", dest="prices_a", help="date,close CSV of the first asset")
    parser.add_argument("--prices-b", dest="prices_b", help="date,close CSV of the second asset")
    parser.add_argument("--risk", help="date,gprd,gprd_a,gprd_t CSV")
    parser.add_argument("--lag", type=int, help="lag of the risk indices in calendar days")
    return parser


def _bandwidth_options() -> argparse.ArgumentParser:
    parser = _section()
    parser.add_argument("--bandwidth", type=float, help="mean bandwidth (default: blocked CV)")
    parser.add_argument("--cov-bandwidth", dest="cov_bandwidth", type=float)
    parser.add_argument("--quantile-bandwidth", dest="quantile_bandwidth", type=float)
    parser.add_argument("--cv-grid", dest="cv_grid", type=parse_floats, help="e.g. 0.3,0.5,1")
    parser.add_argument("--cv-blocks", dest="cv_blocks", type=int)
    return parser


def _grid_options() -> argparse.ArgumentParser:
    parser = _section()
    parser.add_argument("--points", type=parse_points, help='raw units, "a,b,c;d,e,f"')
    parser.add_argument("--sweep-covariate", dest="sweep_covariate", type=int)
    parser.add_argument("--sweep-size", dest="sweep_size", type=int)
    return parser


def build_parser() -> argparse.ArgumentParser:
    common, data, bandwidth, grid = (
        _common_options(),
        _data_options(),
        _bandwidth_options(),
        _grid_options(),
    )
    parser = _Parser(prog="geoquant", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(
        dest="command", required=True, metavar="{" + ",".join(COMMANDS) + "}"
    )

    def add(name: str, help_text: str, *parents: argparse.ArgumentParser) -> _Parser:
        return sub.add_parser(
            name, help=help_text, parents=[common, *parents], argument_default=argparse.SUPPRESS
        )

    mean = add("fit-mean", "conditional mean with confidence bands", data, bandwidth, grid)
    mean.add_argument("--alpha", type=float)
    mean.add_argument("--variance-constant", dest="variance_constant", choices=VARIANCE_CONSTANTS)

    add("fit-cov", "conditional covariance and generalized variance", data, bandwidth, grid)

    quantile = add("fit-quantile", "conditional geometric quantiles", data, bandwidth, grid)
    quantile.add_argument("--levels", type=parse_floats, help="e.g. 0.05,0.5,0.95")

    var = add("var", "conditional value-at-risk of the losses", data, bandwidth, grid)
    var.add_argument("--var-level", dest="var_level", type=float)
    var.add_argument("--frequency", choices=FREQUENCIES)

    sim = add("simulate", "Monte Carlo tables or band coverage")
    sim.add_argument("--experiment", choices=EXPERIMENTS)
    sim.add_argument("--replications", type=int)
    sim.add_argument("--sample-sizes", dest="sample_sizes", type=parse_ints)
    sim.add_argument("--errors", type=parse_strings, help="normal,t3,shifted_exp")
    sim.add_argument("--targets", type=parse_strings, help="mean,0.05,0.5,...")
    sim.add_argument("--grid-size", dest="grid_size", type=int)
    sim.add_argument("--oracle-draws", dest="oracle_draws", type=int)
    sim.add_argument("--n", type=int, help="sample size of the coverage experiment")
    sim.add_argument("--alpha", type=float)
    sim.add_argument("--cv-grid", dest="cv_grid", type=parse_floats)
    sim.add_argument("--cv-blocks", dest="cv_blocks", type=int)

    replay = add("replay", "full pipeline on the aligned financial data", data, bandwidth)
    replay.add_argument("--levels", type=parse_floats)
    replay.add_argument("--alpha", type=float)
    replay.add_argument("--variance-constant", dest="variance_constant", choices=VARIANCE_CONSTANTS)
    replay.add_argument("--var-level", dest="var_level", type=float)
    replay.add_argument("--frequency", choices=FREQUENCIES)
    replay.add_argument("--volatility-window", dest="volatility_window", type=int)

    add("select-bandwidth", "blocked cross-validation report", data, bandwidth)
    return parser


def write_manifest(
    cfg: RunConfig, result: CommandResult, out_dir: Path, started_at: datetime, wall_time: float
) -> Path:
    """Echo of the resolved configuration; passing it back via ``--config`` replays the run."""
    manifest = {
        "command": cfg.command,
        "version": __version__,
        "seed": cfg.seed,
        "config": cfg.to_dict(),
        "artifacts": result.artifacts,
        "summary": result.summary,
        "alignment": result.alignment.to_dict() if result.alignment else None,
        "started_at": started_at.isoformat(),
        "wall_time_s": round(wall_time, 3),
    }
    path = out_dir / MANIFEST_NAME
    path.write_text(json.dumps(manifest, indent=2, default=float) + "\n", encoding="utf-8")
    return path


def run(cfg: RunConfig) -> int:
    """Execute one command and write its manifest."""
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    started_at = datetime.now().astimezone()
    start_time = time.time()
    logger.log_info("Run started", command=cfg.command, output_dir=str(out_dir), seed=cfg.seed)

    result = COMMAND_HANDLERS[cfg.command](cfg, out_dir)
    wall_time = time.time() - start_time
    write_manifest(cfg, result, out_dir, started_at, wall_time)

    logger.log_info(
        "Run completed",
        command=cfg.command,
        artifacts=result.artifacts,
        total_time_ms=round(wall_time * 1000, 2),
    )
    return EXIT_OK


def _report(category: str, error: BaseException) -> None:
    message = " ".join(str(error).split())
    print(f"error category={category} message={message}", file=sys.stderr)  # noqa: T201


def main(argv: list[str] | None = None) -> int:
    try:
        args = vars(build_parser().parse_args(argv))
        command = args.pop("command")
        config_path = args.pop("config", None)
        cfg = build_run_config(command, args, config_path)
        set_global_level(LogLevel.from_name(cfg.log_level))
        return run(cfg)
    except ConfigError as e:
        _report(e.category, e)
        return EXIT_USAGE
    except GeoquantError as e:
        logger.log_error("Run failed", ex=e, category=e.category)
        _report(e.category, e)
        return EXIT_FAILURE
    except OSError as e:
        logger.log_error("Run failed", ex=e, category="io")
        _report("io", e)
        return EXIT_FAILURE


if __name__ == "__main__":
    sys.exit(main())
