"""Exception hierarchy.

Every error raised on purpose by the library derives from :class:`GeoquantError` and
carries a short machine-readable ``category`` that the CLI prints on failure.
"""

from collections.abc import Sequence


class GeoquantError(Exception):
    """Base class for all library errors."""

    category = "runtime"


class InvalidArgumentError(GeoquantError, ValueError):
    category = "invalid-argument"


class EmptyNeighborhoodError(GeoquantError):
    """All kernel weights vanish at the evaluation point (bandwidth too small there)."""

    category = "empty-neighborhood"


class DegeneratePointError(GeoquantError):
    category = "degenerate-point"


class ResidualEvaluationError(GeoquantError):
    category = "residual-evaluation"


class DiagnosticsError(GeoquantError):
    """An estimate violates a structural property it holds by construction."""

    category = "diagnostics"


class SelectionFailureError(GeoquantError):
    category = "selection-failure"


class DataParseError(GeoquantError, ValueError):
    """Malformed or invalid input file content."""

    category = "parse-error"

    def __init__(self, message: str, rows: Sequence[int] = ()) -> None:
        super().__init__(message)
        self.rows = list(rows)


class AlignmentError(GeoquantError):
    category = "alignment"


class ConfigError(GeoquantError):
    """Invalid command-line or config-file settings."""

    category = "usage"
