from __future__ import annotations

from typing import Any, Dict, Optional


class QnlsError(Exception):
    """Base class for every error raised by the laboratory."""


class GridMismatchError(QnlsError, ValueError):
    pass


class BudgetError(QnlsError, ValueError):
    pass


class ShellRangeError(QnlsError, ValueError):
    pass


class SymbolError(QnlsError, ValueError):
    pass


class ModelValidationError(QnlsError, ValueError):
    pass


class ConfigError(QnlsError, ValueError):
    pass


class SupportCheckError(QnlsError, ValueError):
    pass


class StencilError(QnlsError, ValueError):
    pass


class SnapshotFormatError(QnlsError, ValueError):
    pass


class NumericalAbort(QnlsError, RuntimeError):
    """A time integration or ray trace that had to stop; `diagnostic` says where and why."""

    def __init__(self, message: str, diagnostic: Optional[Dict[str, Any]] = None, partial: Any = None) -> None:
        super().__init__(message)
        self.diagnostic: Dict[str, Any] = dict(diagnostic or {})
        # whatever was computed before the abort (e.g. a Trajectory), for flushing
        self.partial = partial


class InadmissiblePairError(QnlsError, ValueError):
    pass


class ManifestError(QnlsError, ValueError):
    """A run directory whose manifest is missing keys or is not valid JSON."""
