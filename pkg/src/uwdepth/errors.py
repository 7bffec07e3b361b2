"""Exception hierarchy with machine-readable diagnostics.

Every error raised by this package derives from :class:`PipelineError` and
carries a stable ``code`` plus a ``details`` dict so CLI subcommands can emit
JSON diagnostics and foreign callers can map errors to typed exceptions.
"""

from __future__ import annotations

from typing import Any


class PipelineError(Exception):
    """Base class for all package errors."""

    code = "pipeline_error"

    def __init__(self, message: str, **details: Any):
        super().__init__(message)
        self.message = message
        self.details = details

    def diagnostics(self) -> dict:
        """JSON-serializable description of the failure."""
        return {"error": self.code, "message": self.message, "details": self.details}


class ParameterError(PipelineError):
    """Invalid argument value, shape, or empty input."""

    code = "parameter_error"


class GeometryError(PipelineError):
    """Rotation/crop combination has no valid output geometry."""

    code = "geometry_error"


class EstimationError(PipelineError):
    """Water-model estimation lacks usable data (too few pixels, degenerate depth range)."""

    code = "estimation_error"


class DegenerateInputError(PipelineError):
    """Input is constant/zero-variance where variation is required."""

    code = "degenerate_input"


class OptimizationError(PipelineError):
    """Depth fitting diverged; carries the loss trace in details."""

    code = "optimization_error"


class FileFormatError(PipelineError):
    """Unreadable or unsupported image/depth file."""

    code = "io_error"
