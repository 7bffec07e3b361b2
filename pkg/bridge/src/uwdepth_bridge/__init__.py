"""Buffer-level bridge over the uwdepth pipeline.

Every exported operation takes contiguous row-major float32 buffers plus a
JSON-able params dict and produces the same, bit-identical to calling the
native API on identical inputs (buffers are widened to float64 at the
boundary, the native op runs unchanged, and results narrow back). The
exported set is generated from the native operation manifest, so it cannot
drift, and native errors surface as typed exceptions carrying the native
diagnostic payload.
"""

from __future__ import annotations

import json
import threading
from pathlib import Path

import numpy as np

from uwdepth import ops as _native_ops
from uwdepth.errors import PipelineError

__version__ = "0.1.0"

__all__ = [
    "BridgeError", "ShapeError", "UnknownOperationError",
    "BridgeParameterError", "BridgeGeometryError", "BridgeEstimationError",
    "BridgeDegenerateInputError", "BridgeOptimizationError", "BridgeIOError",
    "bridge_call", "exported_operations", "manifest", "write_manifest",
    "TgamHandle",
]


class BridgeError(Exception):
    """Base class for bridge-side failures.

    ``diagnostics`` holds the native machine-readable error payload when the
    failure originated in the native layer, else a bridge-generated one.
    """

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {"error": "bridge_error",
                                           "message": message}


class ShapeError(BridgeError):
    """Buffer violates the contract: dtype, rank, or emptiness."""


class UnknownOperationError(BridgeError):
    """Requested operation is not in the manifest."""


class BridgeParameterError(BridgeError):
    pass


class BridgeGeometryError(BridgeError):
    pass


class BridgeEstimationError(BridgeError):
    pass


class BridgeDegenerateInputError(BridgeError):
    pass


class BridgeOptimizationError(BridgeError):
    pass


class BridgeIOError(BridgeError):
    pass


_ERROR_BY_CODE = {
    "parameter_error": BridgeParameterError,
    "geometry_error": BridgeGeometryError,
    "estimation_error": BridgeEstimationError,
    "degenerate_input": BridgeDegenerateInputError,
    "optimization_error": BridgeOptimizationError,
    "io_error": BridgeIOError,
}


def _validate_buffer(name: str, op: str, value, ndim: int | None) -> np.ndarray:
    if not isinstance(value, np.ndarray):
        raise ShapeError(f"{op}: input '{name}' must be a numpy array, "
                         f"got {type(value).__name__}")
    if value.dtype != np.float32:
        raise ShapeError(f"{op}: input '{name}' must be float32, "
                         f"got {value.dtype}")
    if value.size == 0:
        raise ShapeError(f"{op}: input '{name}' is empty")
    if ndim is not None and value.ndim != ndim:
        raise ShapeError(f"{op}: input '{name}' must have rank {ndim}, "
                         f"got shape {value.shape}")
    # zero-copy for aligned contiguous buffers, defensive copy otherwise
    if not value.flags["C_CONTIGUOUS"]:
        value = np.ascontiguousarray(value)
    return value


def exported_operations() -> list[str]:
    return sorted(_native_ops.MANIFEST)


def manifest() -> dict:
    """Versioned manifest shared with the native API."""
    payload = _native_ops.manifest_json()
    payload["bridge_version"] = __version__
    payload["dtype"] = "float32"
    return payload


def write_manifest(path: str | Path):
    Path(path).write_text(json.dumps(manifest(), indent=2) + "\n")


def bridge_call(name: str, inputs: dict[str, np.ndarray],
                params: dict | None = None
                ) -> tuple[dict[str, np.ndarray], dict]:
    """Run one exported operation on float32 buffers.

    Returns (output buffers, output values). Output buffers are contiguous
    float32; output values are plain JSON-able scalars/dicts. Native errors
    raise the matching Bridge* exception with the native diagnostics
    attached.
    """
    spec = _native_ops.MANIFEST.get(name)
    if spec is None:
        raise UnknownOperationError(
            f"unknown operation '{name}'",
            {"error": "unknown_operation", "message": name,
             "details": {"available": exported_operations()}})
    inputs = inputs or {}
    arrays64: dict[str, np.ndarray] = {}
    for key, value in inputs.items():
        if key in spec.required:
            ndim = spec.required[key]
        elif key in spec.optional:
            ndim = spec.optional[key]
        else:
            raise ShapeError(f"{name}: unexpected input '{key}'")
        buf = _validate_buffer(key, name, value, ndim)
        arrays64[key] = buf.astype(np.float64)
    missing = [key for key in spec.required if key not in arrays64]
    if missing:
        raise ShapeError(f"{name}: missing required inputs {missing}")

    try:
        out_arrays, out_values = _native_ops.call(name, arrays64, params)
    except PipelineError as exc:
        cls = _ERROR_BY_CODE.get(exc.code, BridgeError)
        raise cls(str(exc), exc.diagnostics()) from exc
    outputs = {key: np.ascontiguousarray(arr, dtype=np.float32)
               for key, arr in out_arrays.items()}
    return outputs, out_values


class TgamHandle:
    """Single-writer handle around the anomaly-threshold EMA state.

    Updates are serialized with an internal lock; reads of ``state`` return
    a snapshot dict.
    """

    def __init__(self, beta: float = 0.98, epsilon: float = 5.0):
        self._lock = threading.Lock()
        self._state = {"threshold": float("nan"), "beta": beta,
                       "epsilon": epsilon, "initialized": False}

    @property
    def state(self) -> dict:
        with self._lock:
            return dict(self._state)

    def update(self, loss: np.ndarray, valid: np.ndarray | None = None) -> float:
        inputs = {"loss": loss}
        if valid is not None:
            inputs["valid"] = valid
        with self._lock:
            _, values = bridge_call("tgam_update", inputs, self._state)
            self._state = values["state"]
            return values["threshold"]

    def mask(self, loss: np.ndarray, valid: np.ndarray | None = None
             ) -> np.ndarray:
        inputs = {"loss": loss}
        if valid is not None:
            inputs["valid"] = valid
        with self._lock:
            if not self._state["initialized"]:
                raise BridgeParameterError(
                    "threshold not initialized; call update() first",
                    {"error": "parameter_error",
                     "message": "uninitialized tgam handle", "details": {}})
            threshold = self._state["threshold"]
        outputs, _ = bridge_call("tgam_mask", inputs,
                                 {"threshold": threshold})
        return outputs["keep"]
