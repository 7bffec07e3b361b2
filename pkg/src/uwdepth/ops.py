"""Array-level operation registry.

Single source of truth for the operations exported to foreign callers: each
entry adapts one public function to plain float arrays plus a JSON-able
params dict, and declares the rank of every array input. Bridge layers
generate their surface and their shape validation from :data:`MANIFEST`, so
the exported set cannot drift from the native API.
"""

from __future__ import annotations

from typing import Callable, NamedTuple

import numpy as np

from .enhancement import SharpenConfig, WaterModel, degrade, enhance, restore
from .errors import ParameterError
from .evaluation import depth_metrics, median_scale
from .imaging import BlurConfig, DepthMap, Image, Mask
from .geometry import Intrinsics, Pose
from .losses import LossConfig, LossMap, min_reprojection_loss, pearson_loss, \
    photometric_error
from .masking import TgamState, consistency_mask, tgam_mask, tgam_update

MANIFEST_VERSION = 1


class OpSpec(NamedTuple):
    fn: Callable
    required: dict  # array name -> ndim (None = any rank)
    optional: dict  # array name -> ndim


def _image(arrays: dict, key: str) -> Image:
    return Image(np.asarray(arrays[key], dtype=np.float64))


def _depth(arrays: dict, key: str) -> DepthMap:
    # default validity (finite & positive) and invalid-pixel sanitization
    # are the DepthMap constructor's own contract; non-finite values at
    # declared-valid pixels must surface as a native validation error
    depth = np.asarray(arrays[key], dtype=np.float64)
    valid = arrays.get(f"{key}_valid")
    return DepthMap(depth, None if valid is None else np.asarray(valid) > 0)


def _loss_map(arrays: dict, key: str = "loss") -> LossMap:
    valid = arrays.get("valid")
    return LossMap(np.asarray(arrays[key], dtype=np.float64),
                   None if valid is None else np.asarray(valid) > 0)


def _loss_cfg(params: dict) -> LossConfig:
    base = LossConfig()
    return LossConfig(alpha=params.get("alpha", base.alpha),
                      ssim_window=params.get("ssim_window", base.ssim_window),
                      ssim_c1=params.get("ssim_c1", base.ssim_c1),
                      ssim_c2=params.get("ssim_c2", base.ssim_c2))


def _water_model(params: dict) -> WaterModel:
    try:
        return WaterModel(np.asarray(params["B"], dtype=np.float64),
                          np.asarray(params["beta_D"], dtype=np.float64))
    except KeyError as exc:
        raise ParameterError(f"water model params missing key {exc}") from exc


def _intrinsics(params: dict) -> Intrinsics:
    try:
        k = params["K"]
        return Intrinsics(fx=float(k["fx"]), fy=float(k["fy"]),
                          cx=float(k["cx"]), cy=float(k["cy"]))
    except KeyError as exc:
        raise ParameterError(f"intrinsics params missing key {exc}") from exc


def _pose(params: dict) -> Pose:
    if "pose" not in params:
        raise ParameterError("params missing 4x4 'pose' matrix")
    return Pose.from_matrix(np.asarray(params["pose"], dtype=np.float64))


def _op_noop(arrays, params):
    return {"x": np.asarray(arrays["x"], dtype=np.float64)}, {}


def _op_restore(arrays, params):
    out = restore(_image(arrays, "image"), _depth(arrays, "depth"),
                  _water_model(params))
    return {"image": out.data}, {}


def _op_degrade(arrays, params):
    out = degrade(_image(arrays, "image"), _depth(arrays, "depth"),
                  _water_model(params))
    return {"image": out.data}, {}


def _op_enhance(arrays, params):
    cfg = SharpenConfig(lowpass=BlurConfig(
        k=int(params.get("lowpass_k", 3)),
        sigma=float(params.get("lowpass_sigma", 2.0))))
    out = enhance(_image(arrays, "image"), _depth(arrays, "depth"),
                  _water_model(params), cfg)
    return {"image": out.data}, {}


def _op_photometric_error(arrays, params):
    out = photometric_error(_image(arrays, "a"), _image(arrays, "b"),
                            _loss_cfg(params))
    return {"loss": out.value}, {}


def _op_min_reprojection_loss(arrays, params):
    warps = np.asarray(arrays["warps"], dtype=np.float64)
    valids = np.asarray(arrays["warp_valid"]) > 0
    if warps.ndim != 4 or valids.shape != warps.shape[:3]:
        raise ParameterError("warps must be (N, H, W, C) with (N, H, W) validity")
    pairs = [(Image(warps[i]), Mask(valids[i])) for i in range(warps.shape[0])]
    out = min_reprojection_loss(_image(arrays, "target"), pairs, _loss_cfg(params))
    return {"loss": out.value, "valid": out.valid.astype(np.float64)}, {}


def _op_pearson_loss(arrays, params):
    value = pearson_loss(_depth(arrays, "d_s"), _depth(arrays, "d_t"))
    return {}, {"loss": value}


def _op_tgam_update(arrays, params):
    state = TgamState(threshold=float(params.get("threshold", float("nan"))),
                      beta=float(params.get("beta", 0.98)),
                      epsilon=float(params.get("epsilon", 5.0)),
                      initialized=bool(params.get("initialized", False)))
    new_state, threshold = tgam_update(state, _loss_map(arrays))
    return {}, {"threshold": threshold,
                "state": {"threshold": new_state.threshold,
                          "beta": new_state.beta,
                          "epsilon": new_state.epsilon,
                          "initialized": new_state.initialized}}


def _op_tgam_mask(arrays, params):
    if "threshold" not in params:
        raise ParameterError("tgam_mask params need a 'threshold'")
    out = tgam_mask(_loss_map(arrays), float(params["threshold"]))
    return {"keep": out.keep.astype(np.float64)}, {}


def _op_consistency_mask(arrays, params):
    out = consistency_mask(_depth(arrays, "depth_t"), _depth(arrays, "depth_s"),
                           _pose(params), _intrinsics(params),
                           float(params.get("tau", 0.03)))
    return {"keep": out.keep.astype(np.float64)}, {}


def _op_depth_metrics(arrays, params):
    report = depth_metrics(_depth(arrays, "pred"), _depth(arrays, "gt"))
    return {}, report.to_json()


def _op_median_scale(arrays, params):
    out = median_scale(_depth(arrays, "pred"), _depth(arrays, "gt"))
    return {"depth": out.depth, "valid": out.valid.astype(np.float64)}, {}


MANIFEST: dict[str, OpSpec] = {
    "noop": OpSpec(_op_noop, {"x": None}, {}),
    "restore": OpSpec(_op_restore, {"image": 3, "depth": 2},
                      {"depth_valid": 2}),
    "degrade": OpSpec(_op_degrade, {"image": 3, "depth": 2},
                      {"depth_valid": 2}),
    "enhance": OpSpec(_op_enhance, {"image": 3, "depth": 2},
                      {"depth_valid": 2}),
    "photometric_error": OpSpec(_op_photometric_error, {"a": 3, "b": 3}, {}),
    "min_reprojection_loss": OpSpec(
        _op_min_reprojection_loss,
        {"target": 3, "warps": 4, "warp_valid": 3}, {}),
    "pearson_loss": OpSpec(_op_pearson_loss, {"d_s": 2, "d_t": 2},
                           {"d_s_valid": 2, "d_t_valid": 2}),
    "tgam_update": OpSpec(_op_tgam_update, {"loss": 2}, {"valid": 2}),
    "tgam_mask": OpSpec(_op_tgam_mask, {"loss": 2}, {"valid": 2}),
    "consistency_mask": OpSpec(_op_consistency_mask,
                               {"depth_t": 2, "depth_s": 2},
                               {"depth_t_valid": 2, "depth_s_valid": 2}),
    "depth_metrics": OpSpec(_op_depth_metrics, {"pred": 2, "gt": 2},
                            {"pred_valid": 2, "gt_valid": 2}),
    "median_scale": OpSpec(_op_median_scale, {"pred": 2, "gt": 2},
                           {"pred_valid": 2, "gt_valid": 2}),
}


def manifest_json() -> dict:
    """Versioned description of the exported operation set."""
    return {"version": MANIFEST_VERSION,
            "operations": {name: {"arrays": dict(spec.required),
                                  "optional_arrays": dict(spec.optional)}
                           for name, spec in sorted(MANIFEST.items())}}


def call(name: str, arrays: dict, params: dict | None = None
         ) -> tuple[dict, dict]:
    """Invoke a manifest operation on plain arrays.

    Returns (output arrays, output JSON values). Unknown names and missing
    inputs raise :class:`~uwdepth.errors.ParameterError`.
    """
    if name not in MANIFEST:
        raise ParameterError(f"unknown operation: {name}",
                             available=sorted(MANIFEST))
    spec = MANIFEST[name]
    arrays = arrays or {}
    missing = [key for key in spec.required if key not in arrays]
    if missing:
        raise ParameterError(f"operation {name} missing inputs: {missing}")
    return spec.fn(arrays, params or {})
