"""Simplified underwater image formation: constant per-channel backscatter
plus exponential attenuation, I_c = J_c e^(-beta_c z) + B_c.

The module estimates the two per-scene parameter vectors from degraded
frames, inverts the model in closed form, and finishes with depth-weighted
unsharp sharpening. ``degrade`` is the forward simulator the tests use as a
round-trip oracle.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import EstimationError, ParameterError
from .imaging import BlurConfig, DepthMap, Image, gaussian_blur, normalize_depth

# floor for the backscatter-subtracted residual before taking logs
_RESIDUAL_FLOOR = 1e-4
# saturated pixels carry a clipped intensity and would bias the regression
_SATURATION_CEILING = 0.999
_DARK_FRACTION = 0.001
_MIN_REGRESSION_PIXELS = 100


@dataclass(frozen=True)
class WaterModel:
    """Per-scene water parameters: backscatter B and attenuation beta per channel."""

    backscatter: np.ndarray
    attenuation: np.ndarray

    def __post_init__(self):
        b = np.asarray(self.backscatter, dtype=np.float64).reshape(-1)
        beta = np.asarray(self.attenuation, dtype=np.float64).reshape(-1)
        if b.shape != (3,) or beta.shape != (3,):
            raise ParameterError("water model needs 3-vectors per parameter")
        if not (np.all(np.isfinite(b)) and np.all(np.isfinite(beta))):
            raise ParameterError("water model parameters must be finite")
        if np.any(b < 0) or np.any(b >= 1):
            raise ParameterError("backscatter must lie in [0, 1) per channel")
        if np.any(beta < 0):
            raise ParameterError("attenuation must be >= 0 per channel")
        object.__setattr__(self, "backscatter", b)
        object.__setattr__(self, "attenuation", beta)

    def to_json(self) -> dict:
        return {"B": self.backscatter.tolist(), "beta_D": self.attenuation.tolist()}

    @classmethod
    def from_json(cls, obj: dict) -> "WaterModel":
        try:
            return cls(np.asarray(obj["B"]), np.asarray(obj["beta_D"]))
        except KeyError as exc:
            raise ParameterError(f"water model JSON missing key {exc}") from exc


@dataclass(frozen=True)
class SharpenConfig:
    """Low-pass filter used by the unsharp mask."""

    lowpass: BlurConfig = BlurConfig(k=3, sigma=2.0)


def _require_rgb(img: Image, op: str):
    if img.channels != 3:
        raise ParameterError(f"{op} expects a 3-channel image", channels=img.channels)


def estimate_backscatter(img: Image) -> np.ndarray:
    """Backscatter per channel: mean of that channel's darkest 0.1% pixels.

    Channels are ranked independently, matching the per-channel constant in
    the formation model. Needs >= 1000 pixels so 0.1% is at least one pixel.
    Result is clamped to [0, 0.99].
    """
    _require_rgb(img, "backscatter estimation")
    n = img.height * img.width
    if n < 1000:
        raise ParameterError("backscatter estimation needs >= 1000 pixels", pixels=n)
    count = max(1, int(round(_DARK_FRACTION * n)))
    b = np.empty(3)
    for c in range(3):
        vals = img.data[:, :, c].ravel()
        darkest = np.partition(vals, count - 1)[:count]
        b[c] = darkest.mean()
    return np.clip(b, 0.0, 0.99)


def estimate_attenuation(frames: list[tuple[Image, DepthMap]],
                         backscatter: np.ndarray) -> np.ndarray:
    """Per-channel attenuation from pooled log-intensity regression.

    Under the formation model, -ln(I_c - B_c) = beta_c z - ln J_c, so the
    least-squares slope of the pooled (z, -ln residual) cloud estimates
    beta_c with scene texture acting as noise. Uses pixels with valid depth,
    a residual above the log floor, and intensity below the saturation
    ceiling; requires >= 100 such pixels per channel and a non-degenerate
    depth spread. Slopes clamp to >= 0.
    """
    if not frames:
        raise ParameterError("attenuation estimation needs at least one frame")
    b = np.asarray(backscatter, dtype=np.float64).reshape(3)
    beta = np.empty(3)
    for c in range(3):
        zs = []
        ys = []
        for img, depth in frames:
            _require_rgb(img, "attenuation estimation")
            if (img.height, img.width) != (depth.height, depth.width):
                raise ParameterError("frame image/depth shape mismatch")
            intensity = img.data[:, :, c]
            residual = intensity - b[c]
            ok = depth.valid & (residual > _RESIDUAL_FLOOR) \
                & (intensity < _SATURATION_CEILING)
            zs.append(depth.depth[ok])
            ys.append(-np.log(residual[ok]))
        z = np.concatenate(zs)
        y = np.concatenate(ys)
        if z.size < _MIN_REGRESSION_PIXELS:
            raise EstimationError(
                "too few usable pixels for attenuation regression",
                channel=c, pixels=int(z.size))
        zc = z - z.mean()
        var = float(zc @ zc)
        if var == 0.0:
            raise EstimationError("degenerate depth range in attenuation regression",
                                  channel=c)
        beta[c] = max(0.0, float(zc @ (y - y.mean())) / var)
    return beta


def estimate_water_model(frames: list[tuple[Image, DepthMap]]) -> WaterModel:
    """Scene-level model: backscatter from the first frame, attenuation pooled."""
    if not frames:
        raise ParameterError("water model estimation needs at least one frame")
    b = estimate_backscatter(frames[0][0])
    beta = estimate_attenuation(frames, b)
    return WaterModel(b, beta)


def restore(img: Image, depth: DepthMap, model: WaterModel) -> Image:
    """Invert the formation model: J_c = (I_c - B_c) e^(+beta_c z), clamped to [0, 1].

    Pixels with invalid depth pass through unchanged.
    """
    _require_rgb(img, "restoration")
    if (img.height, img.width) != (depth.height, depth.width):
        raise ParameterError("image/depth shape mismatch")
    gain = np.exp(depth.depth[:, :, None] * model.attenuation[None, None, :])
    j = np.clip((img.data - model.backscatter[None, None, :]) * gain, 0.0, 1.0)
    out = np.where(depth.valid[:, :, None], j, img.data)
    return Image(out)


def degrade(clean: Image, depth: DepthMap, model: WaterModel) -> Image:
    """Forward simulator: I_c = J_c e^(-beta_c z) + B_c, clamped to [0, 1]."""
    _require_rgb(clean, "degradation")
    if (clean.height, clean.width) != (depth.height, depth.width):
        raise ParameterError("image/depth shape mismatch")
    decay = np.exp(-depth.depth[:, :, None] * model.attenuation[None, None, :])
    i = np.clip(clean.data * decay + model.backscatter[None, None, :], 0.0, 1.0)
    out = np.where(depth.valid[:, :, None], i, clean.data)
    return Image(out)


def depth_weighted_sharpen(img: Image, depth: DepthMap,
                           cfg: SharpenConfig = SharpenConfig()) -> Image:
    """Unsharp masking with per-pixel strength from normalized depth.

    I_en = (I - lowpass(I)) * d' + I with d' the min-max normalized depth
    (0 at invalid pixels), clamped to [0, 1]. Far pixels, which underwater
    blur suppresses hardest, receive the strongest boost.
    """
    if (img.height, img.width) != (depth.height, depth.width):
        raise ParameterError("image/depth shape mismatch")
    dprime = normalize_depth(depth).depth
    low = gaussian_blur(img, cfg.lowpass)
    out = (img.data - low.data) * dprime[:, :, None] + img.data
    return Image(np.clip(out, 0.0, 1.0))


def enhance(img: Image, depth: DepthMap, model: WaterModel,
            cfg: SharpenConfig = SharpenConfig()) -> Image:
    """Full enhancement: model inversion followed by depth-weighted sharpening."""
    return depth_weighted_sharpen(restore(img, depth, model), depth, cfg)
