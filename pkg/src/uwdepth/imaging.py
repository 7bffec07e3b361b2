"""Raster primitives shared by the whole pipeline.

Images are (H, W, C) float64 arrays with C in {1, 3} and nominal range [0, 1]
(values outside the range are legal, e.g. gradients). Depth maps are (H, W)
float64 with an explicit validity channel; invalid pixels are zeroed in
storage and excluded from every reduction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage

from .errors import ParameterError


def _float_array(data, name: str) -> np.ndarray:
    arr = np.asarray(data, dtype=np.float64)
    if arr.size == 0:
        raise ParameterError(f"{name} is empty")
    return arr


@dataclass(frozen=True)
class Image:
    """(H, W, C) floating-point raster, C in {1, 3}, finite values only."""

    data: np.ndarray

    def __post_init__(self):
        arr = _float_array(self.data, "image")
        if arr.ndim == 2:
            arr = arr[:, :, None]
        if arr.ndim != 3 or arr.shape[2] not in (1, 3):
            raise ParameterError(
                "image must be (H, W) or (H, W, C) with C in {1, 3}",
                shape=list(np.shape(self.data)),
            )
        if not np.all(np.isfinite(arr)):
            raise ParameterError("image contains non-finite values")
        object.__setattr__(self, "data", arr)

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def channels(self) -> int:
        return self.data.shape[2]

    def same_shape(self, other: "Image") -> bool:
        return self.data.shape == other.data.shape


@dataclass(frozen=True)
class DepthMap:
    """(H, W) depth with per-pixel validity.

    ``valid`` defaults to ``finite & (depth > 0)``, matching how depth files
    with NaN/non-positive holes are ingested. Values at invalid pixels are
    stored as 0 so vectorized consumers never see NaN. Valid pixels must be
    finite and >= 0 (normalized maps legitimately contain zeros).
    """

    depth: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        depth = np.asarray(self.depth, dtype=np.float64)
        if depth.ndim != 2 or depth.size == 0:
            raise ParameterError("depth must be a non-empty (H, W) array",
                                 shape=list(np.shape(self.depth)))
        if self.valid is None:
            valid = np.isfinite(depth) & (depth > 0)
        else:
            valid = np.asarray(self.valid, dtype=bool)
            if valid.shape != depth.shape:
                raise ParameterError("validity mask shape mismatch",
                                     depth=list(depth.shape), valid=list(valid.shape))
        if not np.all(np.isfinite(depth[valid])):
            raise ParameterError("depth has non-finite values at valid pixels")
        if np.any(depth[valid] < 0):
            raise ParameterError("depth has negative values at valid pixels")
        depth = np.where(valid, depth, 0.0)
        object.__setattr__(self, "depth", depth)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.depth.shape[0]

    @property
    def width(self) -> int:
        return self.depth.shape[1]

    @property
    def n_valid(self) -> int:
        return int(self.valid.sum())

    def valid_values(self) -> np.ndarray:
        return self.depth[self.valid]


@dataclass(frozen=True)
class Mask:
    """(H, W) boolean keep-map: True = pixel participates."""

    keep: np.ndarray

    def __post_init__(self):
        keep = np.asarray(self.keep, dtype=bool)
        if keep.ndim != 2 or keep.size == 0:
            raise ParameterError("mask must be a non-empty (H, W) array")
        object.__setattr__(self, "keep", keep)

    @property
    def height(self) -> int:
        return self.keep.shape[0]

    @property
    def width(self) -> int:
        return self.keep.shape[1]

    def keep_rate(self) -> float:
        return float(self.keep.mean())

    def __and__(self, other: "Mask") -> "Mask":
        return Mask(self.keep & other.keep)


@dataclass(frozen=True)
class CoordField:
    """Continuous source-pixel coordinate per target pixel.

    Produced by reprojection; ``valid`` is False where the transformed point
    fell behind the camera or the driving depth was invalid.
    """

    u: np.ndarray
    v: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        u = np.asarray(self.u, dtype=np.float64)
        v = np.asarray(self.v, dtype=np.float64)
        if u.ndim != 2 or u.shape != v.shape or u.size == 0:
            raise ParameterError("coordinate fields must be matching (H, W) arrays")
        if not (np.all(np.isfinite(u)) and np.all(np.isfinite(v))):
            raise ParameterError("coordinates must be finite")
        valid = self.valid
        if valid is None:
            valid = np.ones(u.shape, dtype=bool)
        else:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != u.shape:
                raise ParameterError("coordinate validity shape mismatch")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "valid", valid)

    @property
    def height(self) -> int:
        return self.u.shape[0]

    @property
    def width(self) -> int:
        return self.u.shape[1]

    @classmethod
    def identity_grid(cls, height: int, width: int) -> "CoordField":
        v, u = np.mgrid[0:height, 0:width].astype(np.float64)
        return cls(u, v)


@dataclass(frozen=True)
class BlurConfig:
    """Gaussian kernel of half-window ``k`` (full size 2k+1) and std ``sigma``."""

    k: int = 2
    sigma: float = 1.5

    def __post_init__(self):
        if self.k < 1:
            raise ParameterError("blur half-window must be >= 1", k=self.k)
        if not (self.sigma > 0 and math.isfinite(self.sigma)):
            raise ParameterError("blur sigma must be positive", sigma=self.sigma)


def gaussian_kernel(cfg: BlurConfig) -> np.ndarray:
    """Normalized (2k+1)x(2k+1) Gaussian kernel (weights sum to 1)."""
    r = np.arange(-cfg.k, cfg.k + 1, dtype=np.float64)
    g = np.exp(-(r ** 2) / (2.0 * cfg.sigma ** 2))
    kern = np.outer(g, g)
    return kern / kern.sum()


def gaussian_blur(img: Image, cfg: BlurConfig) -> Image:
    """Blur with a normalized Gaussian kernel, reflection padding at borders."""
    kern = gaussian_kernel(cfg)
    out = np.empty_like(img.data)
    for c in range(img.channels):
        out[:, :, c] = ndimage.correlate(img.data[:, :, c], kern, mode="mirror")
    return Image(out)


def image_gradients(img: Image) -> tuple[Image, Image]:
    """Forward differences along x and y; last column/row zero-padded."""
    if img.width < 2 or img.height < 2:
        raise ParameterError("gradients need at least 2 pixels per axis",
                             height=img.height, width=img.width)
    gx = np.zeros_like(img.data)
    gy = np.zeros_like(img.data)
    gx[:, :-1, :] = img.data[:, 1:, :] - img.data[:, :-1, :]
    gy[:-1, :, :] = img.data[1:, :, :] - img.data[:-1, :, :]
    return Image(gx), Image(gy)


def percentile(values, q: float) -> float:
    """Nearest-rank percentile: value at index ceil(q/100 * n) - 1 of the sort.

    The index is clamped to [0, n-1], so q=0 returns the minimum and q=100
    the maximum.
    """
    vals = np.asarray(values, dtype=np.float64).ravel()
    if vals.size == 0:
        raise ParameterError("percentile of empty list")
    if not np.all(np.isfinite(vals)):
        raise ParameterError("percentile input must be finite")
    if not (0.0 <= q <= 100.0):
        raise ParameterError("percentile q must be in [0, 100]", q=q)
    idx = math.ceil(q / 100.0 * vals.size) - 1
    idx = min(max(idx, 0), vals.size - 1)
    return float(np.partition(vals, idx)[idx])


def bilinear_sample(img: Image, coords: CoordField) -> tuple[Image, Mask]:
    """Sample ``img`` at continuous coordinates.

    Coordinates outside [0, W-1] x [0, H-1] are clamped to the border and
    flagged invalid in the returned mask. Integer coordinates reproduce the
    source values exactly.
    """
    h, w = img.height, img.width
    u = coords.u
    v = coords.v
    in_range = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)
    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)

    x0 = np.floor(uc).astype(np.intp)
    y0 = np.floor(vc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = uc - x0
    wy = vc - y0

    data = img.data
    out = np.empty(u.shape + (img.channels,), dtype=np.float64)
    for c in range(img.channels):
        ch = data[:, :, c]
        v00 = ch[y0, x0]
        v01 = ch[y0, x1]
        v10 = ch[y1, x0]
        v11 = ch[y1, x1]
        top = v00 * (1.0 - wx) + v01 * wx
        bot = v10 * (1.0 - wx) + v11 * wx
        out[:, :, c] = top * (1.0 - wy) + bot * wy
    return Image(out), Mask(in_range & coords.valid)


def normalize_depth(d: DepthMap) -> DepthMap:
    """Min-max normalize valid depths to [0, 1]; invalid pixels map to 0.

    A constant map (zero range) normalizes to all zeros so downstream
    depth-weighted operators degrade to the identity instead of dividing
    by zero.
    """
    if d.n_valid == 0:
        raise ParameterError("cannot normalize an all-invalid depth map")
    vals = d.valid_values()
    lo = float(vals.min())
    hi = float(vals.max())
    if hi > lo:
        norm = (d.depth - lo) / (hi - lo)
    else:
        norm = np.zeros_like(d.depth)
    norm = np.where(d.valid, norm, 0.0)
    return DepthMap(norm, d.valid)
