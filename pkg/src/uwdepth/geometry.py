"""Pinhole projection, inverse-warp view synthesis, and rotation/crop geometry.

Pixel convention: ``u`` indexes columns, ``v`` rows, both zero-based at pixel
centers, so the homogeneous pixel is (u, v, 1) and K follows the usual
[[fx, 0, cx], [0, fy, cy], [0, 0, 1]] layout.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import GeometryError, ParameterError
from .imaging import CoordField, DepthMap, Image, Mask, bilinear_sample

_ORTHO_TOL = 1e-6


@dataclass(frozen=True)
class Intrinsics:
    """Pinhole intrinsics in pixels. ``width``/``height`` are optional metadata."""

    fx: float
    fy: float
    cx: float
    cy: float
    width: int | None = None
    height: int | None = None

    def __post_init__(self):
        for name in ("fx", "fy", "cx", "cy"):
            if not math.isfinite(getattr(self, name)):
                raise ParameterError(f"intrinsic {name} must be finite")
        if self.fx <= 0 or self.fy <= 0:
            raise ParameterError("focal lengths must be positive (K not invertible)",
                                 fx=self.fx, fy=self.fy)

    @property
    def matrix(self) -> np.ndarray:
        return np.array([[self.fx, 0.0, self.cx],
                         [0.0, self.fy, self.cy],
                         [0.0, 0.0, 1.0]])

    def rays(self, height: int, width: int) -> np.ndarray:
        """(H, W, 3) unit-depth rays K^-1 (u, v, 1), evaluated analytically."""
        v, u = np.mgrid[0:height, 0:width].astype(np.float64)
        rays = np.empty((height, width, 3))
        rays[:, :, 0] = (u - self.cx) / self.fx
        rays[:, :, 1] = (v - self.cy) / self.fy
        rays[:, :, 2] = 1.0
        return rays


@dataclass(frozen=True)
class Pose:
    """Rigid transform: x' = rotation @ x + translation."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.asarray(self.rotation, dtype=np.float64)
        t = np.asarray(self.translation, dtype=np.float64).reshape(3)
        if r.shape != (3, 3):
            raise ParameterError("rotation must be 3x3")
        if not np.all(np.isfinite(r)) or not np.all(np.isfinite(t)):
            raise ParameterError("pose must be finite")
        if np.abs(r.T @ r - np.eye(3)).max() > _ORTHO_TOL:
            raise ParameterError("rotation is not orthonormal")
        if abs(np.linalg.det(r) - 1.0) > _ORTHO_TOL:
            raise ParameterError("rotation determinant must be +1")
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", t)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=np.float64)
        if m.shape != (4, 4):
            raise ParameterError("pose matrix must be 4x4", shape=list(m.shape))
        return cls(m[:3, :3], m[:3, 3])

    @property
    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def compose(self, other: "Pose") -> "Pose":
        """self after other: (self . other)(x) = self(other(x))."""
        return Pose(self.rotation @ other.rotation,
                    self.rotation @ other.translation + self.translation)

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.rotation, np.eye(3))
                    and np.array_equal(self.translation, np.zeros(3)))

    def apply(self, points: np.ndarray) -> np.ndarray:
        """Transform (..., 3) points."""
        return points @ self.rotation.T + self.translation


@dataclass(frozen=True)
class PointMap:
    """Per-pixel 3D point in camera coordinates; z equals the generating depth."""

    xyz: np.ndarray
    valid: np.ndarray

    def __post_init__(self):
        xyz = np.asarray(self.xyz, dtype=np.float64)
        valid = np.asarray(self.valid, dtype=bool)
        if xyz.ndim != 3 or xyz.shape[2] != 3 or xyz.shape[:2] != valid.shape:
            raise ParameterError("point map must be (H, W, 3) with matching validity")
        object.__setattr__(self, "xyz", xyz)
        object.__setattr__(self, "valid", valid)


@dataclass(frozen=True)
class RotationSpec:
    """A sampled rotation angle ``theta`` within the range [-gamma, gamma]."""

    theta: float
    gamma: float

    def __post_init__(self):
        if not (math.isfinite(self.theta) and math.isfinite(self.gamma)):
            raise ParameterError("rotation angles must be finite")
        if self.gamma < 0:
            raise ParameterError("rotation range gamma must be >= 0", gamma=self.gamma)
        if not (-self.gamma <= self.theta <= self.gamma):
            raise ParameterError("theta outside [-gamma, gamma]",
                                 theta=self.theta, gamma=self.gamma)


def reproject(depth_t: DepthMap, pose_ts: Pose, K: Intrinsics) -> CoordField:
    """Continuous source coordinate of each target pixel.

    Implements p_s ~ K (R (D K^-1 p_t) + t) with perspective division.
    Pixels whose transformed z is <= 0 (or whose depth is invalid) are
    flagged invalid and given an out-of-range placeholder coordinate. An
    exactly-identity pose returns the integer grid, guaranteeing bitwise
    round trips.
    """
    if np.any(depth_t.depth[depth_t.valid] <= 0):
        raise ParameterError("reprojection requires positive depths at valid pixels")
    h, w = depth_t.height, depth_t.width
    if pose_ts.is_identity():
        grid = CoordField.identity_grid(h, w)
        return CoordField(grid.u, grid.v, depth_t.valid.copy())

    rays = K.rays(h, w)
    pts = rays * depth_t.depth[:, :, None]
    moved = pose_ts.apply(pts)
    z = moved[:, :, 2]
    front = z > 0
    valid = depth_t.valid & front
    safe_z = np.where(front, z, 1.0)
    u = K.fx * (moved[:, :, 0] / safe_z) + K.cx
    v = K.fy * (moved[:, :, 1] / safe_z) + K.cy
    u = np.where(valid, u, -1.0)
    v = np.where(valid, v, -1.0)
    return CoordField(u, v, valid)


def synthesize_view(src: Image, depth_t: DepthMap, pose_ts: Pose,
                    K: Intrinsics) -> tuple[Image, Mask]:
    """Inverse-warp ``src`` into the target view through depth and pose.

    The returned mask is the AND of sampling validity (in-bounds source
    coordinates) and positive-z reprojection validity.
    """
    if (src.height, src.width) != (depth_t.height, depth_t.width):
        raise ParameterError("source image and target depth resolution mismatch",
                             image=[src.height, src.width],
                             depth=[depth_t.height, depth_t.width])
    coords = reproject(depth_t, pose_ts, K)
    return bilinear_sample(src, coords)


def backproject_points(depth: DepthMap, K: Intrinsics) -> PointMap:
    """Lift each pixel to a 3D camera-frame point: D(p) * K^-1 (u, v, 1)."""
    if np.any(depth.depth[depth.valid] <= 0):
        raise ParameterError("backprojection requires positive depths at valid pixels")
    rays = K.rays(depth.height, depth.width)
    return PointMap(rays * depth.depth[:, :, None], depth.valid.copy())


def _split_quarter_turns(theta: float) -> tuple[int, float]:
    """Decompose into lossless quarter turns plus a residual in (-45, 45]."""
    n = math.ceil(theta / 90.0 - 0.5)
    residual = theta - 90.0 * n
    return n % 4, residual


def crop_dims(height: int, width: int, theta: float) -> tuple[int, int]:
    """Largest centered crop free of out-of-image content after rotation.

    Quarter turns are lossless (dimension swap only); the residual angle uses
    the inscribed-rectangle relation h = (H cos - W sin)/cos 2a,
    w = (W cos - H sin)/cos 2a, floored to integers. Residuals of +/-45 deg
    (cos 2a = 0) and crops collapsing to zero raise a geometry error.
    """
    if height < 1 or width < 1:
        raise ParameterError("crop_dims needs positive dimensions")
    turns, residual = _split_quarter_turns(theta)
    if turns % 2 == 1:
        height, width = width, height
    a = abs(math.radians(residual))
    if residual == 0.0:
        return height, width
    if abs(abs(residual) - 45.0) < 1e-9:
        raise GeometryError("residual rotation of 45 degrees has no stable crop",
                            theta=theta)
    cos2 = math.cos(2.0 * a)
    h = (height * math.cos(a) - width * math.sin(a)) / cos2
    w = (width * math.cos(a) - height * math.sin(a)) / cos2
    h_i, w_i = math.floor(h), math.floor(w)
    if h_i <= 0 or w_i <= 0:
        raise GeometryError("image too elongated for this rotation angle",
                            theta=theta, h=h, w=w)
    return h_i, w_i


def _residual_grid(height: int, width: int, residual: float,
                   out_h: int, out_w: int) -> tuple[np.ndarray, np.ndarray]:
    """Source pixel coordinates sampling a ``residual``-degree content rotation.

    Output pixel centers map back through the inverse rotation about the
    image center. The crop from :func:`crop_dims` keeps every coordinate
    inside [0, W-1] x [0, H-1] up to float round-off, which the sampler's
    border clamp absorbs.
    """
    a = math.radians(residual)
    c, s = math.cos(a), math.sin(a)
    cy_src, cx_src = (height - 1) / 2.0, (width - 1) / 2.0
    cy_dst, cx_dst = (out_h - 1) / 2.0, (out_w - 1) / 2.0
    dy, dx = np.mgrid[0:out_h, 0:out_w].astype(np.float64)
    dx -= cx_dst
    dy -= cy_dst
    # content rotation is p' = [[c, s], [-s, c]] p in (x, y-down) coords;
    # sampling applies the inverse
    us = c * dx - s * dy + cx_src
    vs = s * dx + c * dy + cy_src
    return us, vs


def rotate_center_crop(img: Image, spec: RotationSpec) -> Image:
    """Rotate by ``spec.theta`` and center-crop away all out-of-image content.

    Quarter turns are exact array rotations; the residual uses bilinear
    interpolation. Every output pixel is sampled strictly inside the source.
    """
    turns, residual = _split_quarter_turns(spec.theta)
    data = np.rot90(img.data, k=turns, axes=(0, 1))
    if residual == 0.0:
        return Image(data.copy())
    h, w = crop_dims(img.height, img.width, spec.theta)
    us, vs = _residual_grid(data.shape[0], data.shape[1], residual, h, w)
    out, _ = bilinear_sample(Image(data), CoordField(us, vs))
    return out


def rotate_center_crop_depth(depth: DepthMap, spec: RotationSpec) -> DepthMap:
    """Rotate/crop a depth map with nearest-neighbor gathering.

    Depths are physical values; blending across occlusion edges would
    fabricate geometry, so the residual rotation snaps to the nearest
    source pixel and carries its validity along.
    """
    turns, residual = _split_quarter_turns(spec.theta)
    d = np.rot90(depth.depth, k=turns, axes=(0, 1))
    valid = np.rot90(depth.valid, k=turns, axes=(0, 1))
    if residual == 0.0:
        return DepthMap(d.copy(), valid.copy())
    h, w = crop_dims(depth.height, depth.width, spec.theta)
    us, vs = _residual_grid(d.shape[0], d.shape[1], residual, h, w)
    xi = np.rint(us).astype(np.intp)
    yi = np.rint(vs).astype(np.intp)
    return DepthMap(d[yi, xi], valid[yi, xi])
