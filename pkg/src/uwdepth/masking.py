"""Mask generators: EMA-thresholded anomaly masking, auto-masking, and the
3D-consistency mask used to filter distillation pseudo-labels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ParameterError
from .imaging import DepthMap, Image, Mask
from .geometry import Intrinsics, Pose, reproject
from .losses import LossConfig, LossMap, photometric_error


@dataclass(frozen=True)
class TgamState:
    """Running EMA threshold over per-image anomaly boundaries.

    ``epsilon`` is the percentage of highest-loss pixels treated as
    anomalous; ``beta`` the EMA momentum. Updates are deterministic and
    order-sensitive; callers must serialize updates to one state
    (single-writer contract).
    """

    threshold: float = math.nan
    beta: float = 0.98
    epsilon: float = 5.0
    initialized: bool = False

    def __post_init__(self):
        if not (0.0 < self.beta < 1.0):
            raise ParameterError("beta must be in (0, 1)", beta=self.beta)
        if not (0.0 < self.epsilon < 100.0):
            raise ParameterError("epsilon must be in (0, 100)", epsilon=self.epsilon)
        if self.initialized and not math.isfinite(self.threshold):
            raise ParameterError("initialized state needs a finite threshold")


def _top_fraction_boundary(values: np.ndarray, epsilon: float) -> float:
    """Smallest member of the top epsilon% of values.

    With distinct values, exactly ceil(epsilon/100 * n) entries are >= the
    boundary, so a strict keep comparison drops exactly the top epsilon%.
    """
    n = values.size
    k = math.ceil(epsilon / 100.0 * n)
    k = min(max(k, 1), n)
    return float(np.partition(values, n - k)[n - k])


def tgam_update(state: TgamState, loss_map: LossMap) -> tuple[TgamState, float]:
    """Fold one image's anomaly boundary into the EMA threshold.

    The first image initializes the threshold directly; afterwards
    T(i) = beta * T(i-1) + (1 - beta) * t(i).
    """
    vals = loss_map.valid_values()
    if vals.size == 0:
        raise ParameterError("loss map has no valid pixels")
    t_i = _top_fraction_boundary(vals, state.epsilon)
    if not state.initialized:
        new = replace(state, threshold=t_i, initialized=True)
    else:
        new = replace(state, threshold=state.beta * state.threshold
                      + (1.0 - state.beta) * t_i)
    return new, new.threshold


def tgam_mask(loss_map: LossMap, threshold: float) -> Mask:
    """Keep pixels strictly below the threshold; invalid pixels are dropped."""
    if not math.isfinite(threshold):
        raise ParameterError("threshold must be finite", threshold=threshold)
    return Mask(loss_map.valid & (loss_map.value < threshold))


def auto_mask(target: Image, sources: list[Image],
              warps: list[tuple[Image, Mask]],
              cfg: LossConfig = LossConfig()) -> Mask:
    """Keep pixels where the best warp beats the best unwarped source.

    Pixels whose raw source already matches the target (static camera or
    objects co-moving with it) fail the strict comparison and are dropped,
    as are pixels invalid in every warp.
    """
    if len(sources) != len(warps):
        raise ParameterError("sources and warps must be parallel lists",
                             sources=len(sources), warps=len(warps))
    if not sources:
        raise ParameterError("auto-mask needs at least one source")
    h, w = target.height, target.width
    warp_best = np.full((h, w), np.inf)
    for warp, mask in warps:
        pe = photometric_error(target, warp, cfg).value
        warp_best = np.minimum(warp_best, np.where(mask.keep, pe, np.inf))
    src_best = np.full((h, w), np.inf)
    for src in sources:
        src_best = np.minimum(src_best, photometric_error(target, src, cfg).value)
    return Mask(warp_best < src_best)


def _sample_depth_renormalized(depth: DepthMap, u: np.ndarray, v: np.ndarray
                               ) -> tuple[np.ndarray, np.ndarray]:
    """Bilinear depth sampling over valid neighbors only.

    Invalid neighbors are removed from the interpolation and the remaining
    weights renormalized; a fully invalid neighborhood returns invalid.
    Out-of-range coordinates are invalid.
    """
    h, w = depth.height, depth.width
    in_range = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)
    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)
    x0 = np.floor(uc).astype(np.intp)
    y0 = np.floor(vc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = uc - x0
    wy = vc - y0

    acc = np.zeros(u.shape)
    wsum = np.zeros(u.shape)
    for yy, xx, wgt in (
        (y0, x0, (1.0 - wx) * (1.0 - wy)),
        (y0, x1, wx * (1.0 - wy)),
        (y1, x0, (1.0 - wx) * wy),
        (y1, x1, wx * wy),
    ):
        ok = depth.valid[yy, xx]
        wv = np.where(ok, wgt, 0.0)
        acc += wv * depth.depth[yy, xx]
        wsum += wv
    good = in_range & (wsum > 0.0)
    out = np.where(good, acc / np.where(wsum > 0.0, wsum, 1.0), 0.0)
    return out, good


def consistency_mask(depth_t: DepthMap, depth_s: DepthMap, pose_ts: Pose,
                     K: Intrinsics, tau: float = 0.03) -> Mask:
    """Keep pixels whose target and source depths agree as 3D points.

    Each target pixel is backprojected, its correspondence sampled from the
    source depth map, the source point brought into the target camera frame,
    and the two 3D points compared with an L1 distance against ``tau``.
    Out-of-view or unsampleable pixels are dropped.
    """
    if tau <= 0:
        raise ParameterError("tau must be positive", tau=tau)
    dists, available = consistency_distance(depth_t, depth_s, pose_ts, K)
    return Mask(available & (dists < tau))


def consistency_distance(depth_t: DepthMap, depth_s: DepthMap, pose_ts: Pose,
                         K: Intrinsics) -> tuple[np.ndarray, np.ndarray]:
    """L1 distance between paired 3D points, plus availability."""
    coords = reproject(depth_t, pose_ts, K)
    d_samp, samp_ok = _sample_depth_renormalized(depth_s, coords.u, coords.v)
    available = coords.valid & samp_ok & depth_t.valid

    h, w = depth_t.height, depth_t.width
    rays_t = K.rays(h, w)
    pts_t = rays_t * depth_t.depth[:, :, None]

    rays_s = np.empty((h, w, 3))
    rays_s[:, :, 0] = (coords.u - K.cx) / K.fx
    rays_s[:, :, 1] = (coords.v - K.cy) / K.fy
    rays_s[:, :, 2] = 1.0
    pts_s = rays_s * d_samp[:, :, None]
    # bring the source-frame point into the target camera frame
    pts_s_in_t = pose_ts.inverse().apply(pts_s)

    dists = np.abs(pts_s_in_t - pts_t).sum(axis=2)
    dists = np.where(available, dists, np.inf)
    return dists, available


def consistency_mask_multi(depth_t: DepthMap,
                           sources: list[tuple[DepthMap, Pose]],
                           K: Intrinsics, tau: float = 0.03) -> Mask:
    """Consistency mask using the minimum 3D distance over source frames."""
    if not sources:
        raise ParameterError("need at least one source frame")
    if tau <= 0:
        raise ParameterError("tau must be positive", tau=tau)
    best = np.full((depth_t.height, depth_t.width), np.inf)
    any_avail = np.zeros(best.shape, dtype=bool)
    for depth_s, pose_ts in sources:
        dists, avail = consistency_distance(depth_t, depth_s, pose_ts, K)
        best = np.minimum(best, dists)
        any_avail |= avail
    return Mask(any_avail & (best < tau))
