"""Direct depth fitting: gradient descent on a coarse depth grid driven by
the same photometric + smoothness objective a depth network would train on.

A desk-scale demonstration that the self-supervised signal alone recovers
geometry: poses are given, a G x G grid of log-depths is bilinearly
upsampled to image resolution, warped against the source frames, and
descended with backtracking line search.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OptimizationError, ParameterError
from .imaging import DepthMap, Image
from .geometry import Intrinsics, Pose
from .losses import LossConfig, photometric_error, photometric_error_grad

_MAX_GRID = 32
_ARMIJO_C = 1e-4
_MAX_BACKTRACKS = 40
_GRAD_EPS = 1e-12


@dataclass
class FitResult:
    depth: DepthMap
    grid: np.ndarray
    trace: list[float]
    flags: list[str] = field(default_factory=list)
    iterations: int = 0


def _lerp_indices(n_out: int, n_in: int):
    """Bilinear index/weight vectors mapping output axis onto grid axis."""
    if n_in == 1:
        pos = np.zeros(n_out)
    else:
        pos = np.linspace(0.0, n_in - 1.0, n_out)
    i0 = np.floor(pos).astype(np.intp)
    i0 = np.minimum(i0, n_in - 2) if n_in > 1 else i0
    i1 = np.minimum(i0 + 1, n_in - 1)
    w = pos - i0
    return i0, i1, w


class _GridUpsampler:
    """Bilinear grid -> image upsampling with its exact adjoint."""

    def __init__(self, grid_n: int, height: int, width: int):
        self.y0, self.y1, self.wy = _lerp_indices(height, grid_n)
        self.x0, self.x1, self.wx = _lerp_indices(width, grid_n)
        self.grid_n = grid_n

    def up(self, theta: np.ndarray) -> np.ndarray:
        wy = self.wy[:, None]
        wx = self.wx[None, :]
        top = theta[self.y0][:, self.x0] * (1 - wx) + theta[self.y0][:, self.x1] * wx
        bot = theta[self.y1][:, self.x0] * (1 - wx) + theta[self.y1][:, self.x1] * wx
        return top * (1 - wy) + bot * wy

    def adjoint(self, g: np.ndarray) -> np.ndarray:
        out = np.zeros((self.grid_n, self.grid_n))
        wy = self.wy[:, None]
        wx = self.wx[None, :]
        yy0 = self.y0[:, None]
        yy1 = self.y1[:, None]
        xx0 = self.x0[None, :]
        xx1 = self.x1[None, :]
        np.add.at(out, (yy0, xx0), g * (1 - wy) * (1 - wx))
        np.add.at(out, (yy0, xx1), g * (1 - wy) * wx)
        np.add.at(out, (yy1, xx0), g * wy * (1 - wx))
        np.add.at(out, (yy1, xx1), g * wy * wx)
        return out


def _bilinear_with_slopes(data: np.ndarray, u: np.ndarray, v: np.ndarray):
    """Clamped bilinear sample plus its piecewise slopes along u and v."""
    h, w = data.shape[:2]
    in_range = (u >= 0.0) & (u <= w - 1.0) & (v >= 0.0) & (v <= h - 1.0)
    uc = np.clip(u, 0.0, w - 1.0)
    vc = np.clip(v, 0.0, h - 1.0)
    x0 = np.floor(uc).astype(np.intp)
    y0 = np.floor(vc).astype(np.intp)
    x1 = np.minimum(x0 + 1, w - 1)
    y1 = np.minimum(y0 + 1, h - 1)
    wx = (uc - x0)[:, :, None]
    wy = (vc - y0)[:, :, None]
    v00 = data[y0, x0]
    v01 = data[y0, x1]
    v10 = data[y1, x0]
    v11 = data[y1, x1]
    val = (v00 * (1 - wx) + v01 * wx) * (1 - wy) + (v10 * (1 - wx) + v11 * wx) * wy
    du = (v01 - v00) * (1 - wy) + (v11 - v10) * wy
    dv = (v10 - v00) * (1 - wx) + (v11 - v01) * wx
    return val, du, dv, in_range


def _smoothness_value_grad(depth_vals: np.ndarray, img: Image,
                           wx: np.ndarray, wy: np.ndarray):
    """Edge-aware smoothness of mean-normalized depth and d/d(depth)."""
    n = depth_vals.size
    mu = depth_vals.mean()
    if mu == 0.0:
        return 0.0, np.zeros_like(depth_vals)
    d = depth_vals / mu
    dx = d[:, 1:] - d[:, :-1]
    dy = d[1:, :] - d[:-1, :]
    value = (np.abs(dx) * wx[:, :-1]).sum() + (np.abs(dy) * wy[:-1, :]).sum()
    value /= n

    g_dstar = np.zeros_like(d)
    sx = np.sign(dx) * wx[:, :-1] / n
    g_dstar[:, 1:] += sx
    g_dstar[:, :-1] -= sx
    sy = np.sign(dy) * wy[:-1, :] / n
    g_dstar[1:, :] += sy
    g_dstar[:-1, :] -= sy
    g_depth = g_dstar / mu - (g_dstar * depth_vals).sum() / (mu * mu * n)
    return float(value), g_depth


class _Objective:
    """Photometric + smoothness objective over the log-depth grid."""

    def __init__(self, target: Image, sources: list[Image], poses: list[Pose],
                 K: Intrinsics, grid_n: int, cfg: LossConfig,
                 smoothness_weight: float):
        self.target = target
        self.sources = sources
        self.poses = poses
        self.K = K
        self.cfg = cfg
        self.sw = smoothness_weight
        h, w = target.height, target.width
        self.up = _GridUpsampler(grid_n, h, w)
        self.rays = K.rays(h, w)
        # per-source rotated rays and translations for the reprojection chain
        self.rot_rays = [self.rays @ p.rotation.T for p in poses]
        from .imaging import image_gradients
        gx, gy = image_gradients(target)
        self.sm_wx = np.exp(-np.abs(gx.data).mean(axis=2))
        self.sm_wy = np.exp(-np.abs(gy.data).mean(axis=2))

    def _warp_fields(self, depth_vals: np.ndarray):
        """Per-source warped images, validity, and reprojection derivatives."""
        fields = []
        for src, pose, a in zip(self.sources, self.poses, self.rot_rays):
            moved = a * depth_vals[:, :, None] + pose.translation
            z = moved[:, :, 2]
            front = z > 0
            safe_z = np.where(front, z, 1.0)
            u = self.K.fx * (moved[:, :, 0] / safe_z) + self.K.cx
            v = self.K.fy * (moved[:, :, 1] / safe_z) + self.K.cy
            u = np.where(front, u, -1.0)
            v = np.where(front, v, -1.0)
            warped, s_u, s_v, in_range = _bilinear_with_slopes(src.data, u, v)
            ok = front & in_range
            # du/dD and dv/dD from the quotient rule on the projected point
            dudd = self.K.fx * (a[:, :, 0] * safe_z - moved[:, :, 0] * a[:, :, 2]) \
                / (safe_z * safe_z)
            dvdd = self.K.fy * (a[:, :, 1] * safe_z - moved[:, :, 1] * a[:, :, 2]) \
                / (safe_z * safe_z)
            fields.append((warped, ok, s_u, s_v,
                           np.where(ok, dudd, 0.0), np.where(ok, dvdd, 0.0)))
        return fields

    def value(self, theta: np.ndarray) -> float:
        depth_vals = np.exp(self.up.up(theta))
        fields = self._warp_fields(depth_vals)
        pe_stack = []
        for warped, ok, *_ in fields:
            pe = photometric_error(self.target, Image(warped), self.cfg).value
            pe_stack.append(np.where(ok, pe, np.inf))
        best = np.min(pe_stack, axis=0)
        valid = np.isfinite(best)
        photo = float(best[valid].mean()) if valid.any() else 0.0
        smooth, _ = _smoothness_value_grad(depth_vals, self.target,
                                           self.sm_wx, self.sm_wy)
        return photo + self.sw * smooth

    def value_grad(self, theta: np.ndarray):
        depth_vals = np.exp(self.up.up(theta))
        fields = self._warp_fields(depth_vals)
        pe_stack = []
        for warped, ok, *_ in fields:
            pe = photometric_error(self.target, Image(warped), self.cfg).value
            pe_stack.append(np.where(ok, pe, np.inf))
        pe_arr = np.stack(pe_stack)
        argmin = np.argmin(pe_arr, axis=0)
        valid = np.isfinite(pe_arr.min(axis=0))
        n_valid = int(valid.sum())

        photo_value = 0.0
        photo_grad = np.zeros_like(depth_vals)
        g_depth = np.zeros_like(depth_vals)
        if n_valid > 0:
            base_w = valid.astype(np.float64) / n_valid
            for s, (warped, ok, s_u, s_v, dudd, dvdd) in enumerate(fields):
                w_s = np.where((argmin == s) & valid, base_w, 0.0)
                if not w_s.any():
                    continue
                # pe is symmetric, so grad w.r.t. the warp = grad w.r.t. the
                # first argument with the pair swapped
                val_s, g_warp = photometric_error_grad(
                    Image(warped), self.target, self.cfg, weights=w_s)
                photo_value += val_s
                g_u = (g_warp * s_u).sum(axis=2)
                g_v = (g_warp * s_v).sum(axis=2)
                g_depth += g_u * dudd + g_v * dvdd
            photo_grad = g_depth

        smooth_value, g_smooth = _smoothness_value_grad(
            depth_vals, self.target, self.sm_wx, self.sm_wy)
        total = photo_value + self.sw * smooth_value
        g_total = (photo_grad + self.sw * g_smooth) * depth_vals  # chain exp
        return total, self.up.adjoint(g_total), photo_grad


def fit_depth_demo(frames: list[Image], poses: list[Pose], K: Intrinsics,
                   grid: int = 16, iters: int = 200,
                   cfg: LossConfig = LossConfig(),
                   smoothness_weight: float = 1e-3,
                   init_depth: float | DepthMap = 1.0) -> FitResult:
    """Fit a coarse depth grid to 2-3 frames with known poses.

    ``frames[0]`` is the target, the rest are sources; ``poses[i]`` maps
    target-frame points into source i's frame. Returns the fitted map, the
    loss trace (non-increasing under the backtracking line search), and any
    flags ("degenerate_photometric_signal", "line_search_exhausted").
    """
    if not (2 <= len(frames) <= 3):
        raise ParameterError("demo expects 2 or 3 frames", frames=len(frames))
    if len(poses) != len(frames) - 1:
        raise ParameterError("need one pose per source frame",
                             poses=len(poses), sources=len(frames) - 1)
    if not (1 <= grid <= _MAX_GRID):
        raise ParameterError(f"grid must be in [1, {_MAX_GRID}]", grid=grid)
    if iters < 1:
        raise ParameterError("iters must be >= 1", iters=iters)
    target = frames[0]
    for f in frames[1:]:
        if not f.same_shape(target):
            raise ParameterError("all frames must share one resolution")

    if grid > min(target.height, target.width):
        raise ParameterError("grid cannot exceed the image resolution",
                             grid=grid, height=target.height,
                             width=target.width)
    if isinstance(init_depth, DepthMap):
        if not init_depth.valid.all() or np.any(init_depth.depth <= 0):
            raise ParameterError("init depth must be fully valid and positive")
        if (init_depth.height, init_depth.width) != (target.height, target.width):
            raise ParameterError("init depth resolution mismatch")
        # seed each grid node with the log-depth at its pixel position
        ys = np.rint(np.linspace(0, target.height - 1, grid)).astype(np.intp)
        xs = np.rint(np.linspace(0, target.width - 1, grid)).astype(np.intp)
        theta = np.log(init_depth.depth[np.ix_(ys, xs)])
    else:
        if not init_depth > 0:
            raise ParameterError("init depth must be positive", init=init_depth)
        theta = np.full((grid, grid), np.log(float(init_depth)))

    obj = _Objective(target, frames[1:], poses, K, grid, cfg, smoothness_weight)
    # trace values always come from obj.value so the Armijo comparisons and
    # the recorded trace share one float path
    loss = obj.value(theta)
    _, grad, photo_grad = obj.value_grad(theta)
    trace = [loss]
    flags: list[str] = []

    if np.max(np.abs(photo_grad)) < _GRAD_EPS:
        flags.append("degenerate_photometric_signal")
        depth_vals = np.exp(obj.up.up(theta))
        return FitResult(DepthMap(depth_vals), np.exp(theta), trace, flags, 0)

    step = 1.0
    it = 0
    for it in range(1, iters + 1):
        gnorm2 = float((grad * grad).sum())
        if gnorm2 < _GRAD_EPS ** 2:
            break
        alpha = step
        accepted = None
        for _ in range(_MAX_BACKTRACKS):
            cand = theta - alpha * grad
            cand_loss = obj.value(cand)
            if cand_loss <= loss - _ARMIJO_C * alpha * gnorm2:
                accepted = (cand, cand_loss)
                break
            alpha *= 0.5
        if accepted is None:
            flags.append("line_search_exhausted")
            break
        theta, new_loss = accepted
        if new_loss > loss:
            raise OptimizationError("loss increased after line search",
                                    trace=trace + [new_loss])
        loss = new_loss
        trace.append(loss)
        step = min(alpha * 2.0, 100.0)
        _, grad, _ = obj.value_grad(theta)

    depth_vals = np.exp(obj.up.up(theta))
    return FitResult(DepthMap(depth_vals), np.exp(theta), trace, flags, it)
