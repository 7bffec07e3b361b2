"""Loss functions: SSIM, photometric error, min-reprojection, smoothness,
distillation, and Pearson decorrelation.

Analytic gradients are provided for the two losses the depth-fitting demo
descends on (photometric error and Pearson); both are validated against
central finite differences in the test suite. All losses reduce by mean
over valid pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np
from scipy import signal

from .errors import DegenerateInputError, ParameterError
from .imaging import DepthMap, Image, Mask, image_gradients


@dataclass(frozen=True)
class LossConfig:
    """Photometric-loss knobs: SSIM/L1 blend and SSIM window statistics."""

    alpha: float = 0.85
    ssim_window: int = 3
    ssim_c1: float = 0.01 ** 2
    ssim_c2: float = 0.03 ** 2

    def __post_init__(self):
        if not (0.0 <= self.alpha <= 1.0):
            raise ParameterError("alpha must be in [0, 1]", alpha=self.alpha)
        if self.ssim_window < 3 or self.ssim_window % 2 == 0:
            raise ParameterError("SSIM window must be odd and >= 3",
                                 window=self.ssim_window)
        if self.ssim_c1 <= 0 or self.ssim_c2 <= 0:
            raise ParameterError("SSIM stabilizers must be positive")


@dataclass(frozen=True)
class DistillConfig:
    """Selective-distillation knobs: 3D-consistency threshold and weight decay."""

    tau: float = 0.03
    lambda0: float = 1.0
    decay_steps: int = 10_000

    def __post_init__(self):
        if self.tau <= 0:
            raise ParameterError("tau must be positive", tau=self.tau)
        if self.lambda0 < 0:
            raise ParameterError("lambda0 must be >= 0", lambda0=self.lambda0)
        if self.decay_steps < 1:
            raise ParameterError("decay_steps must be >= 1")

    def lambda_at(self, step: int) -> float:
        """Linear decay from lambda0 to 0 across the step horizon."""
        frac = 1.0 - step / float(self.decay_steps)
        return self.lambda0 * max(0.0, frac)


@dataclass(frozen=True)
class LossMap:
    """(H, W) per-pixel loss field with validity."""

    value: np.ndarray
    valid: np.ndarray = field(default=None)  # type: ignore[assignment]

    def __post_init__(self):
        value = np.asarray(self.value, dtype=np.float64)
        if value.ndim != 2 or value.size == 0:
            raise ParameterError("loss map must be a non-empty (H, W) array")
        valid = self.valid
        if valid is None:
            valid = np.ones(value.shape, dtype=bool)
        else:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != value.shape:
                raise ParameterError("loss validity shape mismatch")
        if not np.all(np.isfinite(value[valid])):
            raise ParameterError("loss map has non-finite values at valid pixels")
        object.__setattr__(self, "value", value)
        object.__setattr__(self, "valid", valid)

    def valid_values(self) -> np.ndarray:
        return self.value[self.valid]


class DistillationLoss(NamedTuple):
    value: float
    supervised: bool


# --- windowed statistics -------------------------------------------------
#
# The SSIM window mean is "reflect-pad then valid correlation". The adjoint
# used by the analytic gradient is the exact transpose of that operator:
# full correlation followed by folding the padded margins back onto their
# mirror sources.

def _window_mean(x: np.ndarray, r: int) -> np.ndarray:
    size = 2 * r + 1
    kern = np.full((size, size), 1.0 / (size * size))
    padded = np.pad(x, r, mode="reflect")
    return signal.correlate2d(padded, kern, mode="valid")


def _fold_axis(a: np.ndarray, r: int, axis: int) -> np.ndarray:
    a = np.moveaxis(a, axis, 0)
    n = a.shape[0] - 2 * r
    core = a[r:r + n].copy()
    for i in range(r):
        core[r - i] += a[i]
        core[n - 2 - i] += a[r + n + i]
    return np.moveaxis(core, 0, axis)


def _window_mean_adjoint(g: np.ndarray, r: int) -> np.ndarray:
    size = 2 * r + 1
    kern = np.full((size, size), 1.0 / (size * size))
    full = signal.correlate2d(g, kern, mode="full")
    return _fold_axis(_fold_axis(full, r, 0), r, 1)


def _check_pair(a: Image, b: Image):
    if not a.same_shape(b):
        raise ParameterError("image pair shape mismatch",
                             a=list(a.data.shape), b=list(b.data.shape))


def _ssim_fields(ach: np.ndarray, bch: np.ndarray, cfg: LossConfig):
    """Per-channel SSIM plus the intermediates its gradient needs."""
    r = cfg.ssim_window // 2
    mu_a = _window_mean(ach, r)
    mu_b = _window_mean(bch, r)
    e_aa = _window_mean(ach * ach, r)
    e_bb = _window_mean(bch * bch, r)
    e_ab = _window_mean(ach * bch, r)
    var_a = e_aa - mu_a ** 2
    var_b = e_bb - mu_b ** 2
    cov = e_ab - mu_a * mu_b
    n1 = 2.0 * mu_a * mu_b + cfg.ssim_c1
    d1 = mu_a ** 2 + mu_b ** 2 + cfg.ssim_c1
    n2 = 2.0 * cov + cfg.ssim_c2
    d2 = var_a + var_b + cfg.ssim_c2
    ssim = (n1 * n2) / (d1 * d2)
    return ssim, (mu_a, mu_b, n1, d1, n2, d2)


def ssim_map(a: Image, b: Image, cfg: LossConfig = LossConfig()) -> LossMap:
    """Per-pixel SSIM in [-1, 1], channel-averaged, reflect-padded window."""
    _check_pair(a, b)
    acc = np.zeros((a.height, a.width))
    for c in range(a.channels):
        s, _ = _ssim_fields(a.data[:, :, c], b.data[:, :, c], cfg)
        acc += s
    return LossMap(acc / a.channels)


def photometric_error(a: Image, b: Image, cfg: LossConfig = LossConfig()) -> LossMap:
    """Blend of SSIM dissimilarity and L1: (alpha/2)(1 - SSIM) + (1 - alpha)|a - b|."""
    _check_pair(a, b)
    ssim = ssim_map(a, b, cfg).value
    l1 = np.abs(a.data - b.data).mean(axis=2)
    pe = 0.5 * cfg.alpha * (1.0 - ssim) + (1.0 - cfg.alpha) * l1
    return LossMap(pe)


def photometric_error_grad(a: Image, b: Image, cfg: LossConfig = LossConfig(),
                           weights: np.ndarray | None = None
                           ) -> tuple[float, np.ndarray]:
    """Weighted scalar photometric error and its gradient w.r.t. ``a``.

    ``weights`` is an (H, W) field (default: uniform 1/n). Returns
    (sum(weights * pe), d/da of that sum) with the gradient shaped like
    ``a.data``. The error is symmetric in (a, b), so the gradient w.r.t.
    ``b`` is obtained by swapping the arguments.
    """
    _check_pair(a, b)
    h, w, ch = a.data.shape
    if weights is None:
        weights = np.full((h, w), 1.0 / (h * w))
    else:
        weights = np.asarray(weights, dtype=np.float64)
        if weights.shape != (h, w):
            raise ParameterError("weights shape mismatch")

    r = cfg.ssim_window // 2
    grad = np.zeros_like(a.data)
    value = 0.0
    # scalar = sum_p w_p [ (alpha/2)(1 - mean_c S) + (1-alpha) mean_c |a-b| ]
    ssim_w = -0.5 * cfg.alpha / ch
    for c in range(ch):
        ach = a.data[:, :, c]
        bch = b.data[:, :, c]
        s, (mu_a, mu_b, n1, d1, n2, d2) = _ssim_fields(ach, bch, cfg)
        value += float(np.sum(weights * (0.5 * cfg.alpha * (1.0 - s)
                                         + (1.0 - cfg.alpha) * np.abs(ach - bch))) / ch)
        g_s = weights * ssim_w
        common = g_s / (d1 * d2)
        g_n1 = common * n2
        g_n2 = common * n1
        g_d1 = -g_s * s / d1
        g_d2 = -g_s * s / d2
        g_mu = 2.0 * mu_b * g_n1 + 2.0 * mu_a * g_d1 \
            - 2.0 * mu_b * g_n2 - 2.0 * mu_a * g_d2
        g_eaa = g_d2
        g_eab = 2.0 * g_n2
        grad_c = _window_mean_adjoint(g_mu, r)
        grad_c += 2.0 * ach * _window_mean_adjoint(g_eaa, r)
        grad_c += bch * _window_mean_adjoint(g_eab, r)
        grad_c += weights * (1.0 - cfg.alpha) / ch * np.sign(ach - bch)
        grad[:, :, c] = grad_c
    return value, grad


def min_reprojection_loss(target: Image, warps: list[tuple[Image, Mask]],
                          cfg: LossConfig = LossConfig()) -> LossMap:
    """Per-pixel minimum photometric error over valid warps.

    Pixels invalid in every warp come back invalid (value 0).
    """
    if not warps:
        raise ParameterError("min-reprojection needs at least one warp")
    best = np.full((target.height, target.width), np.inf)
    any_valid = np.zeros((target.height, target.width), dtype=bool)
    for warp, mask in warps:
        pe = photometric_error(target, warp, cfg).value
        candidate = np.where(mask.keep, pe, np.inf)
        best = np.minimum(best, candidate)
        any_valid |= mask.keep
    return LossMap(np.where(any_valid, best, 0.0), any_valid)


def smoothness_loss(depth: DepthMap, img: Image) -> float:
    """Edge-aware smoothness of the mean-normalized depth.

    Mean over valid pixels of |dx d*| e^-|dx I| + |dy d*| e^-|dy I| with
    d* = depth / mean(depth); image gradients are channel-averaged and each
    difference term requires both participating pixels to be valid.
    """
    if (depth.height, depth.width) != (img.height, img.width):
        raise ParameterError("depth/image shape mismatch")
    if depth.n_valid == 0:
        raise ParameterError("smoothness of an all-invalid depth map")
    mean_depth = float(depth.valid_values().mean())
    if mean_depth == 0.0:
        return 0.0
    d = depth.depth / mean_depth

    gx_i, gy_i = image_gradients(img)
    wx = np.exp(-np.abs(gx_i.data).mean(axis=2))
    wy = np.exp(-np.abs(gy_i.data).mean(axis=2))

    dx = np.zeros_like(d)
    dy = np.zeros_like(d)
    dx[:, :-1] = d[:, 1:] - d[:, :-1]
    dy[:-1, :] = d[1:, :] - d[:-1, :]
    vx = np.zeros_like(depth.valid)
    vy = np.zeros_like(depth.valid)
    vx[:, :-1] = depth.valid[:, :-1] & depth.valid[:, 1:]
    vy[:-1, :] = depth.valid[:-1, :] & depth.valid[1:, :]

    terms = np.where(vx, np.abs(dx) * wx, 0.0) + np.where(vy, np.abs(dy) * wy, 0.0)
    return float(terms[depth.valid].mean())


def distillation_loss(d_s: DepthMap, d_t: DepthMap, m_c: Mask,
                      lam: float) -> DistillationLoss:
    """Masked log-L1 distillation: mean of lam * log(|d_t - d_s| + 1).

    An empty supervision mask yields (0, supervised=False) instead of an
    error so callers can skip the term.
    """
    if d_s.depth.shape != d_t.depth.shape or m_c.keep.shape != d_s.depth.shape:
        raise ParameterError("distillation input shape mismatch")
    if lam < 0:
        raise ParameterError("lambda must be >= 0", lam=lam)
    sel = m_c.keep & d_s.valid & d_t.valid
    if not sel.any():
        return DistillationLoss(0.0, False)
    diff = np.abs(d_t.depth[sel] - d_s.depth[sel])
    return DistillationLoss(float(lam * np.log1p(diff).mean()), True)


def _joint_pearson_inputs(d_s: DepthMap, d_t: DepthMap):
    if d_s.depth.shape != d_t.depth.shape:
        raise ParameterError("depth map shape mismatch")
    joint = d_s.valid & d_t.valid
    if joint.sum() < 2:
        raise ParameterError("Pearson loss needs at least 2 jointly-valid pixels")
    a = d_s.depth[joint]
    b = d_t.depth[joint]
    ac = a - a.mean()
    bc = b - b.mean()
    saa = float(ac @ ac)
    sbb = float(bc @ bc)
    if saa == 0.0 or sbb == 0.0:
        raise DegenerateInputError("Pearson loss undefined for constant depth input")
    return joint, ac, bc, saa, sbb


def pearson_loss(d_s: DepthMap, d_t: DepthMap) -> float:
    """Scale-free decorrelation loss: 1 - Pearson correlation, in [0, 2]."""
    _, ac, bc, saa, sbb = _joint_pearson_inputs(d_s, d_t)
    r = float(ac @ bc) / math.sqrt(saa * sbb)
    return 1.0 - r


def pearson_loss_grad(d_s: DepthMap, d_t: DepthMap) -> tuple[float, np.ndarray]:
    """Pearson loss and its gradient w.r.t. ``d_s`` (zeros at non-joint pixels)."""
    joint, ac, bc, saa, sbb = _joint_pearson_inputs(d_s, d_t)
    sab = float(ac @ bc)
    denom = math.sqrt(saa * sbb)
    # d r / d a_i; the centering term vanishes because sum(bc) = 0
    dr = bc / denom - (sab / saa) * ac / denom
    grad = np.zeros_like(d_s.depth)
    grad[joint] = -dr
    return 1.0 - sab / denom, grad
