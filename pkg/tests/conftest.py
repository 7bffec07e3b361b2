"""Shared synthetic-scene builders.

The plane scene is the workhorse oracle: a fronto-parallel textured plane at
depth ``d`` viewed by a camera translating along x. Both views are rendered
analytically from one world-anchored texture, so the true correspondence,
depth, and pose are all known in closed form:

    target pixel (u, v) sees world point ((u-cx) d/fx, (v-cy) d/fy, d)
    source camera sits at -tx along x, so the same point projects to
    u_s = u + fx tx / d, and the source image evaluates the texture at
    x_world - tx.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import pytest

import uwdepth as uw


def plane_texture(xw: np.ndarray, yw: np.ndarray) -> np.ndarray:
    """Smooth RGB texture with gradient energy everywhere, values in (0, 1)."""
    r = (0.5 + 0.15 * np.sin(6.0 * xw) + 0.1 * np.cos(5.0 * yw)
         + 0.09 * np.sin(3.0 * (xw + yw)) + 0.08 * np.sin(9.0 * xw + 1.7))
    g = (0.5 + 0.13 * np.cos(5.5 * xw + 1.0) + 0.11 * np.sin(4.5 * yw + 0.5)
         + 0.07 * np.sin(2.5 * (xw - yw)) + 0.08 * np.sin(8.0 * xw + 0.4))
    b = (0.5 + 0.12 * np.sin(4.0 * xw + 2.0) + 0.12 * np.cos(6.5 * yw + 1.5)
         + 0.06 * np.cos(2.0 * (xw + 0.5 * yw)) + 0.08 * np.cos(7.0 * xw + 2.6))
    return np.stack([r, g, b], axis=-1)


@dataclass
class PlaneScene:
    target: uw.Image
    source: uw.Image
    depth: uw.DepthMap
    pose: uw.Pose          # target -> source
    K: uw.Intrinsics
    d: float
    tx: float

    @property
    def shift(self) -> float:
        """True correspondence shift in pixels: fx * tx / d."""
        return self.K.fx * self.tx / self.d

    def interior(self, margin: int = 3) -> np.ndarray:
        m = np.zeros((self.target.height, self.target.width), dtype=bool)
        m[margin:-margin, margin:-margin] = True
        return m


def make_plane_scene(h: int = 48, w: int = 64, d: float = 2.0, tx: float = 0.15,
                     fx: float = 60.0, fy: float = 60.0) -> PlaneScene:
    cx, cy = (w - 1) / 2.0, (h - 1) / 2.0
    K = uw.Intrinsics(fx=fx, fy=fy, cx=cx, cy=cy, width=w, height=h)
    v, u = np.mgrid[0:h, 0:w].astype(np.float64)
    xw = (u - cx) * d / fx
    yw = (v - cy) * d / fy
    target = uw.Image(plane_texture(xw, yw))
    source = uw.Image(plane_texture(xw - tx, yw))
    pose = uw.Pose(np.eye(3), np.array([tx, 0.0, 0.0]))
    depth = uw.DepthMap(np.full((h, w), d))
    return PlaneScene(target, source, depth, pose, K, d, tx)


@pytest.fixture
def plane_scene() -> PlaneScene:
    return make_plane_scene()


def make_water_frame(rng: np.random.Generator, model: uw.WaterModel,
                     h: int = 64, w: int = 64, j_max: float = 0.65,
                     black_pixels: int = 8):
    """Degraded frame from a clean textured image with some true-black pixels.

    j_max = 0.65 keeps every degraded intensity below 1 for the default
    models, so no pixel clips and the estimators see unbiased data.
    """
    clean = rng.uniform(0.05, j_max, (h, w, 3))
    flat = clean.reshape(-1, 3)
    idx = rng.choice(h * w, size=black_pixels, replace=False)
    flat[idx] = 0.0
    clean_img = uw.Image(flat.reshape(h, w, 3))
    depth = uw.DepthMap(rng.uniform(0.5, 8.0, (h, w)))
    return uw.degrade(clean_img, depth, model), depth, clean_img


@pytest.fixture
def water_model() -> uw.WaterModel:
    return uw.WaterModel([0.25, 0.18, 0.3], [0.4, 0.25, 0.15])
