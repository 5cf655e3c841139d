"""Pinhole rendering of the synthetic road scene.

The background (sky and ground texture) is fixed in image coordinates, so
only pedestrians move between frames. Pedestrians are fronto-parallel
rectangles carrying a multi-scale checker texture; edges and texture are
area-sampled so sub-pixel motion shows up in the intensities.
"""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass

import numpy as np

from ..errors import BehindCamera
from ..vision.image import GrayFrame
from .scenario import CameraConfig, Pedestrian, ScenarioConfig, WorldState

SKY_LEVEL = 170.0
SKY_NOISE = 4.0
GROUND_LEVEL = 110.0
GROUND_NOISE = 10.0
PED_BASE = 160.0
# (cell size in meters, amplitude)
PED_OCTAVES = ((0.05, 25.0), (0.10, 25.0), (0.20, 25.0), (0.40, 20.0))


@dataclass(frozen=True)
class PinholeCamera:
    width: int
    height: int
    f: float
    cx: float
    cy: float
    mount_height_m: float

    @classmethod
    def from_config(cls, cam: CameraConfig) -> "PinholeCamera":
        f = (cam.width_px / 2.0) / math.tan(math.radians(cam.hfov_deg) / 2.0)
        return cls(cam.width_px, cam.height_px, f, cam.width_px / 2.0, cam.height_px / 2.0,
                   cam.height_m)

    def ground_row(self, distance_m: float) -> float:
        """Image row of the ground line at ``distance_m`` ahead."""
        return self.cy + self.f * self.mount_height_m / distance_m

    def distance_of_row(self, y: float) -> float:
        return self.f * self.mount_height_m / (y - self.cy)

    def column(self, lat_m: float, distance_m: float) -> float:
        return self.cx + self.f * lat_m / distance_m

    def ped_box(self, ped: Pedestrian, distance_m: float) -> tuple[float, float, float, float]:
        """(x_left, x_right, y_top, y_bottom) of a pedestrian, continuous pixels."""
        if not distance_m > 0:
            raise BehindCamera(f"pedestrian at {distance_m} m is not in front of the camera")
        half = ped.width_m / 2.0
        xl = self.column(ped.lat_m - half, distance_m)
        xr = self.column(ped.lat_m + half, distance_m)
        yb = self.ground_row(distance_m)
        yt = self.cy + self.f * (self.mount_height_m - ped.height_m) / distance_m
        return xl, xr, yt, yb


def _mix64(x: np.ndarray) -> np.ndarray:
    """splitmix64 finalizer on uint64 arrays."""
    x = (x ^ (x >> np.uint64(30))) * np.uint64(0xBF58476D1CE4E5B9)
    x = (x ^ (x >> np.uint64(27))) * np.uint64(0x94D049BB133111EB)
    return x ^ (x >> np.uint64(31))


def hash_noise(shape: tuple[int, int], seed: int) -> np.ndarray:
    """Deterministic per-pixel noise in [-1, 1)."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(np.uint64)
    with np.errstate(over="ignore"):
        key = (xs * np.uint64(0x9E3779B97F4A7C15)) ^ (ys * np.uint64(0xC2B2AE3D27D4EB4F)) \
            ^ _mix64(np.full(shape, seed & 0xFFFFFFFFFFFFFFFF, dtype=np.uint64))
        v = _mix64(key)
    return (v >> np.uint64(11)).astype(np.float64) / float(1 << 53) * 2.0 - 1.0


@functools.lru_cache(maxsize=8)
def _background(width: int, height: int, horizon: float, seed: int) -> np.ndarray:
    noise = hash_noise((height, width), seed)
    rows = np.arange(height, dtype=np.float64)[:, None]
    sky = rows < horizon
    bg = np.where(sky, SKY_LEVEL + SKY_NOISE * noise, GROUND_LEVEL + GROUND_NOISE * noise)
    bg.flags.writeable = False
    return bg


def _tri(z: np.ndarray) -> np.ndarray:
    """Antiderivative of the unit square wave (+1 on [0,1), -1 on [1,2))."""
    return 1.0 - np.abs(np.mod(z, 2.0) - 1.0)


def _paint(img: np.ndarray, cam: PinholeCamera, ped: Pedestrian, d: float) -> None:
    xl, xr, yt, yb = cam.ped_box(ped, d)
    h, w = img.shape
    c0, c1 = max(0, math.floor(xl + 0.5)), min(w - 1, math.ceil(xr - 0.5))
    r0, r1 = max(0, math.floor(yt + 0.5)), min(h - 1, math.ceil(yb - 0.5))
    if c0 > c1 or r0 > r1:
        return
    cols = np.arange(c0, c1 + 1, dtype=np.float64)
    rows = np.arange(r0, r1 + 1, dtype=np.float64)
    ax0, ax1 = np.maximum(cols - 0.5, xl), np.minimum(cols + 0.5, xr)
    ay0, ay1 = np.maximum(rows - 0.5, yt), np.minimum(rows + 0.5, yb)
    cov_x = np.clip(ax1 - ax0, 0.0, 1.0)
    cov_y = np.clip(ay1 - ay0, 0.0, 1.0)
    # body coordinates in meters: u across from the left edge, v up from the feet
    m_per_px = d / cam.f
    tex = PED_BASE * np.outer(cov_y, cov_x)
    for cell, amp in PED_OCTAVES:
        px_per_cell = cell / m_per_px
        zx0, zx1 = (ax0 - xl) / px_per_cell, (ax1 - xl) / px_per_cell
        ix = np.where(cov_x > 0, (_tri(zx1) - _tri(zx0)) * px_per_cell, 0.0)
        zy0, zy1 = (yb - ay1) / px_per_cell, (yb - ay0) / px_per_cell
        iy = np.where(cov_y > 0, (_tri(zy1) - _tri(zy0)) * px_per_cell, 0.0)
        tex += amp * np.outer(iy, ix)
    cov = np.outer(cov_y, cov_x)
    region = img[r0:r1 + 1, c0:c1 + 1]
    region *= 1.0 - cov
    region += tex


def render_frame(world: WorldState, cfg: ScenarioConfig) -> GrayFrame:
    cam = PinholeCamera.from_config(cfg.camera)
    img = _background(cam.width, cam.height, cam.cy, cfg.seed).copy()
    peds = [(world.distance_to(p), p) for p in world.peds]
    for d, _ in peds:
        if not d > 0:
            raise BehindCamera(f"pedestrian at {d:.3f} m is not in front of the camera")
    for d, p in sorted(peds, key=lambda dp: -dp[0]):
        _paint(img, cam, p, d)
    scale = cfg.ambient_level / 255.0
    out = np.round(np.clip(img, 0.0, 255.0) * scale).astype(np.uint8)
    return GrayFrame(out, t_s=world.t_s)
