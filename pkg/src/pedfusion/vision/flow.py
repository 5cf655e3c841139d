"""Sparse pyramidal Lucas-Kanade optical flow, vectorized over points."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import ndimage

from ..errors import DimensionMismatch
from .corners import Corner
from .image import GrayFrame


class FlowStatus(enum.Enum):
    TRACKED = "tracked"
    LOST = "lost"


@dataclass(frozen=True)
class FlowVector:
    start: tuple[float, float]
    end: tuple[float, float]
    status: FlowStatus

    @property
    def dx(self) -> float:
        return self.end[0] - self.start[0]

    @property
    def dy(self) -> float:
        return self.end[1] - self.start[1]

    @property
    def magnitude(self) -> float:
        return float(np.hypot(self.dx, self.dy))


def build_pyramid(img: np.ndarray, levels: int) -> list[np.ndarray]:
    pyr = [np.asarray(img, dtype=np.float64)]
    for _ in range(levels):
        blurred = ndimage.gaussian_filter(pyr[-1], sigma=1.0, mode="nearest")
        pyr.append(blurred[::2, ::2])
    return pyr


def _gradients(img: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    gx = ndimage.correlate1d(img, [-0.5, 0.0, 0.5], axis=1, mode="nearest")
    gy = ndimage.correlate1d(img, [-0.5, 0.0, 0.5], axis=0, mode="nearest")
    return gx, gy


def _sample(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    coords = np.stack([ys.ravel(), xs.ravel()])
    return ndimage.map_coordinates(img, coords, order=1, mode="nearest").reshape(xs.shape)


def lk_flow(prev: GrayFrame, next: GrayFrame, corners: Sequence[Corner], window_px: int = 11,
            pyramid_levels: int = 2, max_iter: int = 20, eps_px: float = 0.01,
            min_eig: float = 1e-2) -> list[FlowVector]:
    """Track ``corners`` from ``prev`` into ``next``.

    ``pyramid_levels`` counts the coarse levels above full resolution. A point
    is Lost when its window's gradient matrix has a normalized minimum
    eigenvalue below ``min_eig`` at any level, or it leaves the frame.
    """
    if prev.shape != next.shape:
        raise DimensionMismatch(f"frame shapes differ: {prev.shape} vs {next.shape}")
    if window_px < 5 or window_px % 2 == 0:
        raise ValueError("window_px must be odd and >= 5")
    n = len(corners)
    if n == 0:
        return []

    pts = np.array([[c.x, c.y] for c in corners], dtype=np.float64)
    half = window_px // 2
    oy, ox = np.mgrid[-half:half + 1, -half:half + 1]
    ox = ox.ravel().astype(np.float64)
    oy = oy.ravel().astype(np.float64)
    npx = float(ox.size)

    pyr_prev = build_pyramid(prev.pixels, pyramid_levels)
    pyr_next = build_pyramid(next.pixels, pyramid_levels)

    guess = np.zeros((n, 2))
    lost = np.zeros(n, dtype=bool)
    for level in range(pyramid_levels, -1, -1):
        scale = 2.0 ** level
        P, J = pyr_prev[level], pyr_next[level]
        gx, gy = _gradients(P)
        p = pts / scale
        wx = p[:, 0:1] + ox
        wy = p[:, 1:2] + oy
        T = _sample(P, wx, wy)
        Ix = _sample(gx, wx, wy)
        Iy = _sample(gy, wx, wy)
        gxx = (Ix * Ix).sum(1)
        gyy = (Iy * Iy).sum(1)
        gxy = (Ix * Iy).sum(1)
        det = gxx * gyy - gxy * gxy
        half_tr = 0.5 * (gxx + gyy)
        lam_min = half_tr - np.sqrt((0.5 * (gxx - gyy)) ** 2 + gxy ** 2)
        bad = lam_min / npx < min_eig
        lost |= bad
        safe_det = np.where(bad, 1.0, det)

        d = np.zeros((n, 2))
        active = ~lost
        for _ in range(max_iter):
            if not active.any():
                break
            Jw = _sample(J, wx + (guess[:, 0:1] + d[:, 0:1]), wy + (guess[:, 1:2] + d[:, 1:2]))
            diff = T - Jw
            bx = (diff * Ix).sum(1)
            by = (diff * Iy).sum(1)
            step_x = (gyy * bx - gxy * by) / safe_det
            step_y = (gxx * by - gxy * bx) / safe_det
            step = np.stack([step_x, step_y], axis=1)
            step[~active] = 0.0
            d += step
            active &= np.hypot(step_x, step_y) >= eps_px
        total = guess + d
        guess = 2.0 * total if level > 0 else total

    ends = pts + guess
    h, w = prev.shape
    out = []
    for i in range(n):
        ex, ey = float(ends[i, 0]), float(ends[i, 1])
        ok = (not lost[i] and np.isfinite(ex) and np.isfinite(ey)
              and 0.0 <= ex <= w - 1 and 0.0 <= ey <= h - 1)
        if ok:
            out.append(FlowVector((float(pts[i, 0]), float(pts[i, 1])), (ex, ey), FlowStatus.TRACKED))
        else:
            out.append(FlowVector((float(pts[i, 0]), float(pts[i, 1])),
                                  (float(pts[i, 0]), float(pts[i, 1])), FlowStatus.LOST))
    return out
