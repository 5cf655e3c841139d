"""Shi-Tomasi minimum-eigenvalue corners."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from .image import GrayFrame


@dataclass(frozen=True)
class Corner:
    x: float
    y: float
    score: float


def structure_tensor(img: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Window sums of Ixx, Iyy, Ixy over 3x3 neighbourhoods of Sobel gradients.

    Gradients are Sobel responses divided by 8 so they approximate a unit-step
    derivative. Borders are mirrored (``reflect``).
    """
    a = np.asarray(img, dtype=np.float64)
    gx = ndimage.sobel(a, axis=1, mode="reflect") / 8.0
    gy = ndimage.sobel(a, axis=0, mode="reflect") / 8.0
    sxx = ndimage.uniform_filter(gx * gx, size=3, mode="reflect") * 9.0
    syy = ndimage.uniform_filter(gy * gy, size=3, mode="reflect") * 9.0
    sxy = ndimage.uniform_filter(gx * gy, size=3, mode="reflect") * 9.0
    return sxx, syy, sxy


def min_eigen_map(img: np.ndarray) -> np.ndarray:
    sxx, syy, sxy = structure_tensor(img)
    half_tr = 0.5 * (sxx + syy)
    disc = np.sqrt((0.5 * (sxx - syy)) ** 2 + sxy ** 2)
    lam_max = half_tr + disc
    det = sxx * syy - sxy * sxy
    # det / lam_max avoids the cancellation in half_tr - disc
    with np.errstate(invalid="ignore", divide="ignore"):
        lam_min = np.where(lam_max > 0, det / lam_max, 0.0)
    return np.maximum(lam_min, 0.0)


def _parabola_offset(lo: float, mid: float, hi: float) -> float:
    den = lo - 2.0 * mid + hi
    if den >= 0.0:
        return 0.0
    return float(np.clip(0.5 * (lo - hi) / den, -0.5, 0.5))


def _refine(score: np.ndarray, x: int, y: int) -> tuple[float, float]:
    h, w = score.shape
    fx, fy = float(x), float(y)
    if 0 < x < w - 1:
        fx += _parabola_offset(score[y, x - 1], score[y, x], score[y, x + 1])
    if 0 < y < h - 1:
        fy += _parabola_offset(score[y - 1, x], score[y, x], score[y + 1, x])
    return fx, fy


def shi_tomasi(frame: GrayFrame, max_corners: int, quality: float, min_dist_px: float,
               mask: np.ndarray | None = None, subpixel: bool = False) -> list[Corner]:
    """Strongest local maxima of the min-eigenvalue map, spaced by ``min_dist_px``.

    ``mask`` optionally restricts where corners may be reported. With
    ``subpixel`` the reported position is moved to the vertex of a parabola
    fitted through the score and its two neighbours along each axis; spacing
    and ordering still use the integer peak.
    """
    if max_corners < 1:
        raise ValueError("max_corners must be >= 1")
    if frame.width < 8 or frame.height < 8:
        raise ValueError("frame must be at least 8x8")
    score = min_eigen_map(frame.pixels)
    top = float(score.max())
    if top <= 0:
        return []
    peaks = (score == ndimage.maximum_filter(score, size=3, mode="nearest"))
    peaks &= score >= quality * top
    peaks &= score > 0
    if mask is not None:
        peaks &= mask
    ys, xs = np.nonzero(peaks)
    if len(ys) == 0:
        return []
    s = score[ys, xs]
    # descending score, raster order on ties
    order = np.lexsort((xs, ys, -s))
    ys, xs, s = ys[order], xs[order], s[order]

    def make(x, y, v) -> Corner:
        if subpixel:
            fx, fy = _refine(score, int(x), int(y))
            return Corner(fx, fy, float(v))
        return Corner(float(x), float(y), float(v))

    picked: list[Corner] = []
    if min_dist_px <= 0:
        return [make(x, y, v) for y, x, v in zip(ys[:max_corners], xs[:max_corners], s[:max_corners])]

    r = int(np.ceil(min_dist_px))
    r2 = min_dist_px * min_dist_px
    h, w = score.shape
    taken = np.zeros((h, w), dtype=bool)
    dy, dx = np.mgrid[-r:r + 1, -r:r + 1]
    disk = (dx * dx + dy * dy) < r2
    for y, x, v in zip(ys, xs, s):
        if taken[y, x]:
            continue
        picked.append(make(x, y, v))
        if len(picked) >= max_corners:
            break
        y0, y1 = max(0, y - r), min(h, y + r + 1)
        x0, x1 = max(0, x - r), min(w, x + r + 1)
        taken[y0:y1, x0:x1] |= disk[y0 - y + r:y1 - y + r, x0 - x + r:x1 - x + r]
    return picked
