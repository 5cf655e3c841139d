"""Trapezoidal region of interest and masked thresholding."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from ..errors import DegeneratePolygon
from .image import NOMINAL_HEIGHT, NOMINAL_WIDTH, GrayFrame

Point = tuple[float, float]


@dataclass(frozen=True, eq=False)
class RoiMask:
    polygon: tuple[Point, Point, Point, Point]
    raster: np.ndarray

    def contains(self, x: int, y: int) -> bool:
        h, w = self.raster.shape
        return 0 <= y < h and 0 <= x < w and bool(self.raster[y, x])

    def eroded(self, px: int) -> np.ndarray:
        """Raster shrunk by ``px`` pixels, used to keep corners off the mask border."""
        if px <= 0:
            return self.raster
        return ndimage.binary_erosion(self.raster, iterations=px, border_value=1)


def _cross(o: Point, a: Point, b: Point) -> float:
    return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0])


def polygon_raster(polygon, shape: tuple[int, int]) -> np.ndarray:
    """Inclusion mask of a convex polygon: a pixel is in iff its center lies
    inside or on the boundary."""
    h, w = shape
    ys, xs = np.mgrid[0:h, 0:w].astype(float)
    n = len(polygon)
    area2 = sum(_cross((0.0, 0.0), polygon[i], polygon[(i + 1) % n]) for i in range(n))
    sign = 1.0 if area2 > 0 else -1.0
    inside = np.ones(shape, dtype=bool)
    for i in range(n):
        (x0, y0), (x1, y1) = polygon[i], polygon[(i + 1) % n]
        c = (x1 - x0) * (ys - y0) - (y1 - y0) * (xs - x0)
        inside &= sign * c >= 0
    return inside


def compute_roi(far_point: Point, near_lane_points: tuple[Point, Point], half_width: float = 12,
                shape: tuple[int, int] = (NOMINAL_HEIGHT, NOMINAL_WIDTH)) -> RoiMask:
    """Trapezoid from the farthest lane pixel of concern and two near lane points.

    Near points may lie outside the image columns; the raster is clipped.
    """
    (fx, fy) = far_point
    (ax, ay), (bx, by) = sorted(near_lane_points)
    if (ax, ay) == (bx, by):
        raise DegeneratePolygon("near lane points coincide")
    if not (fy < ay and fy < by):
        raise DegeneratePolygon("far point must lie above both near points")
    if half_width < 0:
        raise DegeneratePolygon("negative half-width")
    poly = ((fx - half_width, fy), (fx + half_width, fy), (bx, by), (ax, ay))
    n = len(poly)
    crosses = [_cross(poly[i], poly[(i + 1) % n], poly[(i + 2) % n]) for i in range(n)]
    nonzero = [c for c in crosses if abs(c) > 1e-12]
    if len(nonzero) < 3 or not (all(c > 0 for c in nonzero) or all(c < 0 for c in nonzero)):
        raise DegeneratePolygon("ROI polygon is not convex and non-degenerate")
    return RoiMask(polygon=poly, raster=polygon_raster(poly, shape))


def full_mask(shape: tuple[int, int] = (NOMINAL_HEIGHT, NOMINAL_WIDTH)) -> RoiMask:
    h, w = shape
    poly = ((0.0, 0.0), (w - 1.0, 0.0), (w - 1.0, h - 1.0), (0.0, h - 1.0))
    return RoiMask(polygon=poly, raster=np.ones(shape, dtype=bool))


def mask_threshold(frame: GrayFrame, mask: RoiMask, threshold: int) -> GrayFrame:
    """Zero everything outside the mask and every pixel below ``threshold``.

    Kept pixels retain their intensity so gradients stay meaningful.
    """
    if not 0 <= threshold <= 255:
        raise ValueError("threshold must be in [0, 255]")
    if mask.raster.shape != frame.shape:
        raise ValueError(f"mask shape {mask.raster.shape} != frame shape {frame.shape}")
    px = frame.pixels
    keep = mask.raster & (px >= threshold)
    return GrayFrame(np.where(keep, px, 0).astype(np.uint8), t_s=frame.t_s)
