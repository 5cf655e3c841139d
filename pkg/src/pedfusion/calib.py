"""Camera calibration: bottom-pixel to distance polynomial, camera/lidar
distance alignment, and frame-triggered lidar selection.

Pixel rows are counted from the image top, so a larger ``y`` means a nearer
object on the ground plane.
"""

from __future__ import annotations

import bisect
import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from scipy.linalg import solve_triangular

from .errors import (
    DegenerateDesign,
    NoScanAvailable,
    NonMonotone,
    OutOfCalibratedRange,
    SchemaError,
    TooFewAnchors,
    TooFewSamples,
)
from .lidar import LidarScan

POLY_DEGREE = 8
N_COEFFS = POLY_DEGREE + 1
# relative pivot size below which the normalized design is treated as singular
RANK_TOL = 1e-10


@dataclass(frozen=True)
class FitReport:
    n_samples: int
    max_residual_m: float
    rms_residual_m: float


@dataclass(frozen=True)
class DistancePoly:
    """Degree-8 polynomial in the normalized row ``u = (y - y_center) / y_scale``.

    ``coeffs`` runs from the u**8 term down to the constant.
    """

    coeffs: tuple[float, ...]
    y_center: float
    y_scale: float
    valid_y_range: tuple[float, float]
    report: FitReport | None = field(default=None, compare=False)

    def __post_init__(self):
        if len(self.coeffs) != N_COEFFS:
            raise ValueError(f"expected {N_COEFFS} coefficients, got {len(self.coeffs)}")
        if not self.y_scale > 0:
            raise ValueError("y_scale must be positive")
        lo, hi = self.valid_y_range
        if lo > hi:
            raise ValueError("valid_y_range must be ordered")

    def __call__(self, y_px: float) -> float:
        return eval_distance(self, y_px)

    def output_span(self, n: int = 2001) -> tuple[float, float]:
        """Min and max distance over the calibrated rows (dense sampling)."""
        lo, hi = self.valid_y_range
        ys = np.linspace(lo, hi, n)
        u = (ys - self.y_center) / self.y_scale
        vals = np.polyval(self.coeffs, u)
        return float(vals.min()), float(vals.max())

    def to_dict(self) -> dict:
        return {
            "coeffs": list(self.coeffs),
            "y_center": self.y_center,
            "y_scale": self.y_scale,
            "y_range": list(self.valid_y_range),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "DistancePoly":
        return cls(
            coeffs=tuple(float(c) for c in d["coeffs"]),
            y_center=float(d["y_center"]),
            y_scale=float(d["y_scale"]),
            valid_y_range=(float(d["y_range"][0]), float(d["y_range"][1])),
        )


def fit_distance_poly(samples: Sequence[tuple[float, float]]) -> DistancePoly:
    """Least-squares fit of distance against bottom-row pixel.

    The fit is done on a normalized row coordinate with a QR solve; a raw
    degree-8 Vandermonde on pixel rows is hopelessly conditioned.
    """
    if len(samples) < N_COEFFS:
        raise TooFewSamples(f"need at least {N_COEFFS} samples, got {len(samples)}")
    arr = np.asarray(samples, dtype=float)
    y, x = arr[:, 0], arr[:, 1]
    if not np.all(np.isfinite(arr)):
        raise ValueError("samples must be finite")
    if np.any(x <= 0):
        raise ValueError("distances must be positive")
    y_center = float(np.mean(y))
    y_scale = float(np.max(np.abs(y - y_center)))
    if y_scale == 0.0:
        raise DegenerateDesign("all sample rows are identical")

    u = (y - y_center) / y_scale
    V = np.vander(u, N_COEFFS)
    Q, R = np.linalg.qr(V, mode="reduced")
    diag = np.abs(np.diag(R))
    if diag.min() <= RANK_TOL * diag.max():
        raise DegenerateDesign("normalized Vandermonde is rank deficient "
                               f"({len(np.unique(y))} distinct rows)")
    coeffs = solve_triangular(R, Q.T @ x)

    resid = V @ coeffs - x
    report = FitReport(
        n_samples=len(x),
        max_residual_m=float(np.max(np.abs(resid))),
        rms_residual_m=float(np.sqrt(np.mean(resid ** 2))),
    )
    return DistancePoly(
        coeffs=tuple(float(c) for c in coeffs),
        y_center=y_center,
        y_scale=y_scale,
        valid_y_range=(float(y.min()), float(y.max())),
        report=report,
    )


def eval_distance(poly: DistancePoly, y_px: float) -> float:
    lo, hi = poly.valid_y_range
    if not (lo <= y_px <= hi):
        raise OutOfCalibratedRange(y_px, poly.valid_y_range)
    u = (y_px - poly.y_center) / poly.y_scale
    acc = 0.0
    for c in poly.coeffs:
        acc = acc * u + c
    return acc


@dataclass(frozen=True)
class SpatialMap:
    """Piecewise-linear camera-distance to lidar-distance map."""

    anchors: tuple[tuple[float, float], ...]

    def __post_init__(self):
        if len(self.anchors) < 2:
            raise TooFewAnchors(f"need at least 2 anchors, got {len(self.anchors)}")
        cam = [a[0] for a in self.anchors]
        lid = [a[1] for a in self.anchors]
        for i in range(1, len(self.anchors)):
            if not cam[i] > cam[i - 1]:
                raise NonMonotone(f"camera distances not strictly increasing at anchor {i}")
            if not lid[i] > lid[i - 1]:
                raise NonMonotone(f"lidar distances not strictly increasing at anchor {i}")

    def to_list(self) -> list[list[float]]:
        return [[c, l] for c, l in self.anchors]


def build_spatial_map(pairs: Iterable[tuple[float, float]]) -> SpatialMap:
    pairs = sorted((float(c), float(l)) for c, l in pairs)
    if len(pairs) < 2:
        raise TooFewAnchors(f"need at least 2 anchors, got {len(pairs)}")
    return SpatialMap(anchors=tuple(pairs))


def identity_map(lo: float = 2.0, hi: float = 10.0) -> SpatialMap:
    return build_spatial_map([(k, k) for k in np.arange(lo, hi + 0.5, 1.0)])


def align_camera_to_lidar(smap: SpatialMap, camera_m: float) -> float:
    a = smap.anchors
    if camera_m <= a[0][0]:
        (c0, l0), (c1, l1) = a[0], a[1]
    elif camera_m >= a[-1][0]:
        (c0, l0), (c1, l1) = a[-2], a[-1]
    else:
        i = bisect.bisect_right([p[0] for p in a], camera_m)
        (c0, l0), (c1, l1) = a[i - 1], a[i]
    return l0 + (camera_m - c0) * (l1 - l0) / (c1 - c0)


@dataclass
class TriggerClock:
    frame_period_s: float = 1.0 / 30.0
    last_frame_time_s: float = -math.inf

    def __post_init__(self):
        if not self.frame_period_s > 0:
            raise ValueError("frame_period_s must be positive")


def align_lidar_to_frame(clock: TriggerClock, frame_time_s: float,
                         lidar_stream: Sequence[LidarScan]) -> LidarScan:
    """Latest scan whose timestamp is not after the camera frame."""
    i = bisect.bisect_right(lidar_stream, frame_time_s, key=lambda s: s.t_s)
    clock.last_frame_time_s = frame_time_s
    if i == 0:
        raise NoScanAvailable(f"no lidar scan at or before t={frame_time_s!r}")
    return lidar_stream[i - 1]


# ---------------------------------------------------------------------------
# serialization

def calibration_to_json(poly: DistancePoly, smap: SpatialMap, extra: dict | None = None) -> str:
    doc = {"poly": poly.to_dict(), "spatial_map": smap.to_list()}
    if extra:
        doc.update(extra)
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def save_calibration(path: str | Path, poly: DistancePoly, smap: SpatialMap,
                     extra: dict | None = None) -> None:
    Path(path).write_text(calibration_to_json(poly, smap, extra))


def load_calibration(path: str | Path) -> tuple[DistancePoly, SpatialMap]:
    doc = json.loads(Path(path).read_text())
    try:
        poly = DistancePoly.from_dict(doc["poly"])
        smap = build_spatial_map(tuple(p) for p in doc["spatial_map"])
    except (KeyError, TypeError, IndexError) as exc:
        raise SchemaError(f"malformed calibration document: {exc!r}") from exc
    return poly, smap


def load_samples_csv(path: str | Path) -> list[tuple[float, float]]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or not {"y_px", "distance_m"} <= set(reader.fieldnames):
            raise SchemaError("expected header y_px,distance_m", row=1)
        for row_no, row in enumerate(reader, start=2):
            try:
                out.append((float(row["y_px"]), float(row["distance_m"])))
            except (TypeError, ValueError) as exc:
                raise SchemaError(str(exc), row=row_no) from exc
    return out


def save_samples_csv(path: str | Path, samples: Iterable[tuple[float, float]]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["y_px", "distance_m"])
        for y, d in samples:
            w.writerow([repr(float(y)), repr(float(d))])
