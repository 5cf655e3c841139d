"""Camera-side pedestrian detection: moving-corner clusters to distances."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from ..calib import DistancePoly, eval_distance
from ..errors import OutOfCalibratedRange, SchemaError
from ..lidar import Detection, GateResult, GateWindow, Source
from .corners import Corner, shi_tomasi
from .dbscan import dbscan
from .flow import FlowStatus, FlowVector, lk_flow
from .image import GrayFrame
from .roi import RoiMask, mask_threshold

CAMERA_SIGMA_M = 0.20
MAX_TARGETS = 5
DETECTION_CSV_HEADER = ["t_s", "source", "distance_m", "x_min", "x_max"]


@dataclass(frozen=True)
class CameraParams:
    threshold: int = 60
    max_corners: int = 300
    quality: float = 0.05
    min_dist_px: float = 3.0
    subpixel: bool = True
    # corners closer than this to the ROI border are mask artifacts
    border_px: int = 2
    window_px: int = 11
    pyramid_levels: int = 2
    motion_threshold_px: float = 1.0
    eps_px: float = 15.0
    min_pts: int = 4
    assoc_px: float = 40.0
    sigma_m: float = CAMERA_SIGMA_M
    window_frames: int = 30
    max_targets: int = MAX_TARGETS
    # a target window not refreshed for this long is dropped
    max_track_age_s: float = 1.0

    @classmethod
    def from_dict(cls, d: dict | None) -> "CameraParams":
        return cls(**(d or {}))


@dataclass
class Track:
    x_center: float
    window: GateWindow
    last_t: float


@dataclass
class CameraTrackState:
    sigma_spec_m: float = CAMERA_SIGMA_M
    window_frames: int = 30
    max_targets: int = MAX_TARGETS
    closing_speed_mps: float = 0.0
    tracks: list[Track] = field(default_factory=list)
    rejected: int = 0

    def set_closing_speed(self, v_mps: float) -> None:
        self.closing_speed_mps = v_mps
        for tr in self.tracks:
            tr.window.closing_speed_mps = v_mps


@dataclass
class FrameAnalysis:
    """Everything ``detect_candidates`` computed for one frame pair."""

    corners: list[Corner]
    flows: list[FlowVector]
    moving: np.ndarray
    labels: np.ndarray
    candidates: list[Detection]


def select_cio_camera(dets: Sequence[Detection]) -> Detection | None:
    best = None
    for d in dets:
        if best is None or d.distance_m < best.distance_m:
            best = d
    return best


def corners_in_roi(masked: GrayFrame, mask: RoiMask, params: CameraParams) -> list[Corner]:
    return shi_tomasi(masked, params.max_corners, params.quality, params.min_dist_px,
                      mask=mask.eroded(params.border_px), subpixel=params.subpixel)


def detect_candidates(prev: GrayFrame, next: GrayFrame, mask: RoiMask, poly: DistancePoly,
                      params: CameraParams, prev_corners: list[Corner] | None = None,
                      masked: tuple[GrayFrame, GrayFrame] | None = None) -> FrameAnalysis:
    """Ungated cluster detections for the ``prev`` -> ``next`` pair.

    ``prev_corners`` and ``masked`` let a streaming caller reuse work already
    done on ``prev``.
    """
    if masked is None:
        mprev = mask_threshold(prev, mask, params.threshold)
        mnext = mask_threshold(next, mask, params.threshold)
    else:
        mprev, mnext = masked
    corners = prev_corners if prev_corners is not None else corners_in_roi(mprev, mask, params)
    flows = lk_flow(mprev, mnext, corners, params.window_px, params.pyramid_levels)
    moving = np.array([f.status is FlowStatus.TRACKED and f.magnitude >= params.motion_threshold_px
                       for f in flows], dtype=bool)
    ends = np.array([f.end for f, m in zip(flows, moving) if m], dtype=np.float64).reshape(-1, 2)
    labels = dbscan(ends, params.eps_px, params.min_pts) if len(ends) else np.zeros(0, dtype=int)

    candidates = []
    for lab in range(int(labels.max()) + 1 if len(labels) else 0):
        members = ends[labels == lab]
        x_min, x_max = float(members[:, 0].min()), float(members[:, 0].max())
        y_bottom = float(members[:, 1].max())
        try:
            dist = eval_distance(poly, y_bottom)
        except OutOfCalibratedRange:
            continue
        if dist <= 0:
            continue
        candidates.append(Detection(distance_m=dist, source=Source.CAMERA, t_s=next.t_s,
                                    lateral_px=(x_min, x_max)))
    candidates.sort(key=lambda d: d.distance_m)
    return FrameAnalysis(corners=list(corners), flows=flows, moving=moving, labels=labels,
                         candidates=candidates)


def gate_candidates(state: CameraTrackState, candidates: Sequence[Detection], t_s: float,
                    assoc_px: float = 40.0, max_track_age_s: float = 1.0) -> list[Detection]:
    """Per-target 2-sigma gate; returns at most ``state.max_targets`` accepted
    detections, nearest first.

    Candidates are associated to tracks by nearest lateral center within
    ``assoc_px``, processing candidates nearest-first.
    """
    state.tracks = [tr for tr in state.tracks if t_s - tr.last_t <= max_track_age_s]
    used: set[int] = set()
    accepted = []
    for det in sorted(candidates, key=lambda d: d.distance_m):
        xc = 0.5 * (det.lateral_px[0] + det.lateral_px[1]) if det.lateral_px else 0.0
        best, best_dx = None, None
        for i, tr in enumerate(state.tracks):
            if i in used:
                continue
            dx = abs(tr.x_center - xc)
            if dx <= assoc_px and (best_dx is None or dx < best_dx):
                best, best_dx = i, dx
        if best is None:
            win = GateWindow(sigma_m=state.sigma_spec_m, capacity=state.window_frames,
                             closing_speed_mps=state.closing_speed_mps)
            state.tracks.append(Track(x_center=xc, window=win, last_t=t_s))
            best = len(state.tracks) - 1
        used.add(best)
        tr = state.tracks[best]
        tr.x_center = xc
        tr.last_t = t_s
        if tr.window.offer(det.distance_m, t_s) is GateResult.ACCEPTED:
            accepted.append(det)
        else:
            state.rejected += 1
    accepted.sort(key=lambda d: d.distance_m)
    return accepted[: state.max_targets]


def camera_detect(prev: GrayFrame, next: GrayFrame, mask: RoiMask, poly: DistancePoly,
                  params: CameraParams, state: CameraTrackState) -> list[Detection]:
    analysis = detect_candidates(prev, next, mask, poly, params)
    return gate_candidates(state, analysis.candidates, next.t_s, params.assoc_px,
                           params.max_track_age_s)


# ---------------------------------------------------------------------------
# CSV

def write_detections_csv(path: str | Path, dets: Iterable[Detection]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(DETECTION_CSV_HEADER)
        for d in dets:
            lo, hi = ("", "") if d.lateral_px is None else (repr(d.lateral_px[0]), repr(d.lateral_px[1]))
            w.writerow([repr(d.t_s), d.source.value, repr(d.distance_m), lo, hi])


def read_detections_csv(path: str | Path) -> list[Detection]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != DETECTION_CSV_HEADER:
            raise SchemaError(f"expected header {','.join(DETECTION_CSV_HEADER)}", row=1)
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(DETECTION_CSV_HEADER):
                raise SchemaError(f"expected {len(DETECTION_CSV_HEADER)} columns, got {len(row)}",
                                  row=row_no)
            try:
                lateral = None
                if row[3] != "" or row[4] != "":
                    lateral = (float(row[3]), float(row[4]))
                out.append(Detection(distance_m=float(row[2]), source=Source(row[1]),
                                     t_s=float(row[0]), lateral_px=lateral))
            except ValueError as exc:
                raise SchemaError(str(exc), row=row_no) from exc
    return out
