"""End-to-end wiring: calibration sweep, scenario runs, log replay and run reports.

The per-frame decision path (lidar gate + CIO, camera gate + CIO, fusion)
lives in ``FramePipeline`` and is shared by live runs and replays, so a
replay of a run's own logs retraces the identical float operations.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .calib import (
    DistancePoly,
    SpatialMap,
    TriggerClock,
    align_lidar_to_frame,
    build_spatial_map,
    eval_distance,
    fit_distance_poly,
)
from .errors import OutOfCalibratedRange, SchemaError
from .fusion import (
    EnvSignal,
    FusedOutput,
    FusionConfig,
    FusionState,
    MainSensor,
    WarningLevel,
    fuse,
    read_fusion_csv,
    write_fusion_csv,
)
from .lidar import (
    ChannelHistory,
    Detection,
    GateResult,
    LidarScan,
    gate_scan,
    read_lidar_csv,
    select_cio,
    write_lidar_csv,
)
from .sim.lidar_model import sample_lidar
from .sim.render import PinholeCamera, render_frame
from .sim.scenario import Pedestrian, ScenarioConfig, WorldState, build_scenario
from .vision.corners import Corner
from .vision.detect import (
    CameraParams,
    CameraTrackState,
    corners_in_roi,
    detect_candidates,
    gate_candidates,
    read_detections_csv,
    select_cio_camera,
    write_detections_csv,
)
from .vision.image import GrayFrame, write_pgm
from .vision.roi import RoiMask, compute_roi, mask_threshold

FRAMES_CSV_HEADER = ["t_s", "mean_intensity", "corner_count", "ego_speed_mps"]
GT_CSV_HEADER = ["t_s", "gt_distance_m", "ped_lat_m"]

# a main-sensor or warning state must hold this many frames to count as a transition
SUSTAIN_FRAMES = 5
# fused outputs further than this from every pedestrian count as false alarms
FALSE_ALARM_M = 1.0


# ---------------------------------------------------------------------------
# calibration

@dataclass(frozen=True)
class SweepConfig:
    """Static-target calibration sweep.

    The near end is 2.5 m rather than 2 m: a single degree-8 polynomial in the
    row coordinate cannot hold 5 cm over 2-20 m because the ground-plane
    distance model has a pole just below the image.
    """

    positions: int = 53
    near_m: float = 2.5
    far_m: float = 20.0
    anchors_m: tuple[float, ...] = (3.0, 4.0, 5.0, 6.0, 7.0, 8.0, 9.0, 10.0)
    anchor_scans: int = 30
    lateral_m: float = 0.0

    def distances(self) -> np.ndarray:
        return np.linspace(self.near_m, self.far_m, self.positions)


def _static_world(cfg: ScenarioConfig, distance_m: float, lateral_m: float,
                  t_s: float = 0.0) -> WorldState:
    w, h = cfg.ped_size_m
    ped = Pedestrian(lon_m=distance_m, lat_m=lateral_m, width_m=w, height_m=h)
    return WorldState(t_s=t_s, vehicle_x_m=0.0, vehicle_speed_mps=0.0, peds=(ped,))


def sweep_samples(cfg: ScenarioConfig, sweep: SweepConfig = SweepConfig()) -> list[tuple[float, float]]:
    """(bottom row, distance) pairs for the static sweep.

    The row is the projected bottom edge of the rendered pedestrian, i.e. the
    noiseless renderer geometry.
    """
    cam = PinholeCamera.from_config(cfg.camera)
    return [(cam.ground_row(float(d)), float(d)) for d in sweep.distances()]


def default_roi(cfg: ScenarioConfig) -> RoiMask:
    """Lane trapezoid; unset vertices come from the camera geometry."""
    cam = PinholeCamera.from_config(cfg.camera)
    rc = cfg.roi
    far = rc.far_point
    if far is None:
        far = (cam.cx, cam.ground_row(rc.far_distance_m))
    near = rc.near_points
    if near is None:
        y = cam.height - 1.0
        half = cam.f * rc.near_half_width_m / cam.distance_of_row(y)
        near = ((cam.cx - half, y), (cam.cx + half, y))
    return compute_roi(far, near, rc.half_width_px, shape=(cam.height, cam.width))


def measured_bottom_row(frame: GrayFrame, mask: RoiMask, params: CameraParams,
                        box: tuple[float, float, float, float], margin_px: float = 3.0) -> float | None:
    """Bottom-most detector corner on a known target box, as the camera pipeline sees it."""
    masked = mask_threshold(frame, mask, params.threshold)
    xl, xr, yt, yb = box
    ys = [c.y for c in corners_in_roi(masked, mask, params)
          if xl - margin_px <= c.x <= xr + margin_px and yt - margin_px <= c.y <= yb + margin_px]
    return max(ys) if ys else None


def anchor_pairs(cfg: ScenarioConfig, poly: DistancePoly, sweep: SweepConfig = SweepConfig()
                 ) -> list[tuple[float, float]]:
    """(camera distance, lidar distance) at each anchor.

    The camera side runs the real corner detector on the rendered target, so
    the detector's systematic offset from the true edge is what the spatial
    map learns to remove. The lidar side is the mean of ``anchor_scans``
    noisy readings.
    """
    cam = PinholeCamera.from_config(cfg.camera)
    mask = default_roi(cfg)
    params = CameraParams.from_dict(cfg.vision)
    rng = np.random.default_rng(cfg.seed)
    pairs = []
    for d in sweep.anchors_m:
        world = _static_world(cfg, d, sweep.lateral_m)
        y = measured_bottom_row(render_frame(world, cfg), mask, params,
                                cam.ped_box(world.ped, d))
        if y is None:
            raise OutOfCalibratedRange(float("nan"), poly.valid_y_range)
        cam_m = eval_distance(poly, y)
        readings = []
        for k in range(sweep.anchor_scans):
            scan = sample_lidar(_static_world(cfg, d, sweep.lateral_m, k / cfg.lidar.rate_hz), cfg, rng)
            readings += [ch.range_m for ch in scan.channels if ch.valid]
        if not readings:
            raise ValueError(f"lidar sees nothing at the {d} m anchor")
        pairs.append((cam_m, math.fsum(readings) / len(readings)))
    return pairs


@dataclass(frozen=True)
class Calibration:
    poly: DistancePoly
    spatial_map: SpatialMap
    report: dict

    def to_json(self) -> str:
        doc = {"poly": self.poly.to_dict(), "spatial_map": self.spatial_map.to_list(),
               "report": self.report}
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"

    def save(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json())


def calibrate(cfg: ScenarioConfig, sweep: SweepConfig = SweepConfig()) -> Calibration:
    samples = sweep_samples(cfg, sweep)
    poly = fit_distance_poly(samples)
    pairs = anchor_pairs(cfg, poly, sweep)
    smap = build_spatial_map(pairs)
    rep = poly.report
    report = {
        "n_samples": rep.n_samples,
        "max_residual_m": rep.max_residual_m,
        "rms_residual_m": rep.rms_residual_m,
        "sweep_m": [sweep.near_m, sweep.far_m],
        "anchor_offsets_m": [l - c for c, l in pairs],
    }
    return Calibration(poly, smap, report)


# ---------------------------------------------------------------------------
# per-frame decision path

@dataclass(frozen=True)
class FrameRecord:
    """Per-frame inputs that are not sensor detections."""

    t_s: float
    mean_intensity: float
    corner_count: int
    ego_speed_mps: float


@dataclass
class FrameResult:
    output: FusedOutput
    lidar_cio: Detection | None
    camera_cio: Detection | None
    lidar_gates: list
    camera_accepted: list[Detection]
    trusted: bool


class FramePipeline:
    """Gating, CIO selection and fusion for a stream of frames."""

    def __init__(self, smap: SpatialMap, params: CameraParams = CameraParams(),
                 fusion_config: FusionConfig = FusionConfig(), frame_period_s: float = 1.0 / 30.0):
        self.smap = smap
        self.params = params
        self.fusion_config = fusion_config
        self.clock = TriggerClock(frame_period_s=frame_period_s)
        self.lidar_hist = ChannelHistory()
        self.camera_state = CameraTrackState(sigma_spec_m=params.sigma_m,
                                             window_frames=params.window_frames,
                                             max_targets=params.max_targets)
        self.fusion_state = FusionState()
        self.lidar_rejected = 0

    def step(self, rec: FrameRecord, lidar_stream: Sequence[LidarScan],
             candidates: Sequence[Detection]) -> FrameResult:
        self.lidar_hist.set_closing_speed(rec.ego_speed_mps)
        self.camera_state.set_closing_speed(rec.ego_speed_mps)

        lidar_cio, gates = None, []
        if lidar_stream and lidar_stream[0].t_s <= rec.t_s:
            scan = align_lidar_to_frame(self.clock, rec.t_s, lidar_stream)
            gates = gate_scan(self.lidar_hist, scan)
            self.lidar_rejected += sum(g is GateResult.REJECTED for g in gates)
            lidar_cio = select_cio(scan, gates)

        accepted = gate_candidates(self.camera_state, candidates, rec.t_s,
                                   self.params.assoc_px, self.params.max_track_age_s)
        camera_cio = select_cio_camera(accepted)

        env = EnvSignal(rec.mean_intensity, rec.corner_count)
        out = fuse(lidar_cio, camera_cio, env, self.fusion_state, self.smap, rec.t_s,
                   self.fusion_config)
        trusted = (env.mean_intensity >= self.fusion_config.dark_threshold
                   and env.corner_count >= self.fusion_config.min_corners)
        return FrameResult(out, lidar_cio, camera_cio, gates, accepted, trusted)


# ---------------------------------------------------------------------------
# logs

def write_frames_csv(path: str | Path, records: Sequence[FrameRecord]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FRAMES_CSV_HEADER)
        for r in records:
            w.writerow([repr(r.t_s), repr(r.mean_intensity), str(r.corner_count),
                        repr(r.ego_speed_mps)])


def read_frames_csv(path: str | Path) -> list[FrameRecord]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != FRAMES_CSV_HEADER:
            raise SchemaError(f"expected header {','.join(FRAMES_CSV_HEADER)}", row=1)
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(FRAMES_CSV_HEADER):
                raise SchemaError(f"expected {len(FRAMES_CSV_HEADER)} columns, got {len(row)}",
                                  row=row_no)
            try:
                out.append(FrameRecord(float(row[0]), float(row[1]), int(row[2]), float(row[3])))
            except ValueError as exc:
                raise SchemaError(str(exc), row=row_no) from exc
    return out


def write_gt_csv(path: str | Path, worlds: Sequence[WorldState]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(GT_CSV_HEADER)
        for s in worlds:
            w.writerow([repr(s.t_s), repr(s.ground_truth_distance_m), repr(s.ped.lat_m)])


# ---------------------------------------------------------------------------
# reports

@dataclass(frozen=True)
class Transition:
    t_s: float
    from_state: str
    to_state: str
    gt_distance_m: float
    fused_distance_m: float | None


@dataclass
class RunReport:
    kind: str
    frames: int
    lidar_detection_rate: float = 0.0
    camera_detection_rate: float = 0.0
    coverage_2_20: float | None = None
    rmse_near_m: float | None = None
    rmse_far_m: float | None = None
    n_near: int = 0
    n_far: int = 0
    switches: list[Transition] = field(default_factory=list)
    warnings: list[Transition] = field(default_factory=list)
    lidar_gate_rejections: int = 0
    camera_gate_rejections: int = 0
    fused_false_alarms: int = 0
    camera_trusted_fraction: float = 0.0
    lidar_main_when_lidar_valid: float | None = None
    red_below_10_frames: int = 0

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def _sustained_transitions(labels: Sequence[str | None], times: Sequence[float],
                           gts: Sequence[float], fused: Sequence[float | None],
                           min_run: int = SUSTAIN_FRAMES) -> list[Transition]:
    """Changes between runs of at least ``min_run`` frames; ``None`` labels are skipped."""
    runs: list[list] = []  # [label, first index, length]
    for i, lab in enumerate(labels):
        if lab is None:
            continue
        if runs and runs[-1][0] == lab:
            runs[-1][2] += 1
        else:
            runs.append([lab, i, 1])
    kept: list[list] = []
    for r in runs:
        if r[2] < min_run:
            continue
        if kept and kept[-1][0] == r[0]:
            kept[-1][2] += r[2]
        else:
            kept.append(list(r))
    out = []
    for a, b in zip(kept, kept[1:]):
        i = b[1]
        out.append(Transition(times[i], a[0], b[0], gts[i], fused[i]))
    return out


def build_report(cfg: ScenarioConfig, worlds: Sequence[WorldState], results: Sequence[FrameResult],
                 lidar_rejected: int, camera_rejected: int) -> RunReport:
    n = len(results)
    rep = RunReport(kind=cfg.kind.value, frames=n, lidar_gate_rejections=lidar_rejected,
                    camera_gate_rejections=camera_rejected)
    if n == 0:
        return rep
    near_gt = [min(w.distance_to(p) for p in w.peds) for w in worlds]
    outs = [r.output for r in results]
    rep.lidar_detection_rate = sum(r.lidar_cio is not None for r in results) / n
    rep.camera_detection_rate = sum(r.camera_cio is not None for r in results) / n
    rep.camera_trusted_fraction = sum(r.trusted for r in results) / n

    in_band = [i for i in range(n) if 2.0 <= near_gt[i] <= 20.0]
    if in_band:
        rep.coverage_2_20 = sum(outs[i].distance_m is not None for i in in_band) / len(in_band)
    near = [(outs[i].distance_m - near_gt[i]) ** 2 for i in range(n)
            if outs[i].distance_m is not None and near_gt[i] < 9.0]
    far = [(outs[i].distance_m - near_gt[i]) ** 2 for i in range(n)
           if outs[i].distance_m is not None and 9.0 <= near_gt[i] <= 20.0]
    rep.n_near, rep.n_far = len(near), len(far)
    rep.rmse_near_m = math.sqrt(math.fsum(near) / len(near)) if near else None
    rep.rmse_far_m = math.sqrt(math.fsum(far) / len(far)) if far else None

    times = [o.t_s for o in outs]
    fused = [o.distance_m for o in outs]
    live = {MainSensor.LIDAR: "lidar", MainSensor.CAMERA: "camera"}
    rep.switches = _sustained_transitions([live.get(o.main_sensor) for o in outs], times, near_gt, fused)
    colors = {WarningLevel.YELLOW: "yellow", WarningLevel.RED: "red"}
    rep.warnings = _sustained_transitions([colors.get(o.warning) for o in outs], times, near_gt, fused)

    for w, o in zip(worlds, outs):
        if o.distance_m is not None and all(abs(o.distance_m - w.distance_to(p)) > FALSE_ALARM_M
                                            for p in w.peds):
            rep.fused_false_alarms += 1
    with_lidar = [r for r in results if r.lidar_cio is not None]
    if with_lidar:
        rep.lidar_main_when_lidar_valid = (
            sum(r.output.main_sensor is MainSensor.LIDAR for r in with_lidar) / len(with_lidar))
    rep.red_below_10_frames = sum(o.warning is WarningLevel.RED and g < 10.0
                                  for o, g in zip(outs, near_gt))
    return rep


# ---------------------------------------------------------------------------
# runs

@dataclass
class RunResult:
    report: RunReport
    outputs: list[FusedOutput]
    frames: list[FrameResult]
    worlds: list[WorldState]
    records: list[FrameRecord]
    lidar_stream: list[LidarScan]
    candidates: list[list[Detection]]


def frame_times(cfg: ScenarioConfig) -> list[float]:
    """Camera frame timestamps: k/fps strictly before the end of the run and
    before any pedestrian reaches the camera plane."""
    scen = build_scenario(cfg)
    end = cfg.run_duration_s
    times = []
    k = 0
    while True:
        t = k / cfg.camera.fps
        if not t < end:
            break
        w = scen.world_at(t)
        if any(not w.distance_to(p) > 0 for p in w.peds):
            break
        times.append(t)
        k += 1
    return times


def simulate_lidar(cfg: ScenarioConfig, t_end: float) -> list[LidarScan]:
    scen = build_scenario(cfg)
    rng = np.random.default_rng(cfg.seed)
    stream = []
    j = 0
    while True:
        t = j / cfg.lidar.rate_hz
        if t > t_end:
            break
        stream.append(sample_lidar(scen.world_at(t), cfg, rng))
        j += 1
    return stream


def run_scenario(cfg: ScenarioConfig, poly: DistancePoly, smap: SpatialMap,
                 out_dir: str | Path | None = None, dump_frames: bool = False) -> RunResult:
    scen = build_scenario(cfg)
    params = CameraParams.from_dict(cfg.vision)
    mask = default_roi(cfg)
    times = frame_times(cfg)
    lidar_stream = simulate_lidar(cfg, times[-1]) if times else []
    pipe = FramePipeline(smap, params, frame_period_s=1.0 / cfg.camera.fps)

    if out_dir is not None:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        if dump_frames:
            (out_dir / "frames").mkdir(exist_ok=True)

    worlds, records, results, all_cands = [], [], [], []
    prev_raw = prev_masked = None
    prev_corners: list[Corner] | None = None
    for k, t in enumerate(times):
        world = scen.world_at(t)
        raw = render_frame(world, cfg)
        if dump_frames and out_dir is not None:
            write_pgm(out_dir / "frames" / f"frame_{k:06d}.pgm", raw)
        masked = mask_threshold(raw, mask, params.threshold)
        corners = corners_in_roi(masked, mask, params)
        cands: list[Detection] = []
        if prev_raw is not None:
            analysis = detect_candidates(prev_raw, raw, mask, poly, params,
                                         prev_corners=prev_corners, masked=(prev_masked, masked))
            cands = analysis.candidates
        rec = FrameRecord(t_s=t, mean_intensity=float(raw.pixels.mean()),
                          corner_count=len(corners), ego_speed_mps=world.vehicle_speed_mps)
        results.append(pipe.step(rec, lidar_stream, cands))
        worlds.append(world)
        records.append(rec)
        all_cands.append(cands)
        prev_raw, prev_masked, prev_corners = raw, masked, corners

    outputs = [r.output for r in results]
    report = build_report(cfg, worlds, results, pipe.lidar_rejected, pipe.camera_state.rejected)
    if out_dir is not None:
        write_lidar_csv(out_dir / "lidar.csv", lidar_stream)
        write_detections_csv(out_dir / "camera.csv", [d for c in all_cands for d in c])
        write_frames_csv(out_dir / "frames.csv", records)
        write_gt_csv(out_dir / "gt.csv", worlds)
        write_fusion_csv(out_dir / "fusion.csv", outputs)
        (out_dir / "scenario.json").write_text(cfg.to_json())
        (out_dir / "report.json").write_text(report.to_json())
    return RunResult(report, outputs, results, worlds, records, lidar_stream, all_cands)


def replay_logs(lidar_stream: Sequence[LidarScan], candidates: Sequence[Detection],
                records: Sequence[FrameRecord], smap: SpatialMap,
                params: CameraParams = CameraParams(),
                frame_period_s: float = 1.0 / 30.0) -> list[FusedOutput]:
    """Re-run gating and fusion from recorded sensor logs.

    Camera candidates are matched to frames by exact timestamp.
    """
    by_t: dict[float, list[Detection]] = {}
    for d in candidates:
        by_t.setdefault(d.t_s, []).append(d)
    known = {r.t_s for r in records}
    stray = [t for t in by_t if t not in known]
    if stray:
        raise SchemaError(f"camera detection at t={stray[0]!r} matches no frame")
    pipe = FramePipeline(smap, params, frame_period_s=frame_period_s)
    return [pipe.step(r, lidar_stream, by_t.get(r.t_s, [])).output for r in records]


def replay_dir(log_dir: str | Path, smap: SpatialMap, cfg: ScenarioConfig | None = None
               ) -> list[FusedOutput]:
    log_dir = Path(log_dir)
    if cfg is None and (log_dir / "scenario.json").exists():
        cfg = ScenarioConfig.load(log_dir / "scenario.json")
    params = CameraParams.from_dict(cfg.vision) if cfg is not None else CameraParams()
    period = 1.0 / cfg.camera.fps if cfg is not None else 1.0 / 30.0
    return replay_logs(read_lidar_csv(log_dir / "lidar.csv"),
                       read_detections_csv(log_dir / "camera.csv"),
                       read_frames_csv(log_dir / "frames.csv"), smap, params, period)


__all__ = [
    "Calibration", "FrameRecord", "FramePipeline", "RunReport", "RunResult", "SweepConfig",
    "Transition", "anchor_pairs", "build_report", "calibrate", "default_roi", "frame_times",
    "read_frames_csv", "read_fusion_csv", "replay_dir", "replay_logs", "run_scenario",
    "simulate_lidar", "sweep_samples", "write_frames_csv", "write_gt_csv",
]
