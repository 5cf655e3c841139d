"""Three-beam short-range lidar: scan records, per-channel false-alarm gating
and closest-in-object selection."""

from __future__ import annotations

import csv
import enum
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .errors import SchemaError

N_CHANNELS = 3
RANGE_MIN_M = 1.0
RANGE_MAX_M = 10.0
LIDAR_SIGMA_M = 0.10
WINDOW_FRAMES = 30
WARMUP = 5
RESET_AFTER = 10

LIDAR_CSV_HEADER = ["t_s", "ch0_m", "ch0_valid", "ch1_m", "ch1_valid", "ch2_m", "ch2_valid"]


class Source(enum.Enum):
    LIDAR = "lidar"
    CAMERA = "camera"


class GateResult(enum.Enum):
    ACCEPTED = "accepted"
    REJECTED = "rejected"


@dataclass(frozen=True)
class ChannelReading:
    range_m: float
    valid: bool


@dataclass(frozen=True)
class LidarScan:
    t_s: float
    channels: tuple[ChannelReading, ChannelReading, ChannelReading]

    def __post_init__(self):
        if len(self.channels) != N_CHANNELS:
            raise ValueError(f"a scan has exactly {N_CHANNELS} channels")
        for ch in self.channels:
            if ch.valid and not (RANGE_MIN_M <= ch.range_m <= RANGE_MAX_M):
                raise ValueError(f"valid range {ch.range_m} outside [{RANGE_MIN_M}, {RANGE_MAX_M}]")

    @classmethod
    def from_ranges(cls, t_s: float, ranges: Sequence[float | None]) -> "LidarScan":
        """Build a scan from three ranges, ``None`` marking an invalid channel."""
        chans = tuple(ChannelReading(0.0, False) if r is None else ChannelReading(float(r), True)
                      for r in ranges)
        return cls(t_s=float(t_s), channels=chans)


@dataclass(frozen=True)
class Detection:
    distance_m: float
    source: Source
    t_s: float
    lateral_px: tuple[float, float] | None = None

    def __post_init__(self):
        if not self.distance_m > 0:
            raise ValueError("distance must be positive")


@dataclass
class GateWindow:
    """Rolling window of accepted ranges with a 2-sigma deviation gate.

    The window center is the mean of the accepted samples after each has been
    carried forward to the query time at ``closing_speed_mps``. With a closing
    speed of zero this is the plain rolling mean.
    """

    sigma_m: float
    capacity: int = WINDOW_FRAMES
    n_sigma: float = 2.0
    warmup: int = WARMUP
    reset_after: int = RESET_AFTER
    closing_speed_mps: float = 0.0
    samples: deque = field(default_factory=deque)
    consecutive_rejects: int = 0

    def center(self, t_s: float) -> float:
        v = self.closing_speed_mps
        return math.fsum(r - v * (t_s - t) for t, r in self.samples) / len(self.samples)

    def push(self, t_s: float, value: float) -> None:
        self.samples.append((t_s, value))
        while len(self.samples) > self.capacity:
            self.samples.popleft()

    def offer(self, value: float, t_s: float = 0.0) -> GateResult:
        if len(self.samples) < self.warmup:
            ok = True
        else:
            ok = abs(value - self.center(t_s)) <= self.n_sigma * self.sigma_m
        if ok:
            self.push(t_s, value)
            self.consecutive_rejects = 0
            return GateResult.ACCEPTED
        self.consecutive_rejects += 1
        if self.consecutive_rejects >= self.reset_after:
            # the scene changed under this channel; start over
            self.samples.clear()
            self.consecutive_rejects = 0
        return GateResult.REJECTED

    def __len__(self) -> int:
        return len(self.samples)


@dataclass
class ChannelHistory:
    sigma_spec_m: float = LIDAR_SIGMA_M
    window_frames: int = WINDOW_FRAMES
    closing_speed_mps: float = 0.0
    windows: list[GateWindow] = field(default_factory=list)

    def __post_init__(self):
        if not self.windows:
            self.windows = [GateWindow(sigma_m=self.sigma_spec_m, capacity=self.window_frames)
                            for _ in range(N_CHANNELS)]

    def set_closing_speed(self, v_mps: float) -> None:
        self.closing_speed_mps = v_mps
        for w in self.windows:
            w.closing_speed_mps = v_mps


def channel_gate(hist: ChannelHistory, channel: int, sample_m: float,
                 t_s: float = 0.0) -> GateResult:
    if not math.isfinite(sample_m):
        raise ValueError("sample must be finite")
    return hist.windows[channel].offer(sample_m, t_s)


def gate_scan(hist: ChannelHistory, scan: LidarScan) -> list[GateResult | None]:
    """Gate every valid channel of ``scan``; invalid channels yield ``None``."""
    return [channel_gate(hist, i, ch.range_m, scan.t_s) if ch.valid else None
            for i, ch in enumerate(scan.channels)]


def select_cio(scan: LidarScan, gates: Sequence[GateResult | None]) -> Detection | None:
    best = None
    for ch, g in zip(scan.channels, gates):
        if ch.valid and g is GateResult.ACCEPTED and (best is None or ch.range_m < best):
            best = ch.range_m
    if best is None:
        return None
    return Detection(distance_m=best, source=Source.LIDAR, t_s=scan.t_s)


def project_cio_to_image(det: Detection, image_width_px: int, camera_hfov_deg: float,
                         lidar_hfov_deg: float) -> tuple[int, int]:
    """Pixel columns covered by the lidar's field of view (overlay only)."""
    if det.source is not Source.LIDAR:
        raise ValueError("only lidar detections are projected")
    if not (camera_hfov_deg >= lidar_hfov_deg > 0):
        raise ValueError("need camera_hfov_deg >= lidar_hfov_deg > 0")
    cx = image_width_px / 2.0
    f = (image_width_px / 2.0) / math.tan(math.radians(camera_hfov_deg) / 2.0)
    half = f * math.tan(math.radians(lidar_hfov_deg) / 2.0)
    lo = max(0, math.ceil(cx - half - 1e-9))
    hi = min(image_width_px - 1, math.floor(cx + half + 1e-9))
    return lo, hi


# ---------------------------------------------------------------------------
# CSV

def write_lidar_csv(path: str | Path, scans: Iterable[LidarScan]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LIDAR_CSV_HEADER)
        for s in scans:
            row = [repr(s.t_s)]
            for ch in s.channels:
                row += [repr(ch.range_m), "1" if ch.valid else "0"]
            w.writerow(row)


def read_lidar_csv(path: str | Path) -> list[LidarScan]:
    scans = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header != LIDAR_CSV_HEADER:
            raise SchemaError(f"expected header {','.join(LIDAR_CSV_HEADER)}", row=1)
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(LIDAR_CSV_HEADER):
                raise SchemaError(f"expected {len(LIDAR_CSV_HEADER)} columns, got {len(row)}",
                                  row=row_no)
            try:
                chans = []
                for i in range(N_CHANNELS):
                    valid = row[2 + 2 * i]
                    if valid not in ("0", "1"):
                        raise ValueError(f"validity flag must be 0 or 1, got {valid!r}")
                    chans.append(ChannelReading(float(row[1 + 2 * i]), valid == "1"))
                scans.append(LidarScan(t_s=float(row[0]), channels=tuple(chans)))
            except ValueError as exc:
                raise SchemaError(str(exc), row=row_no) from exc
    return scans
