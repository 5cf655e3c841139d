"""Main-sensor switch fusion policy and the two-level warning."""

from __future__ import annotations

import csv
import enum
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

from .calib import SpatialMap, align_camera_to_lidar
from .errors import SchemaError
from .lidar import Detection

LIDAR_BAND_MAX_M = 9.0
WARNING_SPLIT_M = 10.0
PERSISTENCE_S = 10 / 30

FUSION_CSV_HEADER = ["t_s", "main", "distance_m", "warning", "lidar_raw_m", "camera_raw_m"]


class MainSensor(enum.Enum):
    LIDAR = "lidar"
    CAMERA = "camera"
    FALLBACK = "fallback"
    NONE = "none"


class WarningLevel(enum.Enum):
    NONE = "none"
    YELLOW = "yellow"
    RED = "red"


@dataclass(frozen=True)
class EnvSignal:
    mean_intensity: float
    corner_count: int

    def __post_init__(self):
        if not 0.0 <= self.mean_intensity <= 255.0:
            raise ValueError("mean_intensity must lie in [0, 255]")


@dataclass(frozen=True)
class FusedOutput:
    t_s: float
    distance_m: float | None
    main_sensor: MainSensor
    warning: WarningLevel
    lidar_raw_m: float | None = None
    camera_raw_m: float | None = None

    def __post_init__(self):
        if self.distance_m is not None and self.main_sensor is MainSensor.NONE:
            raise ValueError("a distance needs a main sensor")


@dataclass
class FusionState:
    persistence_window_s: float = PERSISTENCE_S
    recent: deque = field(default_factory=deque)  # (t_s, distance_m, source)

    def __post_init__(self):
        if not self.persistence_window_s > 0:
            raise ValueError("persistence_window_s must be positive")

    @property
    def last_valid(self) -> tuple[float, float, MainSensor] | None:
        if not self.recent:
            return None
        t, d, s = self.recent[-1]
        return d, t, s

    def record(self, t_s: float, distance_m: float, source: MainSensor) -> None:
        self.recent.append((t_s, distance_m, source))
        self._expire(t_s)

    def _expire(self, t_s: float) -> None:
        while self.recent and t_s - self.recent[0][0] > self.persistence_window_s:
            self.recent.popleft()


@dataclass(frozen=True)
class FusionConfig:
    dark_threshold: float = 30.0
    min_corners: int = 8
    lidar_band_max_m: float = LIDAR_BAND_MAX_M


def camera_trusted(env: EnvSignal, dark_threshold: float = 30.0, min_corners: int = 8) -> bool:
    return env.mean_intensity >= dark_threshold and env.corner_count >= min_corners


def warn_level(distance_m: float | None) -> WarningLevel:
    if distance_m is None:
        return WarningLevel.NONE
    return WarningLevel.YELLOW if distance_m >= WARNING_SPLIT_M else WarningLevel.RED


def fuse(lidar_cio: Detection | None, camera_cio: Detection | None, env: EnvSignal,
         state: FusionState, smap: SpatialMap | None, t_s: float,
         config: FusionConfig = FusionConfig()) -> FusedOutput:
    """One frame of the fusion policy.

    The camera distance is brought into the lidar frame through ``smap``
    (skipped when ``smap`` is None, i.e. the caller already aligned it).
    Decision order: both sensors (lidar below the band edge wins, camera
    otherwise), lidar alone or an untrusted camera, trusted camera alone,
    then the persistence fallback.
    """
    trusted = camera_trusted(env, config.dark_threshold, config.min_corners)
    lidar_m = lidar_cio.distance_m if lidar_cio is not None else None
    camera_raw = camera_cio.distance_m if camera_cio is not None else None
    camera_m = None
    if camera_raw is not None:
        camera_m = align_camera_to_lidar(smap, camera_raw) if smap is not None else camera_raw

    if lidar_m is not None and camera_m is not None and trusted:
        if lidar_m < config.lidar_band_max_m:
            main, dist = MainSensor.LIDAR, lidar_m
        else:
            main, dist = MainSensor.CAMERA, camera_m
    elif lidar_m is not None:
        main, dist = MainSensor.LIDAR, lidar_m
    elif camera_m is not None and trusted:
        main, dist = MainSensor.CAMERA, camera_m
    else:
        state._expire(t_s)
        if state.recent:
            dist = min(d for _, d, _ in state.recent)
            main = MainSensor.FALLBACK
        else:
            dist, main = None, MainSensor.NONE
        return FusedOutput(t_s, dist, main, warn_level(dist), lidar_m, camera_raw)

    state.record(t_s, dist, main)
    return FusedOutput(t_s, dist, main, warn_level(dist), lidar_m, camera_raw)


# ---------------------------------------------------------------------------
# CSV

def _fmt(v: float | None) -> str:
    return "" if v is None else repr(float(v))


def _parse_opt(s: str) -> float | None:
    return None if s == "" else float(s)


def write_fusion_csv(path: str | Path, outputs: Iterable[FusedOutput]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(FUSION_CSV_HEADER)
        for o in outputs:
            w.writerow([repr(o.t_s), o.main_sensor.value, _fmt(o.distance_m), o.warning.value,
                        _fmt(o.lidar_raw_m), _fmt(o.camera_raw_m)])


def read_fusion_csv(path: str | Path) -> list[FusedOutput]:
    out = []
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != FUSION_CSV_HEADER:
            raise SchemaError(f"expected header {','.join(FUSION_CSV_HEADER)}", row=1)
        for row_no, row in enumerate(reader, start=2):
            if len(row) != len(FUSION_CSV_HEADER):
                raise SchemaError(f"expected {len(FUSION_CSV_HEADER)} columns", row=row_no)
            try:
                out.append(FusedOutput(float(row[0]), _parse_opt(row[2]), MainSensor(row[1]),
                                       WarningLevel(row[3]), _parse_opt(row[4]), _parse_opt(row[5])))
            except ValueError as exc:
                raise SchemaError(str(exc), row=row_no) from exc
    return out
