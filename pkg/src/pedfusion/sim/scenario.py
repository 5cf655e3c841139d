"""Euro NCAP style crossing scenarios: configuration and kinematics.

Frames: the vehicle drives along +x from x = 0. Lateral offsets are measured
from the vehicle centerline, positive toward the far side (image right).
"""

from __future__ import annotations

import enum
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from ..errors import InfeasibleGeometry

KMH = 1.0 / 3.6


class Kind(enum.Enum):
    CVFA = "CVFA"
    CVNA25 = "CVNA25"
    CVNA75 = "CVNA75"


IMPACT_FRACTION = {Kind.CVFA: 0.50, Kind.CVNA25: 0.25, Kind.CVNA75: 0.75}
# side the pedestrian starts from: +1 far side, -1 near side
APPROACH_SIDE = {Kind.CVFA: +1, Kind.CVNA25: -1, Kind.CVNA75: -1}
DEFAULT_PED_SPEED = {Kind.CVFA: 8.0 * KMH, Kind.CVNA25: 5.0 * KMH, Kind.CVNA75: 5.0 * KMH}


@dataclass(frozen=True)
class CameraConfig:
    hfov_deg: float = 78.0
    height_m: float = 1.2
    fps: float = 30.0
    width_px: int = 640
    height_px: int = 480


@dataclass(frozen=True)
class LidarConfig:
    hfov_deg: float = 27.0
    vfov_deg: float = 11.0
    rate_hz: float = 100.0
    sigma_m: float = 0.10
    range_m: tuple[float, float] = (1.0, 10.0)
    mount_height_m: float = 0.8
    spike_prob: float = 0.0
    spike_m: float = 0.0


@dataclass(frozen=True)
class ExtraPedestrian:
    lon_m: float
    lat_m: float
    lat_speed_mps: float = 0.0
    start_time_s: float = 0.0


@dataclass(frozen=True)
class RoiConfig:
    """ROI vertices; ``None`` derives them from the camera geometry."""

    far_point: tuple[float, float] | None = None
    near_points: tuple[tuple[float, float], tuple[float, float]] | None = None
    half_width_px: float = 12.0
    far_distance_m: float = 30.0
    near_half_width_m: float = 1.75


@dataclass(frozen=True)
class ScenarioConfig:
    kind: Kind = Kind.CVFA
    vehicle_speed_mps: float = 15.0 * KMH
    ped_speed_mps: float | None = None
    impact_fraction: float | None = None
    vehicle_width_m: float = 1.8
    ped_size_m: tuple[float, float] = (0.5, 1.8)
    camera: CameraConfig = field(default_factory=CameraConfig)
    lidar: LidarConfig = field(default_factory=LidarConfig)
    seed: int = 0
    duration_s: float | None = None
    ambient_level: int = 255
    vehicle_start_distance_m: float = 30.0
    ped_start_time_s: float = 0.0
    extra_pedestrians: tuple[ExtraPedestrian, ...] = ()
    roi: RoiConfig = field(default_factory=RoiConfig)
    vision: dict = field(default_factory=dict)

    def __post_init__(self):
        kind = Kind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.ped_speed_mps is None:
            object.__setattr__(self, "ped_speed_mps", DEFAULT_PED_SPEED[kind])
        if self.impact_fraction is None:
            object.__setattr__(self, "impact_fraction", IMPACT_FRACTION[kind])
        elif abs(self.impact_fraction - IMPACT_FRACTION[kind]) > 1e-12:
            raise ValueError(f"impact_fraction {self.impact_fraction} does not match {kind.value}")
        if not 0 <= self.ambient_level <= 255:
            raise ValueError("ambient_level must be in [0, 255]")
        if self.vehicle_speed_mps <= 0:
            raise InfeasibleGeometry("vehicle speed must be positive")

    @property
    def impact_time_s(self) -> float:
        return self.vehicle_start_distance_m / self.vehicle_speed_mps

    @property
    def impact_offset_m(self) -> float:
        return (self.impact_fraction - 0.5) * self.vehicle_width_m

    @property
    def run_duration_s(self) -> float:
        return self.impact_time_s if self.duration_s is None else self.duration_s

    def with_overrides(self, **kw) -> "ScenarioConfig":
        return replace(self, **kw)

    # -- JSON -------------------------------------------------------------
    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "ScenarioConfig":
        d = dict(d)
        if "camera" in d:
            d["camera"] = CameraConfig(**d["camera"])
        if "lidar" in d:
            lid = dict(d["lidar"])
            if "range_m" in lid:
                lid["range_m"] = tuple(lid["range_m"])
            d["lidar"] = LidarConfig(**lid)
        if "roi" in d:
            roi = dict(d["roi"])
            if roi.get("far_point") is not None:
                roi["far_point"] = tuple(roi["far_point"])
            if roi.get("near_points") is not None:
                roi["near_points"] = tuple(tuple(p) for p in roi["near_points"])
            d["roi"] = RoiConfig(**roi)
        if "ped_size_m" in d:
            d["ped_size_m"] = tuple(d["ped_size_m"])
        if "extra_pedestrians" in d:
            d["extra_pedestrians"] = tuple(ExtraPedestrian(**p) for p in d["extra_pedestrians"])
        if "kind" in d:
            d["kind"] = Kind(d["kind"])
        return cls(**d)

    @classmethod
    def load(cls, path: str | Path) -> "ScenarioConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass(frozen=True)
class Pedestrian:
    """A pedestrian standing at ``lon_m`` who walks laterally from ``start_time_s``."""

    lon_m: float
    lat_m: float
    lat_speed_mps: float = 0.0
    start_time_s: float = 0.0
    width_m: float = 0.5
    height_m: float = 1.8


@dataclass(frozen=True)
class WorldState:
    t_s: float
    vehicle_x_m: float
    vehicle_speed_mps: float
    peds: tuple[Pedestrian, ...]

    @property
    def ped(self) -> Pedestrian:
        return self.peds[0]

    @property
    def ground_truth_distance_m(self) -> float:
        return self.peds[0].lon_m - self.vehicle_x_m

    def distance_to(self, ped: Pedestrian) -> float:
        return ped.lon_m - self.vehicle_x_m


@dataclass(frozen=True)
class Scenario:
    config: ScenarioConfig
    initial: WorldState
    impact_time_s: float
    impact_offset_m: float

    def world_at(self, t_s: float) -> WorldState:
        """Closed-form state at ``t_s``."""
        return step(self.initial, t_s - self.initial.t_s) if t_s > self.initial.t_s else self.initial


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    """Place the pedestrian so that, without braking, it meets the
    impact-fraction point of the vehicle front at the impact time.

    The pedestrian stands still until ``cfg.ped_start_time_s`` and then
    crosses at constant speed.
    """
    v_p = cfg.ped_speed_mps
    if not v_p > 0:
        raise InfeasibleGeometry("pedestrian speed must be positive to cross")
    t_imp = cfg.impact_time_s
    t0 = cfg.ped_start_time_s
    if not 0.0 <= t0 < t_imp:
        raise InfeasibleGeometry(
            f"pedestrian start time {t0} s must lie in [0, impact time {t_imp:.3f} s)")
    side = APPROACH_SIDE[cfg.kind]
    off = cfg.impact_offset_m
    lat_start = off + side * v_p * (t_imp - t0)
    w, h = cfg.ped_size_m
    primary = Pedestrian(lon_m=cfg.vehicle_start_distance_m, lat_m=lat_start,
                         lat_speed_mps=-side * v_p, start_time_s=t0, width_m=w, height_m=h)
    extras = tuple(Pedestrian(lon_m=e.lon_m, lat_m=e.lat_m, lat_speed_mps=e.lat_speed_mps,
                              start_time_s=e.start_time_s, width_m=w, height_m=h)
                   for e in cfg.extra_pedestrians)
    initial = WorldState(t_s=0.0, vehicle_x_m=0.0, vehicle_speed_mps=cfg.vehicle_speed_mps,
                         peds=(primary,) + extras)
    return Scenario(config=cfg, initial=initial, impact_time_s=t_imp, impact_offset_m=off)


def _advance_ped(p: Pedestrian, t0: float, dt: float) -> Pedestrian:
    moving = max(0.0, (t0 + dt) - max(t0, p.start_time_s))
    if moving == 0.0:
        return p
    return replace(p, lat_m=p.lat_m + p.lat_speed_mps * moving)


def step(world: WorldState, dt: float) -> WorldState:
    """Constant-velocity update; exact because all velocities are piecewise constant."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    return WorldState(
        t_s=world.t_s + dt,
        vehicle_x_m=world.vehicle_x_m + world.vehicle_speed_mps * dt,
        vehicle_speed_mps=world.vehicle_speed_mps,
        peds=tuple(_advance_ped(p, world.t_s, dt) for p in world.peds),
    )
