from .lidar_model import beam_hits, beam_sectors, sample_lidar
from .render import PinholeCamera, render_frame
from .scenario import (
    CameraConfig,
    ExtraPedestrian,
    Kind,
    LidarConfig,
    Pedestrian,
    RoiConfig,
    Scenario,
    ScenarioConfig,
    WorldState,
    build_scenario,
    step,
)

__all__ = [
    "CameraConfig", "ExtraPedestrian", "Kind", "LidarConfig", "Pedestrian", "PinholeCamera",
    "RoiConfig", "Scenario", "ScenarioConfig", "WorldState", "beam_hits", "beam_sectors",
    "build_scenario", "render_frame", "sample_lidar", "step",
]
