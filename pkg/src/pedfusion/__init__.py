"""Camera and short-range lidar fusion for frontal pedestrian detection."""

__version__ = "0.1.0"
