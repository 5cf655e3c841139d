from .corners import Corner, min_eigen_map, shi_tomasi
from .dbscan import NOISE, dbscan
from .detect import (
    CameraParams,
    CameraTrackState,
    camera_detect,
    detect_candidates,
    gate_candidates,
    read_detections_csv,
    select_cio_camera,
    write_detections_csv,
)
from .flow import FlowStatus, FlowVector, lk_flow
from .image import GrayFrame, read_pgm, write_pgm
from .roi import RoiMask, compute_roi, full_mask, mask_threshold

__all__ = [
    "CameraParams", "CameraTrackState", "Corner", "FlowStatus", "FlowVector", "GrayFrame",
    "NOISE", "RoiMask", "camera_detect", "compute_roi", "dbscan", "detect_candidates",
    "full_mask", "gate_candidates", "lk_flow", "mask_threshold", "min_eigen_map", "read_detections_csv",
    "read_pgm", "select_cio_camera", "shi_tomasi", "write_detections_csv", "write_pgm",
]
