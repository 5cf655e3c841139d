"""Three-beam lidar return synthesis."""

from __future__ import annotations

import math

import numpy as np

from ..lidar import ChannelReading, LidarScan
from .scenario import ScenarioConfig, WorldState


def beam_sectors(hfov_deg: float, n: int = 3) -> list[tuple[float, float]]:
    """Equal angular sectors (degrees, left to right) partitioning the FOV."""
    width = hfov_deg / n
    lo = -hfov_deg / 2.0
    return [(lo + k * width, lo + (k + 1) * width) for k in range(n)]


def beam_hits(world: WorldState, cfg: ScenarioConfig) -> list[float | None]:
    """True forward distance seen by each beam, ``None`` when nothing is in its sector."""
    lc = cfg.lidar
    half_v = math.tan(math.radians(lc.vfov_deg) / 2.0)
    out: list[float | None] = []
    for a0, a1 in beam_sectors(lc.hfov_deg):
        best = None
        for p in world.peds:
            d = world.distance_to(p)
            if not d > 0:
                continue
            lo = math.degrees(math.atan2(p.lat_m - p.width_m / 2.0, d))
            hi = math.degrees(math.atan2(p.lat_m + p.width_m / 2.0, d))
            if max(lo, a0) > min(hi, a1):
                continue
            z0, z1 = lc.mount_height_m - d * half_v, lc.mount_height_m + d * half_v
            if max(z0, 0.0) > min(z1, p.height_m):
                continue
            if best is None or d < best:
                best = d
        out.append(best)
    return out


def sample_lidar(world: WorldState, cfg: ScenarioConfig, rng: np.random.Generator) -> LidarScan:
    """One scan. Random draws are made for every channel on every call so the
    stream stays aligned regardless of what is visible."""
    lc = cfg.lidar
    rmin, rmax = lc.range_m
    noise = rng.standard_normal(3) * lc.sigma_m
    spike_u = rng.random(3)
    spike_sign = rng.random(3)
    chans = []
    for i, d in enumerate(beam_hits(world, cfg)):
        if d is None or not (rmin <= d <= rmax):
            chans.append(ChannelReading(0.0, False))
            continue
        r = d + noise[i]
        if spike_u[i] < lc.spike_prob:
            r += lc.spike_m if spike_sign[i] < 0.5 else -lc.spike_m
        chans.append(ChannelReading(float(min(rmax, max(rmin, r))), True))
    return LidarScan(t_s=world.t_s, channels=tuple(chans))
