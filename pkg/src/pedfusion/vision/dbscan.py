"""Density-based clustering of image points."""

from __future__ import annotations

from collections import deque

import numpy as np
from scipy.spatial import cKDTree

NOISE = -1


def dbscan(points, eps: float, min_pts: int) -> np.ndarray:
    """Cluster labels (0, 1, ...) per point, or ``NOISE``.

    A point is core when at least ``min_pts`` points, itself included, lie
    within Euclidean distance ``eps``. Clusters are numbered in the order of
    their first core point in the input; a border point reachable from several
    clusters joins the lowest-numbered one.
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    if min_pts < 1:
        raise ValueError("min_pts must be >= 1")
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    n = len(pts)
    labels = np.full(n, NOISE, dtype=np.int64)
    if n == 0:
        return labels

    neighbours = cKDTree(pts).query_ball_point(pts, r=eps)
    core = np.array([len(nb) >= min_pts for nb in neighbours])
    visited = np.zeros(n, dtype=bool)
    cluster = 0
    for i in range(n):
        if visited[i] or not core[i]:
            continue
        visited[i] = True
        labels[i] = cluster
        queue = deque([i])
        while queue:
            j = queue.popleft()
            for k in sorted(neighbours[j]):
                if labels[k] == NOISE:
                    labels[k] = cluster
                if core[k] and not visited[k]:
                    visited[k] = True
                    queue.append(k)
        cluster += 1
    return labels
