"""Global map accumulation, sub-map cutting and ground removal."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .poses import Pose

logger = logging.getLogger(__name__)


class DegenerateLocationError(ValueError):
    """No map points fall inside the requested sub-map."""


@dataclass
class GlobalMap:
    points: np.ndarray  # (N, 3) map frame
    sequence: str = ""

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if not np.all(np.isfinite(self.points)):
            raise ValueError("map coordinates must be finite")


@dataclass
class Submap:
    points: np.ndarray  # (N, 3) in the local frame of the reference pose
    position: np.ndarray  # reference position, map frame
    heading: float = 0.0
    id: str = ""
    meta: dict = field(default_factory=dict)

    def __len__(self):
        return len(self.points)

    def with_points(self, points) -> "Submap":
        return Submap(points, self.position, self.heading, self.id, dict(self.meta))


def voxel_thin(points: np.ndarray, voxel_size: float) -> np.ndarray:
    """Keep the first point falling in each cubic voxel, preserving input order."""
    if voxel_size <= 0:
        raise ValueError("voxel size must be positive")
    if len(points) == 0:
        return points
    keys = np.floor(points / voxel_size).astype(np.int64)
    _, first = np.unique(keys, axis=0, return_index=True)
    return points[np.sort(first)]


def build_global_map(scans, poses, voxel_size: float | None = 0.2, sequence: str = "") -> GlobalMap:
    """Transform every sensor-frame scan by its pose and concatenate."""
    scans = list(scans)
    poses = list(poses)
    if len(scans) != len(poses):
        raise ValueError(f"{len(scans)} scans but {len(poses)} poses")
    parts = [pose.transform(np.asarray(scan, dtype=np.float64).reshape(-1, 3))
             for scan, pose in zip(scans, poses)]
    points = np.concatenate(parts) if parts else np.zeros((0, 3))
    if voxel_size:
        points = voxel_thin(points, voxel_size)
    return GlobalMap(points, sequence)


def _yaw_matrix(heading: float) -> np.ndarray:
    c, s = math.cos(heading), math.sin(heading)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def to_local(points: np.ndarray, position, heading: float) -> np.ndarray:
    """Map-frame points into the gravity-aligned frame of a pose (x forward, z up)."""
    return (np.asarray(points) - np.asarray(position)) @ _yaw_matrix(heading)


def cut_submap(global_map: GlobalMap, pose: Pose, radius: float = 30.0, submap_id: str = "") -> Submap:
    """Points within horizontal distance ``radius`` of the pose, in its local frame.

    The local frame keeps z vertical and rotates only by the pose heading.
    """
    if radius <= 0:
        raise ValueError("radius must be positive")
    offset = global_map.points[:, :2] - pose.position[:2]
    inside = np.einsum("ij,ij->i", offset, offset) <= radius * radius
    if not inside.any():
        raise DegenerateLocationError(
            f"no map points within {radius} m of frame {pose.frame_id} at {pose.position.tolist()}")
    local = to_local(global_map.points[inside], pose.position, pose.heading)
    return Submap(local, pose.position.copy(), pose.heading, submap_id or str(pose.frame_id))


def ransac_plane(points: np.ndarray, distance: float = 0.2, iterations: int = 200, seed=0):
    """Dominant plane by random sampling; the first best hypothesis wins ties.

    Returns ``(normal, offset, inlier_mask)`` or ``None`` if every sample was degenerate.
    """
    rng = np.random.default_rng(seed)
    n = len(points)
    best = None
    best_count = -1
    for _ in range(iterations):
        i, j, k = rng.choice(n, size=3, replace=False)
        normal = np.cross(points[j] - points[i], points[k] - points[i])
        norm = np.linalg.norm(normal)
        if norm < 1e-9:
            continue
        normal = normal / norm
        offset = -float(normal @ points[i])
        mask = np.abs(points @ normal + offset) <= distance
        count = int(mask.sum())
        if count > best_count:
            best, best_count = (normal, offset, mask), count
    return best


def remove_ground(submap: Submap, distance: float = 0.2, iterations: int = 200,
                  max_tilt_deg: float = 15.0, min_inlier_fraction: float = 0.5, seed=0) -> Submap:
    """Drop the dominant plane when it is near-horizontal and carries enough support.

    The plane is accepted as ground only if its normal is within ``max_tilt_deg``
    of vertical and at least ``min_inlier_fraction`` of the points are inliers;
    otherwise the sub-map is returned unchanged.
    """
    pts = np.asarray(submap.points, dtype=np.float64)
    if len(pts) < 50:
        raise ValueError(f"ground removal needs at least 50 points, got {len(pts)}")
    fit = ransac_plane(pts, distance, iterations, seed)
    if fit is None:
        return submap.with_points(pts)
    normal, _, mask = fit
    tilt = math.degrees(math.acos(min(1.0, abs(float(normal[2])))))
    if tilt > max_tilt_deg or mask.mean() < min_inlier_fraction:
        logger.debug("sub-map %s: dominant plane rejected (tilt %.1f deg, support %.2f)",
                     submap.id, tilt, mask.mean())
        return submap.with_points(pts)
    return submap.with_points(pts[~mask])
