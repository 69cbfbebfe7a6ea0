"""Rigid poses in KITTI-style text form: ``frame r11 r12 r13 t1 r21 ... r33 t3``."""

from __future__ import annotations

import math
import os
from dataclasses import dataclass

import numpy as np


class PoseFormatError(ValueError):
    pass


@dataclass(frozen=True)
class Pose:
    frame_id: int
    position: np.ndarray  # (3,) metres, map frame
    rotation: np.ndarray  # (3, 3) sensor-to-map

    @property
    def heading(self) -> float:
        """Yaw of the sensor x-axis in the map frame (radians)."""
        return math.atan2(self.rotation[1, 0], self.rotation[0, 0])

    def transform(self, points: np.ndarray) -> np.ndarray:
        return points @ self.rotation.T + self.position

    @classmethod
    def from_xy_heading(cls, frame_id: int, x: float, y: float, z: float, heading: float) -> "Pose":
        c, s = math.cos(heading), math.sin(heading)
        rot = np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])
        return cls(frame_id, np.array([x, y, z], dtype=np.float64), rot)


def orthonormality_error(rotation: np.ndarray) -> float:
    return float(np.linalg.norm(rotation.T @ rotation - np.eye(3)))


def parse_pose_line(line: str, lineno: int = 0, tol: float = 1e-6) -> Pose:
    fields = line.split()
    if len(fields) != 13:
        raise PoseFormatError(f"line {lineno}: expected 13 fields (frame + 12 values), got {len(fields)}")
    try:
        frame = int(fields[0])
        values = np.array([float(v) for v in fields[1:]], dtype=np.float64)
    except ValueError as exc:
        raise PoseFormatError(f"line {lineno}: {exc}") from None
    m = values.reshape(3, 4)
    rot = m[:, :3].copy()
    err = orthonormality_error(rot)
    if not np.all(np.isfinite(m)) or err >= tol or np.linalg.det(rot) <= 0:
        raise PoseFormatError(
            f"line {lineno}: rotation is not a proper orthonormal matrix "
            f"(|R^T R - I| = {err:.3g}, tolerance {tol:g}, det = {np.linalg.det(rot):.6g})")
    return Pose(frame, m[:, 3].copy(), rot)


def load_poses(path: str | os.PathLike, tol: float = 1e-6) -> list[Pose]:
    poses = []
    with open(path) as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            poses.append(parse_pose_line(line, lineno, tol))
    poses.sort(key=lambda p: p.frame_id)
    return poses


def write_poses(path: str | os.PathLike, poses) -> None:
    with open(path, "w") as fh:
        for p in poses:
            m = np.hstack([p.rotation, p.position[:, None]]).ravel()
            fh.write(f"{p.frame_id} " + " ".join(repr(float(v)) for v in m) + "\n")
