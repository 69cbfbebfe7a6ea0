"""Projection-consistency oracle for synthetic image/sub-map pairs."""

from __future__ import annotations

import numpy as np

from panoloc.data.synth import BACKGROUND
from panoloc.sphere import sphere_to_pix


def projected_pixels(points: np.ndarray, H: int, W: int):
    """Nearest pixel (row, col) of each local-frame point seen from the sub-map origin."""
    p = np.asarray(points, dtype=np.float64)
    r = np.linalg.norm(p, axis=1)
    lat = np.arcsin(np.clip(p[:, 2] / r, -1.0, 1.0))
    lon = np.arctan2(p[:, 1], p[:, 0])
    row, col = sphere_to_pix(lat, lon, H, W)
    row = np.clip(np.rint(row).astype(int), 0, H - 1)
    col = np.rint(col).astype(int) % W
    return row, col


def consistency_fraction(image: np.ndarray, points: np.ndarray) -> float:
    """Share of points whose pixel differs from the background colour."""
    if len(points) == 0:
        return 1.0
    H, W = image.shape[:2]
    row, col = projected_pixels(points, H, W)
    not_bg = np.abs(image - BACKGROUND[None, None, :]).max(axis=-1) > 1e-6
    return float(not_bg[row, col].mean())
