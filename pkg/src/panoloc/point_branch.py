"""Point-cloud feature extractor: a shared per-point MLP without global pooling."""

from __future__ import annotations

import numpy as np
import torch
from torch import nn

__all__ = ["subsample_points", "normalize_points", "PointFeatureExtractor", "extract_point_features"]


def subsample_points(points: np.ndarray, n: int, seed) -> np.ndarray:
    """Draw exactly ``n`` points uniformly.

    Without replacement when the cloud has at least ``n`` points, with
    replacement otherwise. ``seed`` is anything ``np.random.default_rng`` accepts.
    """
    points = np.asarray(points)
    if points.ndim != 2 or points.shape[1] != 3:
        raise ValueError("points must be an (N, 3) array")
    if len(points) == 0:
        raise ValueError("cannot subsample an empty submap")
    rng = np.random.default_rng(seed)
    replace = len(points) < n
    return points[rng.choice(len(points), size=n, replace=replace)]


def normalize_points(points: np.ndarray, scale: float) -> np.ndarray:
    """Scale sub-map coordinates (already centred on the sub-map pose) into roughly [-1, 1]."""
    if scale <= 0:
        raise ValueError("scale must be positive")
    return np.asarray(points, dtype=np.float32) / np.float32(scale)


class PointFeatureExtractor(nn.Module):
    """Shared MLP (1x1 convolutions + batch norm + ReLU) applied to every point.

    Maps (B, N, 3) clouds to (B, widths[-1], N, 1) per-point features.
    """

    def __init__(self, widths=(64, 64, 64, 128, 1024)):
        super().__init__()
        layers = []
        cin = 3
        for width in widths:
            layers += [nn.Conv1d(cin, width, 1, bias=False), nn.BatchNorm1d(width), nn.ReLU(inplace=True)]
            cin = width
        self.mlp = nn.Sequential(*layers)
        self.out_channels = cin

    def forward(self, points):
        if points.dim() != 3 or points.shape[-1] != 3:
            raise ValueError(f"expected (B, N, 3) points, got {tuple(points.shape)}")
        if not torch.isfinite(points).all():
            raise ValueError("point coordinates must be finite")
        return self.mlp(points.transpose(1, 2))[..., None]


def extract_point_features(points: torch.Tensor, model: PointFeatureExtractor) -> torch.Tensor:
    """(N, 3) or (B, N, 3) points -> (C, N, 1) or (B, C, N, 1) features."""
    single = points.dim() == 2
    out = model(points[None] if single else points)
    return out[0] if single else out
