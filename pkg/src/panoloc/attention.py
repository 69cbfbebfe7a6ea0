"""Squeeze-and-excitation channel re-calibration for local feature maps."""

from __future__ import annotations

import torch
from torch import nn

__all__ = ["squeeze", "excite", "recalibrate", "SEBlock"]


def squeeze(u: torch.Tensor) -> torch.Tensor:
    """Per-channel spatial mean: (B, C, *spatial) -> (B, C)."""
    if u.dim() < 3:
        raise ValueError("expected (B, C, *spatial)")
    if any(s == 0 for s in u.shape[2:]):
        raise ValueError("spatial dimensions must be non-empty")
    return u.flatten(2).mean(dim=2)


def excite(z: torch.Tensor, w1: torch.Tensor, w2: torch.Tensor) -> torch.Tensor:
    """Channel gates sigmoid(W2 relu(W1 z)).

    z: (B, C); w1: (C/r, C); w2: (C, C/r). Every gate lies in (0, 1).
    """
    C = z.shape[-1]
    if w1.shape[1] != C or w2.shape[0] != C or w2.shape[1] != w1.shape[0]:
        raise ValueError(f"weights {tuple(w1.shape)}, {tuple(w2.shape)} incompatible with C={C}")
    s = torch.sigmoid(torch.relu(z @ w1.T) @ w2.T)
    # a saturated sigmoid rounds to exactly 0 or 1; keep gates one ulp inside
    tiny = torch.finfo(s.dtype).eps
    return s.clamp(tiny, 1.0 - tiny)


def recalibrate(u: torch.Tensor, s: torch.Tensor) -> torch.Tensor:
    """Scale channel i of ``u`` (B, C, *spatial) by ``s[:, i]``."""
    if s.shape != u.shape[:2]:
        raise ValueError(f"scale shape {tuple(s.shape)} does not match {tuple(u.shape[:2])}")
    return u * s.reshape(*s.shape, *([1] * (u.dim() - 2)))


class SEBlock(nn.Module):
    def __init__(self, channels: int, reduction: int = 16):
        super().__init__()
        if reduction < 1 or channels % reduction:
            raise ValueError(f"reduction {reduction} must divide channels {channels}")
        self.fc1 = nn.Linear(channels, channels // reduction, bias=False)
        self.fc2 = nn.Linear(channels // reduction, channels, bias=False)

    def scale(self, u):
        return excite(squeeze(u), self.fc1.weight, self.fc2.weight)

    def forward(self, u):
        return recalibrate(u, self.scale(u))
