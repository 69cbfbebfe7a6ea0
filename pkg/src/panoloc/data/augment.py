"""Photometric jitter, yaw roll and pixel noise for equirectangular images."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class AugmentParams:
    brightness: float = 0.2  # max relative change
    contrast: float = 0.2
    yaw_deg: float = 10.0  # max roll either way
    noise_std: float = 0.02

    @classmethod
    def off(cls) -> "AugmentParams":
        return cls(0.0, 0.0, 0.0, 0.0)


def roll_yaw(img: np.ndarray, degrees: float) -> np.ndarray:
    """Rotate the panorama about the vertical axis by whole columns."""
    W = img.shape[1]
    shift = int(round(degrees / 360.0 * W)) % W
    return np.roll(img, shift, axis=1) if shift else img.copy()


def augment_image(img: np.ndarray, seed, params: AugmentParams = AugmentParams()) -> np.ndarray:
    """Randomly jittered copy of an (H, W, 3) image; deterministic for a given seed."""
    rng = np.random.default_rng(seed)
    b = rng.uniform(-params.brightness, params.brightness)
    c = rng.uniform(-params.contrast, params.contrast)
    yaw = rng.uniform(-params.yaw_deg, params.yaw_deg)
    out = np.asarray(img, dtype=np.float32)
    if c:
        mean = out.mean(axis=(0, 1), keepdims=True)
        out = (out - mean) * np.float32(1 + c) + mean
    if b:
        out = out * np.float32(1 + b)
    out = roll_yaw(out, yaw)
    if params.noise_std > 0:
        out = out + rng.normal(0.0, params.noise_std, out.shape).astype(np.float32)
    return out
