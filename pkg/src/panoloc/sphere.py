"""Equirectangular <-> sphere conventions and distortion-aware sampling grids.

Pixel centres map linearly to the viewing sphere::

    lat = pi/2 - pi * (row + 0.5) / H        (north pole at the top)
    lon = 2 * pi * (col + 0.5) / W - pi      (lon in [-pi, pi))

Kernel taps are laid out on the plane tangent to the sphere at each output
pixel and projected back with the inverse gnomonic projection, so a filter
covers the same solid angle at every latitude and wraps around the seam.
"""

from __future__ import annotations

import math
import threading
from dataclasses import dataclass

import numpy as np
import torch

from .kernels import InterpPlan, gather

__all__ = [
    "SphereCoord",
    "SamplingGrid",
    "pix_to_sphere",
    "sphere_to_pix",
    "sphere_directions",
    "gnomonic_taps",
    "gnomonic_grid",
    "interp_plan",
    "bilinear_sample_wrap",
]


@dataclass(frozen=True)
class SphereCoord:
    lat: float | np.ndarray
    lon: float | np.ndarray


def _check_index(value, size, name):
    arr = np.asarray(value)
    if np.any(arr < 0) or np.any(arr >= size):
        raise ValueError(f"{name} index out of range [0, {size})")


def pix_to_sphere(row, col, H: int, W: int) -> SphereCoord:
    """Latitude/longitude (radians) of pixel centres; accepts scalars or arrays."""
    _check_index(row, H, "row")
    _check_index(col, W, "col")
    row = np.asarray(row, dtype=np.float64)
    col = np.asarray(col, dtype=np.float64)
    lat = math.pi / 2 - math.pi * (row + 0.5) / H
    lon = 2 * math.pi * (col + 0.5) / W - math.pi
    if lat.ndim == 0:
        return SphereCoord(float(lat), float(lon))
    return SphereCoord(lat, lon)


def sphere_to_pix(lat, lon, H: int, W: int):
    """Fractional (row, col) of a sphere location; ``col`` is wrapped into [0, W)."""
    lat = np.asarray(lat, dtype=np.float64)
    lon = np.asarray(lon, dtype=np.float64)
    if np.any(np.abs(lat) > math.pi / 2 + 1e-12):
        raise ValueError("latitude outside [-pi/2, pi/2]")
    row = (math.pi / 2 - lat) * H / math.pi - 0.5
    col = np.mod((lon + math.pi) * W / (2 * math.pi) - 0.5, W)
    col = np.where(col >= W, col - W, col)  # mod of a tiny negative rounds up to W
    if row.ndim == 0:
        return float(row), float(col)
    return row, col


def sphere_directions(H: int, W: int) -> np.ndarray:
    """Unit viewing rays (H, W, 3) for every pixel; lon 0 looks along +x, lat +pi/2 along +z."""
    coord = pix_to_sphere(*np.meshgrid(np.arange(H), np.arange(W), indexing="ij"), H, W)
    cl = np.cos(coord.lat)
    return np.stack([cl * np.cos(coord.lon), cl * np.sin(coord.lon), np.sin(coord.lat)], axis=-1)


def gnomonic_taps(lat0, lon0, kh: int, kw: int, dlat: float, dlon: float):
    """Sphere locations of a kh x kw kernel centred at (lat0, lon0).

    Tap (i, j) (centred indices, ``i`` growing down the image like pixel rows)
    sits at tangent-plane coordinates x = j*tan(dlon), y = -i*tan(dlat) and is
    mapped back with the inverse gnomonic projection. Returns ``(lat, lon)``
    arrays of shape (kh, kw); ``lon`` is not wrapped.
    """
    i = np.arange(kh, dtype=np.float64) - kh // 2
    j = np.arange(kw, dtype=np.float64) - kw // 2
    jj, ii = np.meshgrid(j, i)
    x = jj * math.tan(dlon)
    y = -ii * math.tan(dlat)
    rho = np.hypot(x, y)
    nu = np.arctan(rho)
    sin_nu, cos_nu = np.sin(nu), np.cos(nu)
    s0, c0 = math.sin(lat0), math.cos(lat0)
    safe = np.where(rho == 0.0, 1.0, rho)
    arg = np.clip(cos_nu * s0 + y * sin_nu * c0 / safe, -1.0, 1.0)
    lat = np.where(rho == 0.0, lat0, np.arcsin(arg))
    dlon_tap = np.arctan2(x * sin_nu, rho * c0 * cos_nu - y * s0 * sin_nu)
    lon = lon0 + np.where(rho == 0.0, 0.0, dlon_tap)
    return lat, lon


@dataclass(frozen=True)
class SamplingGrid:
    """Gnomonic tap positions for every pixel of an H x W map.

    Taps depend only on latitude, so the grid is stored per row: ``rows`` holds
    the fractional source row of each tap and ``col_offsets`` the fractional
    column offset from the output pixel, both shaped (H, kh, kw). ``taps``
    expands this to the full (H, W, kh, kw, 2) array of (row, col) with the
    column taken modulo W.
    """

    resolution: tuple[int, int]
    kernel: tuple[int, int]
    rows: np.ndarray
    col_offsets: np.ndarray

    @property
    def taps(self) -> np.ndarray:
        H, W = self.resolution
        kh, kw = self.kernel
        out = np.empty((H, W, kh, kw, 2))
        out[..., 0] = self.rows[:, None]
        cols = np.arange(W, dtype=np.float64)[None, :, None, None]
        out[..., 1] = np.mod(cols + self.col_offsets[:, None], W)
        return out


_grid_cache: dict = {}
_plan_cache: dict = {}
_cache_lock = threading.Lock()


def _build_grid(H, W, kh, kw):
    dlat = math.pi / H
    dlon = 2 * math.pi / W
    rows = np.empty((H, kh, kw))
    offsets = np.empty((H, kh, kw))
    for r in range(H):
        lat0 = math.pi / 2 - math.pi * (r + 0.5) / H
        lat, lon = gnomonic_taps(lat0, 0.0, kh, kw, dlat, dlon)
        rows[r] = (math.pi / 2 - lat) * H / math.pi - 0.5
        offsets[r] = lon * W / (2 * math.pi)
    rows.setflags(write=False)
    offsets.setflags(write=False)
    return SamplingGrid((H, W), (kh, kw), rows, offsets)


def gnomonic_grid(H: int, W: int, kh: int, kw: int) -> SamplingGrid:
    """Cached gnomonic sampling grid for an H x W equirectangular map."""
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"kernel dimensions must be odd, got {kh}x{kw}")
    # one-pixel steps of 90 degrees or more have no finite tangent-plane image
    if (kh > 1 and H < 3) or (kw > 1 and W < 5):
        raise ValueError(f"map {H}x{W} is too coarse for a {kh}x{kw} gnomonic kernel")
    key = (H, W, kh, kw)
    grid = _grid_cache.get(key)
    if grid is None:
        with _cache_lock:
            grid = _grid_cache.get(key)
            if grid is None:
                grid = _build_grid(H, W, kh, kw)
                _grid_cache[key] = grid
    return grid


def _build_plan(grid: SamplingGrid, stride: int) -> InterpPlan:
    H, W = grid.resolution
    kh, kw = grid.kernel
    out_rows = np.arange(0, H, stride)
    out_cols = np.arange(0, W, stride)
    # tap-major layout: sample p = ((a * kw + b) * Ho + ho) * Wo + wo
    rows = grid.rows[out_rows].transpose(1, 2, 0)[..., None]  # (kh, kw, Ho, 1)
    offs = grid.col_offsets[out_rows].transpose(1, 2, 0)[..., None]
    r0 = np.floor(rows)
    fr = rows - r0
    # integer part and fraction come from the per-row offset alone, which keeps
    # sampling exactly equivariant to integer column shifts
    c_floor = np.floor(offs)
    fc = offs - c_floor
    c0 = np.mod(out_cols[None, None, None, :] + c_floor.astype(np.int64), W)
    c1 = np.mod(c0 + 1, W)
    r0i = np.clip(r0.astype(np.int64), 0, H - 1)
    r1i = np.clip(r0.astype(np.int64) + 1, 0, H - 1)
    shape = (kh, kw, len(out_rows), len(out_cols))
    r0i, r1i, c0, c1 = (np.broadcast_to(a, shape) for a in (r0i, r1i, c0, c1))
    fr = np.broadcast_to(fr, shape)
    fc = np.broadcast_to(fc, shape)
    idx = np.stack([r0i * W + c0, r0i * W + c1, r1i * W + c0, r1i * W + c1]).reshape(4, -1)
    w = np.stack([(1 - fr) * (1 - fc), (1 - fr) * fc, fr * (1 - fc), fr * fc]).reshape(4, -1)
    return InterpPlan(idx, w, H * W)


def interp_plan(H: int, W: int, kh: int, kw: int, stride: int = 1) -> InterpPlan:
    """Cached bilinear plan sampling the gnomonic grid at every ``stride``-th pixel.

    Output pixel (ho, wo) uses the taps of input pixel (stride*ho, stride*wo).
    """
    if stride < 1:
        raise ValueError("stride must be positive")
    key = (H, W, kh, kw, stride)
    plan = _plan_cache.get(key)
    if plan is None:
        grid = gnomonic_grid(H, W, kh, kw)
        with _cache_lock:
            plan = _plan_cache.get(key)
            if plan is None:
                plan = _build_plan(grid, stride)
                _plan_cache[key] = plan
    return plan


def sample_taps(x: torch.Tensor, kh: int, kw: int, stride: int = 1) -> torch.Tensor:
    """Gather gnomonic taps: (B, C, H, W) -> (B, C, kh*kw, Ho, Wo)."""
    B, C, H, W = x.shape
    plan = interp_plan(H, W, kh, kw, stride)
    Ho, Wo = -(-H // stride), -(-W // stride)
    out = gather(x.reshape(B * C, H * W), plan)
    return out.reshape(B, C, kh * kw, Ho, Wo)


def bilinear_sample_wrap(feature_map: torch.Tensor, grid: SamplingGrid) -> torch.Tensor:
    """Sample a (C, H, W) or (B, C, H, W) map at every tap of ``grid``.

    Columns wrap modulo W and rows clamp to [0, H-1]. Returns
    (..., C, H, W, kh, kw).
    """
    if feature_map.dim() not in (3, 4):
        raise ValueError("feature map must be (C, H, W) or (B, C, H, W)")
    H, W = feature_map.shape[-2:]
    if (H, W) != tuple(grid.resolution):
        raise ValueError(f"grid resolution {grid.resolution} does not match map {(H, W)}")
    kh, kw = grid.kernel
    x = feature_map if feature_map.dim() == 4 else feature_map[None]
    cached = _grid_cache.get((H, W, kh, kw))
    if cached is grid:
        plan = interp_plan(H, W, kh, kw, 1)
    else:
        plan = _build_plan(grid, 1)
    B, C = x.shape[:2]
    out = gather(x.reshape(B * C, H * W), plan).reshape(B, C, kh, kw, H, W)
    out = out.permute(0, 1, 4, 5, 2, 3)
    return out if feature_map.dim() == 4 else out[0]
