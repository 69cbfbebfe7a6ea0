"""Hot kernels with a compiled core and a pure-Python fallback.

The compiled extension (``panoloc._kernels``) is used when it imports;
otherwise, or when ``PANOLOC_PURE_PYTHON=1`` is set, the torch/numpy
implementations below are used. Both backends compute identical results
(up to floating-point summation order) and are cross-checked in the tests.
"""

from __future__ import annotations

import contextlib
import logging
import os

import numpy as np
import torch

logger = logging.getLogger(__name__)

try:
    from . import _kernels as _compiled
except ImportError:  # pragma: no cover - depends on the build
    _compiled = None

AVAILABLE = ("compiled", "python") if _compiled is not None else ("python",)

if _compiled is not None and os.environ.get("PANOLOC_PURE_PYTHON") != "1":
    _backend = "compiled"
else:
    _backend = "python"
logger.debug("panoloc kernel backend: %s", _backend)


def backend() -> str:
    return _backend


def set_backend(name: str) -> None:
    global _backend
    if name not in AVAILABLE:
        raise ValueError(f"backend {name!r} unavailable; choose from {AVAILABLE}")
    _backend = name


@contextlib.contextmanager
def use_backend(name: str):
    previous = _backend
    set_backend(name)
    try:
        yield
    finally:
        set_backend(previous)


# ---------------------------------------------------------------------------
# four-tap interpolation plans


class InterpPlan:
    """Fixed four-tap linear map from a flat (S,) signal to P samples.

    ``idx`` holds flat source indices and ``weights`` the matching
    coefficients, both shaped (4, P). Per-dtype copies are made on demand.
    """

    def __init__(self, idx: np.ndarray, weights: np.ndarray, size: int):
        if idx.shape != weights.shape or idx.shape[0] != 4:
            raise ValueError("idx and weights must both be (4, P)")
        self.idx = np.ascontiguousarray(idx, dtype=np.int64)
        self.idx.setflags(write=False)
        self.size = int(size)
        self._weights64 = np.ascontiguousarray(weights, dtype=np.float64)
        self._idx_t = torch.from_numpy(self.idx.copy())
        self._by_dtype: dict = {}

    @property
    def num_samples(self) -> int:
        return self.idx.shape[1]

    def weights(self, dtype: torch.dtype):
        try:
            return self._by_dtype[dtype]
        except KeyError:
            w_t = torch.from_numpy(self._weights64.copy()).to(dtype)
            pair = (w_t.numpy(), w_t)
            self._by_dtype[dtype] = pair  # idempotent; racing writers store equal values
            return pair

    def dense(self) -> np.ndarray:
        """(P, S) matrix form, for small-case checks."""
        m = np.zeros((self.num_samples, self.size))
        rows = np.arange(self.num_samples)
        for q in range(4):
            np.add.at(m, (rows, self.idx[q]), self._weights64[q])
        return m


class _CompiledGather(torch.autograd.Function):
    @staticmethod
    def forward(ctx, x, plan):
        ctx.plan = plan
        w_np, _ = plan.weights(x.dtype)
        out = torch.empty((x.shape[0], plan.num_samples), dtype=x.dtype)
        _compiled.gather_wrap(x.detach().contiguous().numpy(), plan.idx, w_np, out.numpy())
        return out

    @staticmethod
    def backward(ctx, grad):
        plan = ctx.plan
        w_np, _ = plan.weights(grad.dtype)
        gx = torch.zeros((grad.shape[0], plan.size), dtype=grad.dtype)
        _compiled.scatter_wrap(grad.contiguous().numpy(), plan.idx, w_np, gx.numpy())
        return gx, None


def gather(x: torch.Tensor, plan: InterpPlan) -> torch.Tensor:
    """Apply ``plan`` to every row of ``x``: (N, S) -> (N, P)."""
    if x.dim() != 2 or x.shape[1] != plan.size:
        raise ValueError(f"expected a (rows, {plan.size}) tensor, got {tuple(x.shape)}")
    if x.dtype not in (torch.float32, torch.float64):
        raise TypeError("gather supports float32 and float64 only")
    if _backend == "compiled" and x.device.type == "cpu":
        return _CompiledGather.apply(x, plan)
    _, w_t = plan.weights(x.dtype)
    idx_t = plan._idx_t
    out = x.index_select(1, idx_t[0]) * w_t[0]
    for q in range(1, 4):
        out = out + x.index_select(1, idx_t[q]) * w_t[q]
    return out


# ---------------------------------------------------------------------------
# ray casting


def _cast_rays_numpy(dirs, origin, boxes):
    R = dirs.shape[0]
    t_hit = np.full(R, np.inf)
    box_hit = np.full(R, -1, dtype=np.int64)
    face_hit = np.full(R, -1, dtype=np.int64)
    if len(boxes) == 0:
        return t_hit, box_hit, face_hit
    chunk = max(1, 2_000_000 // len(boxes))
    for start in range(0, R, chunk):
        d = dirs[start:start + chunk, None, :]  # (r, 1, 3)
        lo = boxes[None, :, :3] - origin
        hi = boxes[None, :, 3:] - origin
        parallel = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = lo / d
            t2 = hi / d
        swapped = t1 > t2
        tmin = np.where(swapped, t2, t1)
        tmax = np.where(swapped, t1, t2)
        outside = parallel & ((0.0 < lo) | (0.0 > hi))
        tmin = np.where(parallel, -np.inf, tmin)
        tmax = np.where(parallel, np.inf, tmax)
        axis = np.argmax(tmin, axis=2)  # first axis wins ties, like the compiled loop
        tnear = np.take_along_axis(tmin, axis[..., None], 2)[..., 0]
        tfar = tmax.min(axis=2)
        ok = (tnear <= tfar) & (tnear > 0.0) & ~outside.any(axis=2)
        tnear = np.where(ok, tnear, np.inf)
        best = np.argmin(tnear, axis=1)
        tb = tnear[np.arange(len(best)), best]
        hit = np.isfinite(tb)
        sl = slice(start, start + len(best))
        t_hit[sl] = tb
        box_hit[sl] = np.where(hit, best, -1)
        ax = axis[np.arange(len(best)), best]
        sw = swapped[np.arange(len(best)), best, ax]
        face_hit[sl] = np.where(hit, 2 * ax + sw, -1)
    return t_hit, box_hit, face_hit


def cast_rays(dirs: np.ndarray, origin, boxes: np.ndarray):
    """Nearest axis-aligned box hit for rays leaving ``origin``.

    Returns ``(t, box_index, face)`` arrays; misses carry ``inf`` and ``-1``.
    ``face`` is ``2 * axis + 1`` when the ray enters through the box's max face.
    """
    dirs = np.ascontiguousarray(dirs, dtype=np.float64)
    boxes = np.ascontiguousarray(boxes, dtype=np.float64).reshape(-1, 6)
    origin = np.asarray(origin, dtype=np.float64)
    if _backend == "compiled":
        return _compiled.cast_rays(dirs, float(origin[0]), float(origin[1]), float(origin[2]), boxes)
    return _cast_rays_numpy(dirs, origin, boxes)
