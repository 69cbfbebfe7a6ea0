"""Query selection and training-tuple mining by horizontal distance."""

from __future__ import annotations

import logging
from dataclasses import dataclass

import numpy as np

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class TrainingTuple:
    anchor: int
    positive: int
    negatives: tuple[int, ...]


def as_positions(samples) -> np.ndarray:
    """(N, 2) horizontal positions from an array or from objects with ``.position``."""
    if isinstance(samples, np.ndarray):
        arr = samples
    else:
        items = list(samples)
        if items and hasattr(items[0], "position"):
            arr = np.array([np.asarray(s.position, dtype=np.float64) for s in items])
        else:
            arr = np.asarray(items, dtype=np.float64)
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim != 2 or arr.shape[1] < 2:
        raise ValueError("positions must be (N, 2) or (N, 3)")
    return arr[:, :2]


def select_spaced(samples, spacing: float) -> list[int]:
    """Greedy pass in trajectory order keeping samples at least ``spacing`` m
    from every previously kept one."""
    pos = as_positions(samples)
    kept: list[int] = []
    for i, p in enumerate(pos):
        if kept:
            d = np.linalg.norm(pos[kept] - p, axis=1)
            if d.min() < spacing:
                continue
        kept.append(i)
    return kept


def _rng(seed, index):
    entropy = list(seed) if isinstance(seed, (tuple, list)) else [seed]
    return np.random.default_rng([*entropy, index])


def mine_training_tuples(samples, spacing: float = 3.0, pos_radius: float = 20.0,
                         neg_radius: float = 40.0, n_neg: int = 2, seed=0) -> list[TrainingTuple]:
    """One tuple per query: a positive closer than ``pos_radius`` and ``n_neg``
    negatives farther than ``neg_radius``, drawn uniformly.

    Each query draws from its own generator seeded by ``(seed, query index)``,
    so results do not depend on processing order. Queries lacking a positive
    or enough negatives are skipped.
    """
    pos = as_positions(samples)
    tuples = []
    skipped = 0
    for q in select_spaced(pos, spacing):
        d = np.linalg.norm(pos - pos[q], axis=1)
        positives = np.flatnonzero(d < pos_radius)
        positives = positives[positives != q]
        negatives = np.flatnonzero(d > neg_radius)
        if len(positives) == 0 or len(negatives) < n_neg:
            skipped += 1
            continue
        rng = _rng(seed, q)
        p = int(rng.choice(positives))
        negs = tuple(int(n) for n in rng.choice(negatives, size=n_neg, replace=False))
        tuples.append(TrainingTuple(int(q), p, negs))
    if skipped:
        logger.info("skipped %d queries without a positive or %d negatives", skipped, n_neg)
    return tuples
