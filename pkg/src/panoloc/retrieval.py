"""Descriptor databases, exact top-k search, recall metrics and descriptor files."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .data.mining import select_spaced

DESCRIPTOR_HEADER = "# panoloc-descriptors v1"
UNIT_TOL = 1e-4


@dataclass(frozen=True)
class RetrievalDatabase:
    """Immutable descriptor index; rows are unit vectors."""

    ids: tuple
    descriptors: np.ndarray  # (N, D) float64, read-only
    positions: np.ndarray  # (N, 3), read-only

    def __len__(self):
        return len(self.ids)

    def position_map(self) -> dict:
        return dict(zip(self.ids, self.positions))


def build_database(items) -> RetrievalDatabase:
    """Index ``(id, descriptor, position)`` items.

    Duplicate ids and descriptors whose norm is off by more than 1e-4 are
    rejected.
    """
    items = list(items)
    if not items:
        raise ValueError("cannot build an empty database")
    ids = tuple(str(i) for i, _, _ in items)
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise ValueError(f"duplicate id in database: {dup!r}")
    desc = np.array([np.asarray(d, dtype=np.float64).reshape(-1) for _, d, _ in items])
    norms = np.linalg.norm(desc, axis=1)
    bad = np.flatnonzero(np.abs(norms - 1.0) > UNIT_TOL)
    if len(bad):
        raise ValueError(f"descriptor {ids[bad[0]]!r} has norm {norms[bad[0]]:.6f}, expected 1")
    pos = np.array([_xyz(p) for _, _, p in items])
    desc.setflags(write=False)
    pos.setflags(write=False)
    return RetrievalDatabase(ids, desc, pos)


def _xyz(p) -> np.ndarray:
    """3-vector from an (x, y) or (x, y, z) position."""
    v = np.asarray(p, dtype=np.float64).reshape(-1)
    if v.size not in (2, 3):
        raise ValueError(f"position must have 2 or 3 components, got {v.size}")
    return v if v.size == 3 else np.append(v, 0.0)


def query_topk(db: RetrievalDatabase, query: np.ndarray, k: int) -> list[tuple[str, float]]:
    """The ``k`` nearest entries as (id, distance), nearest first.

    Distances are computed from the difference vectors, and equal distances
    are ordered by id so the result never depends on insertion order.
    """
    if not 1 <= k <= len(db):
        raise ValueError(f"k must be in [1, {len(db)}], got {k}")
    q = np.asarray(query, dtype=np.float64).reshape(-1)
    if q.shape[0] != db.descriptors.shape[1]:
        raise ValueError("query dimension does not match the database")
    dist = np.sqrt(((db.descriptors - q) ** 2).sum(axis=1))
    order = sorted(range(len(db)), key=lambda i: (dist[i], db.ids[i]))[:k]
    return [(db.ids[i], float(dist[i])) for i in order]


def horizontal_distance(a, b) -> np.ndarray:
    a, b = np.asarray(a, dtype=np.float64), np.asarray(b, dtype=np.float64)
    return np.hypot(a[..., 0] - b[..., 0], a[..., 1] - b[..., 1])


def _ranked_ids(row):
    return [r[0] if isinstance(r, tuple) else r for r in row]


def recall_at_k(results, query_positions, entry_positions, k: int, same_place: float = 20.0) -> float:
    """Percentage of queries with an entry within ``same_place`` m (horizontal, inclusive) in their top ``k``.

    ``results`` holds one ranked list per query, either of ids or of
    ``(id, distance)`` pairs; ``entry_positions`` maps id to position.
    """
    results = list(results)
    if not results:
        raise ValueError("empty query set")
    if isinstance(entry_positions, RetrievalDatabase):
        entry_positions = entry_positions.position_map()
    qpos = np.asarray(query_positions, dtype=np.float64).reshape(len(results), -1)
    hits = 0
    for row, qp in zip(results, qpos):
        top = _ranked_ids(row)[:k]
        if any(horizontal_distance(entry_positions[i], qp) <= same_place for i in top):
            hits += 1
    return 100.0 * hits / len(results)


def recall_at_1pct(results, query_positions, entry_positions, db_size: int,
                   same_place: float = 20.0) -> float:
    return recall_at_k(results, query_positions, entry_positions, one_percent_k(db_size), same_place)


def one_percent_k(n: int) -> int:
    return max(1, math.floor(n / 100))


def select_eval_queries(samples, spacing: float = 10.0) -> list[int]:
    return select_spaced(samples, spacing)


@dataclass
class RecallReport:
    direction: str
    ks: list
    recalls: list
    recall_1pct: float
    k_1pct: int
    num_queries: int
    num_database: int

    def as_text(self) -> str:
        lines = [f"{self.direction}: {self.num_queries} queries, {self.num_database} database entries",
                 f"  recall@1%  (k={self.k_1pct}): {self.recall_1pct:6.2f}%"]
        for k, r in zip(self.ks, self.recalls):
            if k in (1, 5, 10, 25) or k == self.ks[-1]:
                lines.append(f"  recall@{k:<3d}          : {r:6.2f}%")
        return "\n".join(lines)


def evaluate_direction(direction: str, query_desc, query_positions, db: RetrievalDatabase,
                       max_k: int = 25, same_place: float = 20.0) -> RecallReport:
    """Recall@1..max_k and recall@1% for one query set against one database."""
    q = np.asarray(query_desc, dtype=np.float64)
    top = min(max(max_k, one_percent_k(len(db))), len(db))
    ranked = [query_topk(db, d, top) for d in q]
    where = db.position_map()
    ks = list(range(1, min(max_k, len(db)) + 1))
    recalls = [recall_at_k(ranked, query_positions, where, k, same_place) for k in ks]
    return RecallReport(direction, ks, recalls,
                        recall_at_1pct(ranked, query_positions, where, len(db), same_place),
                        one_percent_k(len(db)), len(q), len(db))


def write_report(reports, out_dir) -> Path:
    """``report.txt`` with every direction plus one ``recall_<direction>.csv`` each."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "report.txt").write_text("\n\n".join(r.as_text() for r in reports) + "\n")
    for r in reports:
        with open(out_dir / f"recall_{r.direction}.csv", "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "recall"])
            for k, v in zip(r.ks, r.recalls):
                w.writerow([k, f"{v:.4f}"])
            w.writerow(["1%", f"{r.recall_1pct:.4f}"])
    return out_dir / "report.txt"


def write_descriptors(path, ids, positions, descriptors, modality: str) -> None:
    """Text header then ``id,x,y,z,d0..`` rows; floats are written so they round-trip."""
    desc = np.asarray(descriptors, dtype=np.float32)
    pos = np.array([_xyz(p) for p in positions]).reshape(-1, 3)
    if len(pos) != len(desc) or len(ids) != len(desc):
        raise ValueError("ids, positions and descriptors must have the same length")
    with open(path, "w", newline="") as fh:
        fh.write(f"{DESCRIPTOR_HEADER}\n# modality={modality} dim={desc.shape[1]}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["id", "x", "y", "z", *(f"d{j}" for j in range(desc.shape[1]))])
        for i, p, d in zip(ids, pos, desc):
            w.writerow([i, *(repr(float(v)) for v in p), *(format(v, ".9g") for v in d)])


def read_descriptors(path):
    """(ids, positions (N, 3), descriptors (N, D) float32, modality)."""
    with open(path) as fh:
        if fh.readline().strip() != DESCRIPTOR_HEADER:
            raise ValueError(f"{path} is not a panoloc descriptor file")
        meta = dict(kv.split("=", 1) for kv in fh.readline().lstrip("#").split())
        rows = list(csv.reader(fh))
    body = rows[1:]
    ids = [r[0] for r in body]
    pos = np.array([[float(v) for v in r[1:4]] for r in body]).reshape(-1, 3)
    desc = np.array([[float(v) for v in r[4:]] for r in body], dtype=np.float32).reshape(len(body), -1)
    return ids, pos, desc, meta.get("modality", "")
