"""Dataset preparation: raw sequences or synthetic worlds -> images, sub-maps and a manifest."""

from __future__ import annotations

import logging
import math
from pathlib import Path

import numpy as np

from .config import RunConfig
from .data.io import (ManifestEntry, load_image, read_scan, save_image, sequence_paths, write_manifest,
                      write_scan)
from .data.maps import build_global_map, cut_submap, remove_ground
from .data.poses import Pose, load_poses
from .data.synth import SamplePair, SyntheticWorld, make_world, pairs_from_world

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


class DatasetError(RuntimeError):
    """Raw data is missing or incomplete."""


def _ground_free(pair: SamplePair, index: int, cfg: RunConfig) -> SamplePair:
    sub = pair.submap
    if len(sub) >= 50:
        sub = remove_ground(sub, seed=(cfg.seed, index))
    return SamplePair(pair.image, sub, pair.position, pair.heading, pair.id)


def synthetic_pairs(n_places: int, seed: int, cfg: RunConfig):
    """World plus ground-free training pairs for ``n_places`` synthetic places."""
    world = make_world(seed, n_places)
    gmap = world.global_map(seed)
    raw = pairs_from_world(world, gmap, cfg.image_size, cfg.submap_radius)
    return world, gmap, [_ground_free(p, k, cfg) for k, p in enumerate(raw)]


def perturbed_pairs(world: SyntheticWorld, gmap, n: int, seed, cfg: RunConfig,
                    max_offset: float = 5.0, max_yaw_deg: float = 30.0) -> list[SamplePair]:
    """Fresh renders from viewpoints displaced by at most ``max_offset`` m from
    evenly spread training places, with a random heading change."""
    rng = np.random.default_rng(seed)
    picks = np.linspace(0, len(world.positions) - 1, n).round().astype(int)
    out = []
    for j, k in enumerate(picks):
        r = max_offset * math.sqrt(rng.uniform())
        a = rng.uniform(-math.pi, math.pi)
        xy = world.positions[k] + r * np.array([math.cos(a), math.sin(a)])
        heading = float(world.headings[k] + math.radians(rng.uniform(-max_yaw_deg, max_yaw_deg)))
        pose = Pose.from_xy_heading(10_000 + j, xy[0], xy[1], world.camera_height, heading)
        sid = f"view{j:04d}"
        pair = SamplePair(world.render(xy, heading, cfg.image_size), cut_submap(gmap, pose, cfg.submap_radius, sid),
                          pose.position.copy(), heading, sid)
        out.append(_ground_free(pair, 10_000 + j, cfg))
    return out


def write_pairs(pairs, out_dir, meta: dict | None = None, name: str = MANIFEST_NAME) -> Path:
    """Store images and sub-maps under ``out_dir`` and list them in a manifest."""
    out_dir = Path(out_dir)
    (out_dir / "images").mkdir(parents=True, exist_ok=True)
    (out_dir / "submaps").mkdir(parents=True, exist_ok=True)
    entries = []
    for p in pairs:
        img_rel, sub_rel = f"images/{p.id}.png", f"submaps/{p.id}.bin"
        save_image(out_dir / img_rel, p.image)
        write_scan(out_dir / sub_rel, p.submap.points)
        entries.append(ManifestEntry(p.id, tuple(float(v) for v in p.position), float(p.heading), img_rel, sub_rel,
                                     p.submap.meta.get("sequence", ""), int(p.submap.meta.get("frame", 0)),
                                     len(p.submap)))
    path = out_dir / name
    write_manifest(path, entries, meta)
    return path


def prepare_synthetic(out_dir, n_places: int, seed: int, cfg: RunConfig, heldout: int = 0) -> Path:
    """Write a synthetic dataset; ``heldout`` perturbed views go to ``heldout.json``."""
    world, gmap, pairs = synthetic_pairs(n_places, seed, cfg)
    meta = {"source": "synthetic", "n_places": n_places, "seed": seed,
            "image_size": list(cfg.image_size), "submap_radius": cfg.submap_radius}
    path = write_pairs(pairs, out_dir, meta)
    if heldout:
        views = perturbed_pairs(world, gmap, heldout, (seed, 1), cfg)
        write_pairs(views, out_dir, {**meta, "heldout": heldout}, "heldout.json")
    return path


def _frame_file(directory: Path, frame: int, suffix: str) -> Path:
    return directory / f"{frame:06d}{suffix}"


def discover_sequences(root) -> list[str]:
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"data root {root} does not exist")
    seqs = sorted(p.name for p in root.iterdir() if (p / "poses.txt").is_file())
    if not seqs:
        raise DatasetError(f"no sequences with a poses.txt found under {root}")
    return seqs


def prepare_sequences(root, out_dir, cfg: RunConfig, sequences=None) -> Path:
    """Build each sequence's map, cut and clean one sub-map per pose, write the manifest."""
    root = Path(root)
    sequences = list(sequences) if sequences else discover_sequences(root)
    pairs = []
    for seq in sequences:
        paths = sequence_paths(root, seq)
        if not paths["poses"].is_file():
            raise DatasetError(f"missing poses file: {paths['poses']}")
        poses = load_poses(paths["poses"])
        missing = [str(f) for pose in poses for f in (_frame_file(paths["scans"], pose.frame_id, ".bin"),
                                                       _frame_file(paths["images"], pose.frame_id, ".png"))
                   if not f.is_file()]
        if missing:
            raise DatasetError(f"sequence {seq} is incomplete: {len(missing)} files missing, first {missing[0]}")
        scans = [read_scan(_frame_file(paths["scans"], p.frame_id, ".bin")) for p in poses]
        gmap = build_global_map(scans, poses, cfg.voxel_size, seq)
        for k, pose in enumerate(poses):
            sid = f"{seq}_{pose.frame_id:06d}"
            sub = cut_submap(gmap, pose, cfg.submap_radius, sid)
            sub.meta.update(sequence=seq, frame=pose.frame_id)
            img = load_image(_frame_file(paths["images"], pose.frame_id, ".png"), cfg.image_size)
            pairs.append(_ground_free(SamplePair(img, sub, pose.position.copy(), pose.heading, sid), len(pairs), cfg))
        logger.info("sequence %s: %d samples", seq, len(poses))
    meta = {"source": str(root), "sequences": sequences, "image_size": list(cfg.image_size),
            "submap_radius": cfg.submap_radius}
    return write_pairs(pairs, out_dir, meta)
