"""On-disk formats: packed float32 scans, PNG images and the sample manifest.

Raw sequences are laid out as ``<seq>/poses.txt``, ``<seq>/images/<frame>.png``
and ``<seq>/scans/<frame>.bin`` (little-endian float32 x, y, z triples).
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

MANIFEST_FORMAT = "panoloc-manifest"
MANIFEST_VERSION = 1

_SCAN_DTYPE = np.dtype("<f4")


def write_scan(path, points: np.ndarray) -> None:
    np.ascontiguousarray(points, dtype=_SCAN_DTYPE).reshape(-1, 3).tofile(path)


def read_scan(path) -> np.ndarray:
    data = np.fromfile(path, dtype=_SCAN_DTYPE)
    if data.size % 3:
        raise ValueError(f"{path}: size is not a multiple of three float32 values")
    return data.reshape(-1, 3)


def save_image(path, img: np.ndarray) -> None:
    """Store an (H, W, 3) image with values in [0, 1] as 8-bit PNG."""
    arr = np.clip(np.rint(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
    Image.fromarray(arr, mode="RGB").save(path, format="PNG", optimize=False)


def load_image(path, size: tuple[int, int] | None = None) -> np.ndarray:
    """(H, W, 3) float32 image in [0, 1], optionally resized to ``size`` = (H, W)."""
    with Image.open(path) as im:
        im = im.convert("RGB")
        if size is not None and (im.height, im.width) != tuple(size):
            im = im.resize((size[1], size[0]), Image.BILINEAR)
        return np.asarray(im, dtype=np.float32) / 255.0


@dataclass
class ManifestEntry:
    id: str
    position: tuple
    heading: float
    image: str
    submap: str
    sequence: str = ""
    frame: int = 0
    num_points: int = 0


def write_manifest(path, entries, meta: dict | None = None) -> None:
    doc = {
        "format": MANIFEST_FORMAT,
        "version": MANIFEST_VERSION,
        "meta": meta or {},
        "samples": [
            {
                "id": e.id,
                "sequence": e.sequence,
                "frame": int(e.frame),
                "position": [float(v) for v in e.position],
                "heading": float(e.heading),
                "image": e.image,
                "submap": e.submap,
                "num_points": int(e.num_points),
            }
            for e in entries
        ],
    }
    with open(path, "w") as fh:
        json.dump(doc, fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_manifest(path) -> tuple[list[ManifestEntry], dict, Path]:
    """Entries, metadata and the directory relative paths resolve against."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"manifest not found: {path}")
    with open(path) as fh:
        doc = json.load(fh)
    if doc.get("format") != MANIFEST_FORMAT:
        raise ValueError(f"{path} is not a panoloc manifest")
    if doc.get("version") != MANIFEST_VERSION:
        raise ValueError(f"{path}: unsupported manifest version {doc.get('version')}")
    entries = [ManifestEntry(s["id"], tuple(s["position"]), s["heading"], s["image"], s["submap"],
                             s.get("sequence", ""), s.get("frame", 0), s.get("num_points", 0))
               for s in doc["samples"]]
    return entries, doc.get("meta", {}), path.parent


def resolve(base: Path, rel: str) -> Path:
    p = Path(rel)
    return p if p.is_absolute() else base / p


def sequence_paths(root: os.PathLike, sequence: str) -> dict:
    seq = Path(root) / sequence
    return {"dir": seq, "poses": seq / "poses.txt", "images": seq / "images", "scans": seq / "scans"}
