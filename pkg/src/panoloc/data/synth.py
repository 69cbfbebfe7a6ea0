"""Procedural box worlds that yield geometrically consistent image/sub-map pairs.

A world is a flat ground plane (z = 0) plus axis-aligned coloured boxes placed
along a gently curving trajectory. Panoramas are ray-cast from each place with
the same pixel/sphere convention the network uses, and the point-cloud map is
sampled from the same surfaces, so every box point projects onto box pixels.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..kernels import cast_rays
from ..sphere import sphere_directions
from .maps import GlobalMap, Submap, cut_submap
from .poses import Pose

# shading per entry face: -x, +x, -y, +y, -z (bottom), +z (top)
FACE_SHADE = np.array([0.62, 0.86, 0.74, 0.95, 0.3, 1.0])
BACKGROUND = np.array([0.5, 0.5, 0.5])


@dataclass
class SamplePair:
    image: np.ndarray  # (H, W, 3) in [0, 1]
    submap: Submap
    position: np.ndarray  # (3,) map frame
    heading: float = 0.0
    id: str = ""


@dataclass
class SyntheticWorld:
    boxes: np.ndarray  # (B, 6): xmin, ymin, zmin, xmax, ymax, zmax
    colors: np.ndarray  # (B, 3)
    positions: np.ndarray  # (n, 2) trajectory places
    headings: np.ndarray  # (n,)
    camera_height: float = 1.7
    background: np.ndarray = field(default_factory=lambda: BACKGROUND.copy())

    def __post_init__(self):
        self.boxes = np.asarray(self.boxes, dtype=np.float64).reshape(-1, 6)
        self.colors = np.asarray(self.colors, dtype=np.float64).reshape(-1, 3)
        self.positions = np.asarray(self.positions, dtype=np.float64).reshape(-1, 2)
        self.headings = np.asarray(self.headings, dtype=np.float64).reshape(-1)

    def pose(self, k: int) -> Pose:
        x, y = self.positions[k]
        return Pose.from_xy_heading(k, x, y, self.camera_height, self.headings[k])

    def poses(self) -> list[Pose]:
        return [self.pose(k) for k in range(len(self.positions))]

    def render(self, xy, heading: float, size=(64, 128), supersample: int = 2,
               max_range: float = 120.0, return_mask: bool = False):
        """Equirectangular view from (x, y, camera_height); lon 0 looks along ``heading``."""
        H, W = size
        s = supersample
        dirs = sphere_directions(H * s, W * s).reshape(-1, 3)
        c, si = math.cos(heading), math.sin(heading)
        rot = np.array([[c, -si, 0.0], [si, c, 0.0], [0.0, 0.0, 1.0]])
        dirs = dirs @ rot.T
        origin = np.array([xy[0], xy[1], self.camera_height])
        near = self._boxes_near(origin, max_range)
        t, box, face = cast_rays(dirs, origin, self.boxes[near])
        hit = box >= 0
        rgb = np.tile(self.background, (len(dirs), 1))
        ids = np.flatnonzero(near)[box[hit]]
        rgb[hit] = self.colors[ids] * FACE_SHADE[face[hit]][:, None]
        img = rgb.reshape(H, s, W, s, 3).mean(axis=(1, 3)).astype(np.float32)
        if return_mask:
            return img, hit.reshape(H, s, W, s).any(axis=(1, 3))
        return img

    def _boxes_near(self, origin, max_range):
        if len(self.boxes) == 0:
            return np.zeros(0, dtype=bool)
        lo, hi = self.boxes[:, :2], self.boxes[:, 3:5]
        gap = np.maximum(0.0, np.maximum(lo - origin[:2], origin[:2] - hi))
        return np.hypot(gap[:, 0], gap[:, 1]) <= max_range

    def global_map(self, seed=0, ground_density: float = 3.0, box_density: float = 1.0,
                   extent: float = 35.0) -> GlobalMap:
        """Points sampled on the ground near the trajectory and on box surfaces."""
        rng = np.random.default_rng(seed)
        parts = []
        if len(self.positions):
            lo = self.positions.min(axis=0) - extent
            hi = self.positions.max(axis=0) + extent
            n = rng.poisson(ground_density * np.prod(hi - lo))
            g = rng.uniform(lo, hi, size=(n, 2))
            keep = np.zeros(n, dtype=bool)
            for p in self.positions:
                keep |= np.hypot(*(g - p).T) <= extent
            for b in self.boxes:
                keep &= ~((g[:, 0] >= b[0]) & (g[:, 0] <= b[3]) & (g[:, 1] >= b[1]) & (g[:, 1] <= b[4]))
            g = g[keep]
            parts.append(np.column_stack([g, np.zeros(len(g))]))
        for b in self.boxes:
            parts.append(_sample_box_surface(b, box_density, rng))
        pts = np.concatenate(parts) if parts else np.zeros((0, 3))
        return GlobalMap(pts, "synthetic")


def _sample_box_surface(box, density, rng):
    """Uniform points on the four walls and the roof of a box."""
    x0, y0, z0, x1, y1, z1 = box
    faces = [  # (fixed axis, value, span axes)
        (0, x0, (1, 2)), (0, x1, (1, 2)), (1, y0, (0, 2)), (1, y1, (0, 2)), (2, z1, (0, 1))]
    lo, hi = np.array([x0, y0, z0]), np.array([x1, y1, z1])
    out = []
    for axis, value, (a, b) in faces:
        area = (hi[a] - lo[a]) * (hi[b] - lo[b])
        n = rng.poisson(density * area)
        pts = np.empty((n, 3))
        pts[:, axis] = value
        pts[:, a] = rng.uniform(lo[a], hi[a], n)
        pts[:, b] = rng.uniform(lo[b], hi[b], n)
        out.append(pts)
    return np.concatenate(out)


def make_world(seed, n_places: int, spacing: float = 8.0, boxes_per_place: int = 3,
               camera_height: float = 1.7) -> SyntheticWorld:
    """Random trajectory of ``n_places`` stops ``spacing`` m apart, lined with boxes.

    Headings stay within one radian of the initial direction, so the path
    never loops back on itself.
    """
    if n_places < 1:
        raise ValueError("need at least one place")
    rng = np.random.default_rng(seed)
    h0 = rng.uniform(-math.pi, math.pi)
    headings = np.empty(n_places)
    positions = np.zeros((n_places, 2))
    h = h0
    for k in range(n_places):
        if k:
            h = float(np.clip(h + rng.normal(0.0, 0.12), h0 - 1.0, h0 + 1.0))
            positions[k] = positions[k - 1] + spacing * np.array([math.cos(h), math.sin(h)])
        headings[k] = h
    boxes, colors = [], []
    for k in range(n_places):
        fwd = np.array([math.cos(headings[k]), math.sin(headings[k])])
        left = np.array([-fwd[1], fwd[0]])
        placed = 0
        for _ in range(20 * boxes_per_place):
            if placed == boxes_per_place:
                break
            half = rng.uniform(1.0, 4.0, size=2)
            centre = (positions[k] + rng.uniform(-spacing / 2, spacing / 2) * fwd
                      + rng.choice([-1.0, 1.0]) * rng.uniform(7.0, 22.0) * left)
            lo, hi = centre - half, centre + half
            gap = np.maximum(0.0, np.maximum(lo - positions, positions - hi))
            if np.hypot(gap[:, 0], gap[:, 1]).min() < 3.0:
                continue  # keep the road clear
            if _grazing(lo, hi, positions):
                continue
            height = rng.uniform(2.0, 12.0)
            boxes.append([lo[0], lo[1], 0.0, hi[0], hi[1], height])
            colors.append(rng.uniform(0.05, 1.0, size=3))
            placed += 1
    return SyntheticWorld(np.array(boxes).reshape(-1, 6), np.array(colors).reshape(-1, 3),
                          positions, headings, camera_height)


def _grazing(lo, hi, positions, tol: float = 0.5, reach: float = 45.0) -> bool:
    """True if a nearby place lies within ``tol`` of a wall's plane, where the
    wall would be seen edge-on as a sliver no pixel centre hits."""
    near = positions[np.hypot(*(positions - (lo + hi) / 2).T) <= reach]
    if len(near) == 0:
        return False
    planes = np.abs(near[:, :, None] - np.stack([lo, hi], axis=1)[None])  # (n, axis, side)
    return bool((planes < tol).any())


def pairs_from_world(world: SyntheticWorld, global_map: GlobalMap, image_size=(64, 128),
                     radius: float = 30.0, prefix: str = "place") -> list[SamplePair]:
    pairs = []
    for k in range(len(world.positions)):
        pose = world.pose(k)
        sid = f"{prefix}{k:04d}"
        image = world.render(world.positions[k], world.headings[k], image_size)
        submap = cut_submap(global_map, pose, radius, sid)
        pairs.append(SamplePair(image, submap, pose.position.copy(), float(world.headings[k]), sid))
    return pairs


def synth_scene(seed, n_places: int, image_size=(64, 128), radius: float = 30.0,
                **world_kwargs) -> list[SamplePair]:
    """Paired panoramas and raw (ground-included) sub-maps for a fresh random world."""
    world = make_world(seed, n_places, **world_kwargs)
    return pairs_from_world(world, world.global_map(seed), image_size, radius)
