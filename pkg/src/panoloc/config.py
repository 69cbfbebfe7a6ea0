"""Run configuration: architecture switches, training constants and data paths."""

from __future__ import annotations

import dataclasses
import os
from dataclasses import dataclass, field
from pathlib import Path

import yaml

DATA_ROOT_ENV = "PANOLOC_DATA_ROOT"

# keys that must agree between a checkpoint and the config loading it
ARCH_KEYS = ("backbone", "attention", "image_size", "image_widths", "point_widths",
             "clusters", "descriptor_dim", "reduction")


@dataclass
class RunConfig:
    # architecture
    backbone: str = "spherical"  # spherical | planar
    attention: bool = True
    image_size: tuple = (512, 1024)
    image_widths: tuple = (64, 128, 256, 512)
    point_widths: tuple = (64, 64, 64, 128, 1024)
    num_points: int = 4096
    clusters: int = 64
    descriptor_dim: int = 256
    reduction: int = 16
    pretrained: str | None = None  # torchvision resnet18 state dict
    # objective
    margin: float = 0.5
    n_neg: int = 2
    mu: float = 1.0
    lam: float = 0.1
    nu: float = 1.0
    # optimisation
    batch_size: int = 8
    epochs: int = 50
    lr: float = 1e-4
    optimizer: str = "adam"  # adam | sgd | split
    momentum: float = 0.9
    lr_step: int | None = None  # epochs between decays; None keeps lr constant
    lr_gamma: float = 0.1
    seed: int = 0
    # augmentation
    augment: bool = True
    brightness: float = 0.2
    contrast: float = 0.2
    yaw_jitter_deg: float = 10.0
    noise_std: float = 0.02
    # data
    data_root: str | None = None
    submap_radius: float = 30.0
    voxel_size: float = 0.2
    point_scale: float | None = None  # defaults to submap_radius
    query_spacing: float = 3.0
    pos_radius: float = 20.0
    neg_radius: float = 40.0
    eval_spacing: float = 10.0
    same_place: float = 20.0
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.backbone not in ("spherical", "planar"):
            raise ValueError(f"backbone must be 'spherical' or 'planar', got {self.backbone!r}")
        if self.optimizer not in ("adam", "sgd", "split"):
            raise ValueError(f"optimizer must be adam, sgd or split, got {self.optimizer!r}")
        if isinstance(self.attention, str):
            self.attention = self.attention.lower() in ("on", "true", "yes", "1")
        self.image_size = tuple(int(v) for v in self.image_size)
        self.image_widths = tuple(int(v) for v in self.image_widths)
        self.point_widths = tuple(int(v) for v in self.point_widths)
        if self.margin <= 0:
            raise ValueError("margin must be positive")
        if self.n_neg < 1:
            raise ValueError("n_neg must be at least 1")

    @property
    def spherical(self) -> bool:
        return self.backbone == "spherical"

    @property
    def effective_point_scale(self) -> float:
        return self.point_scale if self.point_scale is not None else self.submap_radius

    def resolved_data_root(self) -> Path | None:
        root = os.environ.get(DATA_ROOT_ENV) or self.data_root
        return Path(root) if root else None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        for k, v in d.items():
            if isinstance(v, tuple):
                d[k] = list(v)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - names
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        return cls(**d)

    def replace(self, **changes) -> "RunConfig":
        return dataclasses.replace(self, **changes)

    def arch_mismatches(self, other: "RunConfig") -> list[str]:
        return [k for k in ARCH_KEYS if getattr(self, k) != getattr(other, k)]


def load_config(path: str | os.PathLike | None, **overrides) -> RunConfig:
    data = {}
    if path is not None:
        with open(path) as fh:
            data = yaml.safe_load(fh) or {}
    data.update({k: v for k, v in overrides.items() if v is not None})
    return RunConfig.from_dict(data)


def save_config(cfg: RunConfig, path: str | os.PathLike) -> None:
    with open(path, "w") as fh:
        yaml.safe_dump(cfg.to_dict(), fh, sort_keys=True)


def toy_config(**overrides) -> RunConfig:
    """Reduced-width settings for the desk-scale synthetic world."""
    base = dict(
        image_size=(128, 256),
        image_widths=(16, 32, 64, 128),
        point_widths=(32, 32, 32, 64, 128),
        num_points=1024,
        submap_radius=30.0,
    )
    base.update(overrides)
    return RunConfig(**base)
