"""Datasets, the joint training loop, checkpoints and embedding."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch

from .config import RunConfig
from .data.augment import AugmentParams, augment_image
from .data.io import load_image, read_manifest, read_scan, resolve
from .data.mining import mine_training_tuples
from .losses import DescriptorTuple, LossWeights, loss_terms
from .model import CrossModalNet
from .point_branch import normalize_points, subsample_points

logger = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "panoloc-checkpoint"
CHECKPOINT_VERSION = 1
LOSS_KEYS = ("total", "cross_modal", "same_modal", "anchor")


class NonFiniteLossError(RuntimeError):
    pass


class CheckpointMismatchError(ValueError):
    pass


@dataclass
class PairDataset:
    """Images (H, W, 3 in [0, 1]) and ground-free sub-map clouds, index-aligned."""

    ids: list
    images: list
    points: list
    positions: np.ndarray  # (N, 3)
    headings: np.ndarray = field(default_factory=lambda: np.zeros(0))

    def __len__(self):
        return len(self.ids)

    @classmethod
    def from_manifest(cls, path, image_size) -> "PairDataset":
        entries, _, base = read_manifest(path)
        images, points = [], []
        for e in entries:
            img_path, sub_path = resolve(base, e.image), resolve(base, e.submap)
            for p in (img_path, sub_path):
                if not p.is_file():
                    raise FileNotFoundError(f"manifest {path} references missing file {p}")
            images.append(load_image(img_path, image_size))
            points.append(read_scan(sub_path))
        return cls([e.id for e in entries], images, points,
                   np.array([e.position for e in entries], dtype=np.float64).reshape(-1, 3),
                   np.array([e.heading for e in entries], dtype=np.float64))

    @classmethod
    def from_pairs(cls, pairs) -> "PairDataset":
        return cls([p.id for p in pairs], [p.image for p in pairs],
                   [np.asarray(p.submap.points, dtype=np.float32) for p in pairs],
                   np.array([p.position for p in pairs], dtype=np.float64).reshape(-1, 3),
                   np.array([p.heading for p in pairs], dtype=np.float64))

    def channel_stats(self):
        stack = np.stack(self.images).reshape(-1, 3).astype(np.float64)
        mean = stack.mean(axis=0)
        std = np.maximum(stack.std(axis=0), 1e-3)
        return mean.tolist(), std.tolist()


def image_tensor(img: np.ndarray, mean, std) -> torch.Tensor:
    """(H, W, 3) image -> normalized (3, H, W) float32 tensor."""
    x = (np.asarray(img, dtype=np.float32) - np.asarray(mean, dtype=np.float32)) / np.asarray(std, dtype=np.float32)
    return torch.from_numpy(np.ascontiguousarray(x.transpose(2, 0, 1)))


def point_tensor(points: np.ndarray, cfg: RunConfig, seed) -> torch.Tensor:
    pts = subsample_points(points, cfg.num_points, seed)
    return torch.from_numpy(normalize_points(pts, cfg.effective_point_scale))


def augment_params(cfg: RunConfig) -> AugmentParams:
    if not cfg.augment:
        return AugmentParams.off()
    return AugmentParams(cfg.brightness, cfg.contrast, cfg.yaw_jitter_deg, cfg.noise_std)


def build_optimizers(model: CrossModalNet, cfg: RunConfig):
    if cfg.optimizer == "adam":
        return [torch.optim.Adam(model.parameters(), lr=cfg.lr)]
    if cfg.optimizer == "sgd":
        return [torch.optim.SGD(model.parameters(), lr=cfg.lr, momentum=cfg.momentum)]
    # split: SGD for the image branch, Adam for the point branch
    return [torch.optim.SGD(model.image.parameters(), lr=cfg.lr, momentum=cfg.momentum),
            torch.optim.Adam(model.point.parameters(), lr=cfg.lr)]


def build_schedulers(optimizers, cfg: RunConfig):
    if not cfg.lr_step:
        return []
    return [torch.optim.lr_scheduler.StepLR(o, cfg.lr_step, cfg.lr_gamma) for o in optimizers]


def save_checkpoint(path, model, cfg: RunConfig, epoch: int, optimizers=(), schedulers=(),
                    image_stats=None, history=None) -> None:
    state = {
        "format": CHECKPOINT_FORMAT,
        "version": CHECKPOINT_VERSION,
        "config": cfg.to_dict(),
        "epoch": epoch,
        "model": model.state_dict(),
        "optimizers": [o.state_dict() for o in optimizers],
        "schedulers": [s.state_dict() for s in schedulers],
        "image_mean": list(image_stats[0]) if image_stats else [0.5, 0.5, 0.5],
        "image_std": list(image_stats[1]) if image_stats else [0.25, 0.25, 0.25],
        "history": list(history or []),
    }
    tmp = Path(str(path) + ".tmp")
    torch.save(state, tmp)
    tmp.replace(path)


def load_checkpoint(path, cfg: RunConfig | None = None):
    """Model rebuilt from the stored config, plus the raw checkpoint dict.

    When ``cfg`` is given its architecture keys must match the checkpoint's.
    """
    state = torch.load(path, map_location="cpu", weights_only=False)
    if state.get("format") != CHECKPOINT_FORMAT:
        raise CheckpointMismatchError(f"{path} is not a panoloc checkpoint")
    if state.get("version") != CHECKPOINT_VERSION:
        raise CheckpointMismatchError(f"{path}: unsupported checkpoint version {state.get('version')}")
    stored = RunConfig.from_dict({**state["config"], "pretrained": None})
    if cfg is not None:
        bad = stored.arch_mismatches(cfg)
        if bad:
            detail = ", ".join(f"{k}: checkpoint={getattr(stored, k)!r} config={getattr(cfg, k)!r}" for k in bad)
            raise CheckpointMismatchError(f"{path} does not match the configuration ({detail})")
    model = CrossModalNet.from_config(stored)
    model.load_state_dict(state["model"])
    model.eval()
    return model, state


WARM_START_SAMPLES = 64
WARM_START_FEATURES = 20_000


@torch.no_grad()
def warm_start_clusters(model: CrossModalNet, dataset: PairDataset, cfg: RunConfig, stats) -> None:
    """Place both NetVLAD layers' centres by k-means on initial local features."""
    rng = np.random.default_rng([cfg.seed, 991])
    members = np.sort(rng.choice(len(dataset), size=min(WARM_START_SAMPLES, len(dataset)), replace=False))
    # batch statistics, as during training; fresh running statistics are meaningless
    was_training = model.training
    model.train()
    images = torch.stack([image_tensor(dataset.images[i], *stats) for i in members])
    clouds = torch.stack([point_tensor(dataset.points[i], cfg, (cfg.seed, 991, int(i))) for i in members])
    for encoder, batch in ((model.image, images), (model.point, clouds)):
        feats = encoder.head.local_features(encoder.local_features(batch)).reshape(-1, encoder.head.vlad.centers.shape[1])
        feats = feats.numpy()
        if len(feats) > WARM_START_FEATURES:
            feats = feats[rng.choice(len(feats), WARM_START_FEATURES, replace=False)]
        encoder.head.vlad.init_from_features(feats, seed=cfg.seed)
    model.train(was_training)


@dataclass
class TrainResult:
    history: list
    checkpoint: Path
    model: CrossModalNet


def _batch_tuple(batch, slot, vi, vp) -> DescriptorTuple:
    a = torch.tensor([slot[t.anchor] for t in batch])
    p = torch.tensor([slot[t.positive] for t in batch])
    n = torch.tensor([[slot[i] for i in t.negatives] for t in batch])
    return DescriptorTuple(vi[a], vi[p], vi[n], vp[a], vp[p], vp[n])


def train(cfg: RunConfig, dataset: PairDataset, out_dir, resume=None, progress=None) -> TrainResult:
    """Jointly optimise both encoders on mined tuples; checkpoint every epoch.

    Writes ``loss_log.csv``, ``last.pt`` and ``epoch_XXX.pt`` into ``out_dir``.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    torch.manual_seed(cfg.seed)
    model = CrossModalNet.from_config(cfg)
    optimizers = build_optimizers(model, cfg)
    schedulers = build_schedulers(optimizers, cfg)
    stats = dataset.channel_stats()
    history: list = []
    start = 0
    if resume is not None:
        state = torch.load(resume, map_location="cpu", weights_only=False)
        stored = RunConfig.from_dict({**state["config"], "pretrained": None})
        bad = stored.arch_mismatches(cfg)
        if bad:
            raise CheckpointMismatchError(f"cannot resume {resume}: config differs in {bad}")
        model.load_state_dict(state["model"])
        for o, s in zip(optimizers, state["optimizers"]):
            o.load_state_dict(s)
        for sch, s in zip(schedulers, state["schedulers"]):
            sch.load_state_dict(s)
        stats = (state["image_mean"], state["image_std"])
        history = list(state["history"])
        start = int(state["epoch"])
    else:
        warm_start_clusters(model, dataset, cfg, stats)
    weights = LossWeights(cfg.mu, cfg.lam, cfg.nu, cfg.margin)
    aug = augment_params(cfg)
    log_path = out_dir / "loss_log.csv"
    if start == 0 or not log_path.exists():
        with open(log_path, "w", newline="") as fh:
            csv.writer(fh).writerow(["epoch", *LOSS_KEYS, "lr", "seconds"])
    ckpt = out_dir / "last.pt"
    for epoch in range(start, cfg.epochs):
        t0 = time.time()
        model.train()
        tuples = mine_training_tuples(dataset.positions, cfg.query_spacing, cfg.pos_radius,
                                      cfg.neg_radius, cfg.n_neg, seed=(cfg.seed, epoch))
        if not tuples:
            raise RuntimeError("no training tuples could be mined from the dataset")
        order = np.random.default_rng([cfg.seed, epoch, 7]).permutation(len(tuples))
        sums = dict.fromkeys(LOSS_KEYS, 0.0)
        for b, lo in enumerate(range(0, len(order), cfg.batch_size)):
            batch = [tuples[i] for i in order[lo:lo + cfg.batch_size]]
            members = sorted({i for t in batch for i in (t.anchor, t.positive, *t.negatives)})
            slot = {i: k for k, i in enumerate(members)}
            images = torch.stack([image_tensor(augment_image(dataset.images[i], (cfg.seed, epoch, i), aug),
                                               *stats) for i in members])
            clouds = torch.stack([point_tensor(dataset.points[i], cfg, (cfg.seed, epoch, i)) for i in members])
            vi = model.image(images)
            vp = model.point(clouds)
            terms = {k: v.mean() for k, v in loss_terms(_batch_tuple(batch, slot, vi, vp), weights).items()}
            if not torch.isfinite(terms["total"]):
                dump = out_dir / f"nonfinite_epoch{epoch:03d}_batch{b:04d}.json"
                dump.write_text(json.dumps({"epoch": epoch, "batch": b,
                                            "tuples": [[t.anchor, t.positive, *t.negatives] for t in batch],
                                            "ids": [dataset.ids[i] for i in members]}, indent=1))
                raise NonFiniteLossError(f"non-finite loss at epoch {epoch} batch {b}; details in {dump}")
            for o in optimizers:
                o.zero_grad(set_to_none=True)
            terms["total"].backward()
            for o in optimizers:
                o.step()
            for k in LOSS_KEYS:
                sums[k] += float(terms[k].detach()) * len(batch)
        for s in schedulers:
            s.step()
        row = {k: sums[k] / len(tuples) for k in LOSS_KEYS}
        row["epoch"] = epoch + 1
        history.append(row)
        lr = optimizers[0].param_groups[0]["lr"]
        with open(log_path, "a", newline="") as fh:
            csv.writer(fh).writerow([epoch + 1, *(f"{row[k]:.6f}" for k in LOSS_KEYS), lr,
                                     f"{time.time() - t0:.2f}"])
        save_checkpoint(ckpt, model, cfg, epoch + 1, optimizers, schedulers, stats, history)
        save_checkpoint(out_dir / f"epoch_{epoch + 1:03d}.pt", model, cfg, epoch + 1, optimizers,
                        schedulers, stats, history)
        if progress is not None:
            progress(row)
        logger.info("epoch %d: total %.4f (cm %.4f sm %.4f anchor %.4f)", epoch + 1, row["total"],
                    row["cross_modal"], row["same_modal"], row["anchor"])
    model.eval()
    return TrainResult(history, ckpt, model)


@torch.no_grad()
def embed_images(model: CrossModalNet, images, mean, std, batch_size: int = 16) -> np.ndarray:
    model.eval()
    out = []
    for lo in range(0, len(images), batch_size):
        x = torch.stack([image_tensor(img, mean, std) for img in images[lo:lo + batch_size]])
        out.append(model.image(x).numpy())
    return np.concatenate(out) if out else np.zeros((0, model.image.head.fc.out_features), np.float32)


@torch.no_grad()
def embed_points(model: CrossModalNet, clouds, cfg: RunConfig, batch_size: int = 16) -> np.ndarray:
    """Descriptors for sub-map clouds; sample ``i`` is subsampled with seed (cfg.seed, i)."""
    model.eval()
    out = []
    for lo in range(0, len(clouds), batch_size):
        x = torch.stack([point_tensor(c, cfg, (cfg.seed, lo + k)) for k, c in enumerate(clouds[lo:lo + batch_size])])
        out.append(model.point(x).numpy())
    return np.concatenate(out) if out else np.zeros((0, model.point.head.fc.out_features), np.float32)


def is_monotone_decreasing(values, start: int = 0) -> bool:
    tail = list(values)[start:]
    return all(b < a for a, b in zip(tail, tail[1:])) and not any(math.isnan(v) for v in tail)
