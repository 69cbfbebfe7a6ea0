"""Cross-modal and same-modal triplet objectives over descriptor tuples.

Image descriptors always come from the image encoder and point descriptors
from the point encoder. Tensors may carry any leading batch shape; negatives
add one axis before the descriptor axis.
"""

from __future__ import annotations

from dataclasses import dataclass

import torch

__all__ = [
    "DescriptorTuple",
    "LossWeights",
    "distance",
    "triplet_term",
    "cross_modal_loss",
    "same_modal_loss",
    "anchor_loss",
    "weighted_sum",
    "total_loss",
    "loss_terms",
]


@dataclass
class DescriptorTuple:
    image_anchor: torch.Tensor
    image_positive: torch.Tensor
    image_negatives: torch.Tensor
    point_anchor: torch.Tensor
    point_positive: torch.Tensor
    point_negatives: torch.Tensor


@dataclass(frozen=True)
class LossWeights:
    mu: float = 1.0
    lam: float = 0.1
    nu: float = 1.0
    margin: float = 0.5

    def __post_init__(self):
        if not self.margin > 0:
            raise ValueError("margin must be positive")


def distance(a, b):
    return torch.linalg.vector_norm(a - b, dim=-1)


def triplet_term(anchor, positive, negatives, margin: float):
    """Mean over negatives of [d(a, p) - d(a, n) + m]_+.

    anchor, positive: (..., D); negatives: (..., N, D) with N >= 1.
    """
    if negatives.dim() < 2 or negatives.shape[-2] == 0:
        raise ValueError("need at least one negative")
    d_pos = distance(anchor, positive)
    d_neg = distance(anchor.unsqueeze(-2), negatives)
    return torch.clamp(d_pos.unsqueeze(-1) - d_neg + margin, min=0).mean(dim=-1)


def cross_modal_loss(t: DescriptorTuple, margin: float):
    return (triplet_term(t.image_anchor, t.point_positive, t.point_negatives, margin)
            + triplet_term(t.point_anchor, t.image_positive, t.image_negatives, margin))


def same_modal_loss(t: DescriptorTuple, margin: float):
    return (triplet_term(t.image_anchor, t.image_positive, t.image_negatives, margin)
            + triplet_term(t.point_anchor, t.point_positive, t.point_negatives, margin))


def anchor_loss(t: DescriptorTuple):
    return distance(t.image_anchor, t.point_anchor)


def weighted_sum(cm, sm, anchor, w: LossWeights):
    return w.mu * cm + w.lam * sm + w.nu * anchor


def loss_terms(t: DescriptorTuple, w: LossWeights) -> dict:
    """All three components and their weighted total, per tuple."""
    cm = cross_modal_loss(t, w.margin)
    sm = same_modal_loss(t, w.margin)
    an = anchor_loss(t)
    return {"total": weighted_sum(cm, sm, an, w), "cross_modal": cm, "same_modal": sm, "anchor": an}


def total_loss(t: DescriptorTuple, w: LossWeights = LossWeights()):
    return loss_terms(t, w)["total"]
