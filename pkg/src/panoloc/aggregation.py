"""NetVLAD aggregation and compression to the shared unit-norm descriptor."""

from __future__ import annotations

import math

import numpy as np
import torch
from scipy.cluster.vq import kmeans2
import torch.nn.functional as F
from torch import nn

__all__ = ["soft_assignment", "netvlad", "compress_normalize", "NetVLAD", "DescriptorHead"]


def soft_assignment(features, assign_weight, assign_bias):
    """Softmax over clusters of w_k . u_i + b_k: (B, M, C) -> (B, M, K)."""
    return torch.softmax(features @ assign_weight.T + assign_bias, dim=-1)


def netvlad(features, centers, assign_weight, assign_bias):
    """Soft-assignment-weighted residual sums.

    features: (B, M, C) local features; centers, assign_weight: (K, C);
    assign_bias: (K,). Returns G with g_k = sum_i a_ik (u_i - c_k), shape (B, K, C).
    """
    if features.dim() != 3:
        raise ValueError("features must be (B, M, C)")
    K, C = centers.shape
    if features.shape[-1] != C or assign_weight.shape != (K, C) or assign_bias.shape != (K,):
        raise ValueError("feature, center and assignment dimensions disagree")
    if features.shape[1] < 1:
        raise ValueError("need at least one local feature")
    a = soft_assignment(features, assign_weight, assign_bias)
    weighted = a.transpose(1, 2) @ features  # (B, K, C)
    return weighted - a.sum(dim=1)[..., None] * centers


def compress_normalize(G, fc_weight, eps: float = 1e-12):
    """Intra-normalize, flatten, L2-normalize, project to D dims, L2-normalize.

    G: (B, K, C) or (K, C); fc_weight: (D, K*C).
    """
    single = G.dim() == 2
    if single:
        G = G[None]
    flat_norm = G.flatten(1).abs().amax(dim=1)
    if bool((flat_norm == 0).any()):
        raise ValueError("all-zero aggregated features have no direction")
    v = F.normalize(G, dim=2, eps=eps).flatten(1)
    v = F.normalize(v, dim=1, eps=eps)
    if fc_weight.shape[1] != v.shape[1]:
        raise ValueError(f"fc expects {fc_weight.shape[1]} inputs, got {v.shape[1]}")
    out = F.normalize(v @ fc_weight.T, dim=1, eps=eps)
    return out[0] if single else out


class NetVLAD(nn.Module):
    def __init__(self, channels: int, clusters: int = 64):
        super().__init__()
        self.centers = nn.Parameter(F.normalize(torch.randn(clusters, channels), dim=1))
        self.assign = nn.Linear(channels, clusters)
        nn.init.normal_(self.assign.weight, std=1.0 / math.sqrt(channels))
        nn.init.zeros_(self.assign.bias)

    def forward(self, features):
        return netvlad(features, self.centers, self.assign.weight, self.assign.bias)

    def assignment(self, features):
        return soft_assignment(features, self.assign.weight, self.assign.bias)

    @torch.no_grad()
    def init_from_features(self, features: np.ndarray, seed: int = 0, alpha: float | None = None):
        """Warm-start centres with k-means on a (M, C) sample of local features.

        The assignment becomes a softmax over -alpha * |u - c_k|^2. When
        ``alpha`` is None it is chosen so that, on average, a feature's nearest
        centre outweighs the runner-up a hundredfold.
        """
        feats = np.asarray(features, dtype=np.float64)
        K = self.centers.shape[0]
        if len(feats) < K:
            raise ValueError(f"need at least {K} features to place {K} centres")
        centers, _ = kmeans2(feats, K, minit="++", seed=seed)
        if alpha is None:
            d2 = np.stack([((feats - c) ** 2).sum(axis=1) for c in centers], axis=1)
            two = np.partition(d2, 1, axis=1)[:, :2]
            gap = float(np.mean(two[:, 1] - two[:, 0]))
            alpha = math.log(100.0) / max(gap, 1e-12)
        c = torch.as_tensor(centers, dtype=self.centers.dtype)
        self.centers.copy_(c)
        self.assign.weight.copy_(2 * alpha * c)
        self.assign.bias.copy_(-alpha * (c * c).sum(dim=1))
        return alpha


class DescriptorHead(nn.Module):
    """Local features (B, C, *spatial) -> unit descriptors (B, D)."""

    def __init__(self, channels: int, clusters: int = 64, dim: int = 256):
        super().__init__()
        self.vlad = NetVLAD(channels, clusters)
        self.fc = nn.Linear(clusters * channels, dim, bias=False)

    @staticmethod
    def local_features(u):
        return u.flatten(2).transpose(1, 2)

    def forward(self, u):
        return compress_normalize(self.vlad(self.local_features(u)), self.fc.weight)
