"""The two representation functions: image -> descriptor and sub-map -> descriptor."""

from __future__ import annotations

import torch
from torch import nn

from .aggregation import DescriptorHead
from .attention import SEBlock
from .config import RunConfig
from .image_branch import ImageFeatureExtractor, load_torchvision_weights
from .point_branch import PointFeatureExtractor


class ImageEncoder(nn.Module):
    def __init__(self, image_size=(512, 1024), widths=(64, 128, 256, 512), spherical=True,
                 attention=True, reduction=16, clusters=64, dim=256):
        super().__init__()
        self.backbone = ImageFeatureExtractor(image_size, widths, spherical)
        C = self.backbone.out_channels
        self.se = SEBlock(C, reduction) if attention else None
        self.head = DescriptorHead(C, clusters, dim)

    def local_features(self, images):
        u = self.backbone(images)
        return u if self.se is None else self.se(u)

    def forward(self, images):
        return self.head(self.local_features(images))


class PointEncoder(nn.Module):
    def __init__(self, widths=(64, 64, 64, 128, 1024), attention=True, reduction=16,
                 clusters=64, dim=256):
        super().__init__()
        self.backbone = PointFeatureExtractor(widths)
        C = self.backbone.out_channels
        self.se = SEBlock(C, reduction) if attention else None
        self.head = DescriptorHead(C, clusters, dim)

    def local_features(self, points):
        u = self.backbone(points)
        return u if self.se is None else self.se(u)

    def forward(self, points):
        return self.head(self.local_features(points))


class CrossModalNet(nn.Module):
    """Holds both encoders; ``image`` is f and ``point`` is g."""

    def __init__(self, image: ImageEncoder, point: PointEncoder):
        super().__init__()
        self.image = image
        self.point = point

    @classmethod
    def from_config(cls, cfg: RunConfig) -> "CrossModalNet":
        image = ImageEncoder(cfg.image_size, cfg.image_widths, cfg.spherical, cfg.attention,
                             cfg.reduction, cfg.clusters, cfg.descriptor_dim)
        point = PointEncoder(cfg.point_widths, cfg.attention, cfg.reduction, cfg.clusters,
                             cfg.descriptor_dim)
        if cfg.pretrained:
            state = torch.load(cfg.pretrained, map_location="cpu", weights_only=True)
            load_torchvision_weights(image.backbone, state)
        return cls(image, point)
