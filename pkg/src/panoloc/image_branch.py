"""Image feature extractor: an 18-layer residual backbone on equirectangular input.

Every convolution and max-pooling layer can sample on the sphere (gnomonic
taps, longitude wrap) or on the plane (ordinary zero padding). Parameter
names follow torchvision's ``resnet18`` so ImageNet weights load directly.
"""

from __future__ import annotations

import torch
import torch.nn.functional as F
from torch import nn

from .sphere import sample_taps

__all__ = [
    "spherical_conv",
    "spherical_maxpool",
    "SphereConv2d",
    "SphereMaxPool2d",
    "BasicBlock",
    "ImageFeatureExtractor",
    "extract_image_features",
    "load_torchvision_weights",
]


def spherical_conv(x: torch.Tensor, weight: torch.Tensor, bias: torch.Tensor | None = None,
                   stride: int = 1) -> torch.Tensor:
    """Convolution whose taps follow the gnomonic grid of ``x``'s resolution.

    x: (B, C, H, W); weight: (O, C, kh, kw) with odd kernel sizes. Output
    pixel (r, c) is centred on input pixel (stride*r, stride*c).
    """
    if x.dim() != 4:
        raise ValueError("expected a (B, C, H, W) input")
    O, C, kh, kw = weight.shape
    if x.shape[1] != C:
        raise ValueError(f"input has {x.shape[1]} channels, weights expect {C}")
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    B = x.shape[0]
    if kh == 1 and kw == 1:
        cols = x[:, :, ::stride, ::stride]
        Ho, Wo = cols.shape[-2:]
        cols = cols.reshape(B, C, Ho * Wo)
    else:
        taps = sample_taps(x, kh, kw, stride)  # (B, C, kh*kw, Ho, Wo)
        Ho, Wo = taps.shape[-2:]
        cols = taps.reshape(B, C * kh * kw, Ho * Wo)
    out = torch.bmm(weight.reshape(1, O, C * kh * kw).expand(B, -1, -1), cols)
    if bias is not None:
        out = out + bias[:, None]
    return out.reshape(B, O, Ho, Wo)


def spherical_maxpool(x: torch.Tensor, kernel: int = 3, stride: int = 2) -> torch.Tensor:
    """Tap-wise maximum over the gnomonic grid (bilinearly interpolated taps)."""
    if x.dim() != 4:
        raise ValueError("expected a (B, C, H, W) input")
    if kernel % 2 == 0:
        raise ValueError("kernel must be odd")
    if stride not in (1, 2):
        raise ValueError("stride must be 1 or 2")
    return sample_taps(x, kernel, kernel, stride).amax(dim=2)


class SphereConv2d(nn.Conv2d):
    """``nn.Conv2d`` that samples on the sphere when ``spherical`` is set.

    Planar mode is exactly the parent class with padding ``k // 2``.
    """

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, bias=False,
                 spherical=True):
        super().__init__(in_channels, out_channels, kernel_size, stride=stride,
                         padding=kernel_size // 2, bias=bias)
        self.spherical = spherical

    def forward(self, x):
        if self.spherical:
            return spherical_conv(x, self.weight, self.bias, self.stride[0])
        return super().forward(x)

    def extra_repr(self):
        return super().extra_repr() + f", spherical={self.spherical}"


class SphereMaxPool2d(nn.Module):
    def __init__(self, kernel_size=3, stride=2, spherical=True):
        super().__init__()
        self.kernel_size = kernel_size
        self.stride = stride
        self.spherical = spherical

    def forward(self, x):
        if self.spherical:
            return spherical_maxpool(x, self.kernel_size, self.stride)
        return F.max_pool2d(x, self.kernel_size, self.stride, padding=self.kernel_size // 2)


class BasicBlock(nn.Module):
    def __init__(self, inplanes, planes, stride=1, spherical=True):
        super().__init__()
        self.conv1 = SphereConv2d(inplanes, planes, 3, stride, spherical=spherical)
        self.bn1 = nn.BatchNorm2d(planes)
        self.relu = nn.ReLU(inplace=True)
        self.conv2 = SphereConv2d(planes, planes, 3, 1, spherical=spherical)
        self.bn2 = nn.BatchNorm2d(planes)
        self.downsample = None
        if stride != 1 or inplanes != planes:
            self.downsample = nn.Sequential(
                SphereConv2d(inplanes, planes, 1, stride, spherical=spherical),
                nn.BatchNorm2d(planes),
            )

    def forward(self, x):
        identity = x if self.downsample is None else self.downsample(x)
        out = self.relu(self.bn1(self.conv1(x)))
        out = self.bn2(self.conv2(out))
        return self.relu(out + identity)


class ImageFeatureExtractor(nn.Module):
    """ResNet-18 trunk without global pooling and classifier.

    Maps (B, 3, H, W) images to (B, widths[-1], H/32, W/32) local features.
    """

    def __init__(self, image_size=(512, 1024), widths=(64, 128, 256, 512), spherical=True):
        super().__init__()
        H, W = image_size
        if H % 32 or W % 32:
            raise ValueError("image height and width must be multiples of 32")
        if spherical and (H < 96 or W < 160):
            # the last stage runs at 1/32 scale and needs at least 3 x 5 cells
            raise ValueError(f"spherical sampling needs images of at least 96x160, got {H}x{W}")
        self.image_size = (H, W)
        self.spherical = spherical
        self.out_channels = widths[-1]
        self.conv1 = SphereConv2d(3, widths[0], 7, 2, spherical=spherical)
        self.bn1 = nn.BatchNorm2d(widths[0])
        self.relu = nn.ReLU(inplace=True)
        self.maxpool = SphereMaxPool2d(3, 2, spherical=spherical)
        inplanes = widths[0]
        for n, planes in enumerate(widths, start=1):
            stride = 1 if n == 1 else 2
            layer = nn.Sequential(
                BasicBlock(inplanes, planes, stride, spherical),
                BasicBlock(planes, planes, 1, spherical),
            )
            setattr(self, f"layer{n}", layer)
            inplanes = planes
        self._init_weights()

    def _init_weights(self):
        for m in self.modules():
            if isinstance(m, nn.Conv2d):
                nn.init.kaiming_normal_(m.weight, mode="fan_out", nonlinearity="relu")
            elif isinstance(m, nn.BatchNorm2d):
                nn.init.ones_(m.weight)
                nn.init.zeros_(m.bias)

    def forward(self, x):
        if x.dim() != 4 or x.shape[1] != 3 or tuple(x.shape[-2:]) != self.image_size:
            raise ValueError(
                f"expected (B, 3, {self.image_size[0]}, {self.image_size[1]}) images, "
                f"got {tuple(x.shape)}")
        x = self.maxpool(self.relu(self.bn1(self.conv1(x))))
        x = self.layer1(x)
        x = self.layer2(x)
        x = self.layer3(x)
        return self.layer4(x)


def extract_image_features(img: torch.Tensor, model: ImageFeatureExtractor) -> torch.Tensor:
    """Local feature map for one (3, H, W) or a batch of (B, 3, H, W) normalized images."""
    single = img.dim() == 3
    out = model(img[None] if single else img)
    return out[0] if single else out


def load_torchvision_weights(model: ImageFeatureExtractor, state_dict: dict) -> list[str]:
    """Copy a torchvision ``resnet18`` state dict into ``model``.

    The classifier entries (``fc.*``) are dropped. Returns the names that were
    ignored. Widths must match the standard (64, 128, 256, 512).
    """
    own = model.state_dict()
    ignored = [k for k in state_dict if k not in own]
    missing = [k for k in own if k not in state_dict and not k.endswith("num_batches_tracked")]
    if missing:
        raise KeyError(f"pretrained weights lack {missing[:5]}")
    filtered = {k: v for k, v in state_dict.items() if k in own}
    model.load_state_dict(filtered, strict=False)
    return ignored
