import numpy as np
import pytest
import torch
import torch.nn.functional as F

import oracles
from conftest import max_rel_err
from panoloc.image_branch import (ImageFeatureExtractor, SphereConv2d, extract_image_features,
                                  load_torchvision_weights, spherical_conv, spherical_maxpool)


@pytest.mark.parametrize("stride", [1, 2])
@pytest.mark.parametrize("k", [1, 3, 5])
def test_spherical_conv_matches_oracle(backend, rng, k, stride):
    x = rng.normal(size=(2, 2, 6, 10))
    w = rng.normal(size=(3, 2, k, k))
    b = rng.normal(size=3)
    got = spherical_conv(torch.from_numpy(x), torch.from_numpy(w), torch.from_numpy(b), stride).numpy()
    assert max_rel_err(got, oracles.spherical_conv(x, w, b, stride)) < 1e-10


def test_spherical_conv_rectangular_kernel(rng):
    x = rng.normal(size=(1, 1, 7, 12))
    w = rng.normal(size=(2, 1, 3, 5))
    got = spherical_conv(torch.from_numpy(x), torch.from_numpy(w)).numpy()
    assert max_rel_err(got, oracles.spherical_conv(x, w)) < 1e-10


def test_spherical_conv_delta_kernel_is_identity(backend, rng):
    x = torch.from_numpy(rng.normal(size=(1, 2, 8, 16)))
    w = torch.zeros(2, 2, 3, 3, dtype=torch.float64)
    w[0, 0, 1, 1] = w[1, 1, 1, 1] = 1.0
    assert torch.allclose(spherical_conv(x, w), x, atol=1e-12)


def test_spherical_conv_near_planar_at_equator(rng):
    # on a tall map the equatorial taps are close to the plain 3x3 neighbourhood
    x = torch.from_numpy(rng.normal(size=(1, 1, 64, 128)))
    w = torch.from_numpy(rng.normal(size=(1, 1, 3, 3)))
    sph = spherical_conv(x, w)[..., 30:34, 10:-10]
    flat = F.conv2d(x, w, padding=1)[..., 30:34, 10:-10]
    assert (sph - flat).abs().max() < 0.05 * flat.abs().max()


def test_spherical_conv_checks(rng):
    x = torch.zeros(1, 2, 8, 16)
    with pytest.raises(ValueError):
        spherical_conv(x, torch.zeros(1, 3, 3, 3))
    with pytest.raises(ValueError):
        spherical_conv(x, torch.zeros(1, 2, 3, 3), stride=3)
    with pytest.raises(ValueError):
        spherical_conv(x[0], torch.zeros(1, 2, 3, 3))


@pytest.mark.parametrize("stride", [1, 2])
def test_spherical_maxpool_matches_oracle(backend, rng, stride):
    x = rng.normal(size=(1, 2, 6, 10))
    got = spherical_maxpool(torch.from_numpy(x), 3, stride).numpy()
    assert max_rel_err(got, oracles.spherical_maxpool(x, 3, stride)) < 1e-12


def test_maxpool_of_constant_is_constant():
    x = torch.full((1, 1, 8, 16), -2.0)
    assert torch.allclose(spherical_maxpool(x), torch.full((1, 1, 4, 8), -2.0))


def test_conv_module_planar_mode_is_conv2d(rng):
    torch.manual_seed(0)
    m = SphereConv2d(2, 4, 3, 2, spherical=False)
    x = torch.randn(1, 2, 8, 16)
    assert torch.equal(m(x), F.conv2d(x, m.weight, None, 2, 1))


def test_feature_extractor_shapes():
    net = ImageFeatureExtractor((96, 192), (8, 8, 16, 16)).eval()
    out = net(torch.randn(2, 3, 96, 192))
    assert out.shape == (2, 16, 3, 6)
    single = extract_image_features(torch.randn(3, 96, 192), net)
    assert single.shape == (16, 3, 6)


def test_feature_extractor_rejects_bad_input():
    net = ImageFeatureExtractor((96, 192), (8, 8, 16, 16))
    with pytest.raises(ValueError):
        net(torch.randn(1, 3, 96, 128))
    with pytest.raises(ValueError):
        net(torch.randn(1, 1, 96, 192))
    with pytest.raises(ValueError):
        ImageFeatureExtractor((60, 128))


def test_spherical_extractor_needs_a_usable_last_stage():
    with pytest.raises(ValueError):
        ImageFeatureExtractor((64, 128))
    ImageFeatureExtractor((64, 128), spherical=False)


def test_planar_mode_matches_torchvision():
    torchvision = pytest.importorskip("torchvision")
    ref = torchvision.models.resnet18(weights=None).eval()
    net = ImageFeatureExtractor((64, 128), spherical=False).eval()
    ignored = load_torchvision_weights(net, ref.state_dict())
    assert sorted(ignored) == ["fc.bias", "fc.weight"]
    x = torch.randn(1, 3, 64, 128)
    trunk = torch.nn.Sequential(*list(ref.children())[:-2])
    with torch.no_grad():
        assert torch.allclose(net(x), trunk(x), atol=1e-5)


def test_pretrained_weights_need_standard_widths():
    torchvision = pytest.importorskip("torchvision")
    net = ImageFeatureExtractor((64, 128), (16, 32, 64, 128), spherical=False)
    with pytest.raises(RuntimeError):
        load_torchvision_weights(net, torchvision.models.resnet18(weights=None).state_dict())


def test_spherical_features_are_yaw_equivariant():
    torch.manual_seed(3)
    net = ImageFeatureExtractor((96, 256), (8, 8, 16, 16)).eval()
    x = torch.randn(1, 3, 96, 256)
    with torch.no_grad():
        u = net(x)
        v = net(torch.roll(x, 32, dims=-1))
    assert (torch.roll(u, 1, dims=-1) - v).abs().max() < 1e-4


def test_backends_agree_on_full_network():
    from panoloc import kernels

    if not kernels.AVAILABLE:
        pytest.skip("compiled extension not built")
    torch.manual_seed(0)
    net = ImageFeatureExtractor((96, 160), (8, 8, 8, 8)).double().eval()
    x = torch.randn(2, 3, 96, 160, dtype=torch.float64)
    outs = []
    for name in ("python", "compiled"):
        with kernels.use_backend(name):
            outs.append(net(x))
    assert torch.allclose(*outs, atol=1e-12)
