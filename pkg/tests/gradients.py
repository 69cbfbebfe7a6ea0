"""Central finite-difference gradient checks and the random instances they run on."""

from __future__ import annotations

import torch

from panoloc.aggregation import compress_normalize, netvlad, soft_assignment
from panoloc.attention import excite, recalibrate, squeeze
from panoloc.image_branch import spherical_conv, spherical_maxpool
from panoloc.losses import (DescriptorTuple, LossWeights, anchor_loss, cross_modal_loss,
                            same_modal_loss, total_loss, triplet_term)


def fd_relative_error(fn, inputs, eps: float = 1e-6) -> float:
    """Largest gradient mismatch of ``sum(fn(*inputs) * R)`` for a fixed random R,
    relative to the largest numerical gradient entry."""
    inputs = [x.detach().clone().requires_grad_(True) for x in inputs]
    out = fn(*inputs)
    gen = torch.Generator().manual_seed(99)
    R = torch.randn(out.shape, generator=gen, dtype=out.dtype)
    analytic = torch.autograd.grad((out * R).sum(), inputs, allow_unused=True)
    worst, scale = 0.0, 0.0
    with torch.no_grad():
        for x, g in zip(inputs, analytic):
            g = torch.zeros_like(x) if g is None else g
            flat = x.view(-1)
            for i in range(flat.numel()):
                orig = flat[i].item()
                flat[i] = orig + eps
                up = float((fn(*inputs) * R).sum())
                flat[i] = orig - eps
                down = float((fn(*inputs) * R).sum())
                flat[i] = orig
                num = (up - down) / (2 * eps)
                worst = max(worst, abs(num - float(g.view(-1)[i])))
                scale = max(scale, abs(num))
    return worst / max(scale, 1e-12)


def _unit(gen, *shape):
    return torch.nn.functional.normalize(torch.randn(*shape, generator=gen, dtype=torch.float64), dim=-1)


def _rand(gen, *shape):
    return torch.randn(*shape, generator=gen, dtype=torch.float64)


def _tuple_inputs(gen, n_neg=2, D=6):
    return [_unit(gen, D), _unit(gen, D), _unit(gen, n_neg, D), _unit(gen, D), _unit(gen, D), _unit(gen, n_neg, D)]


def _as_tuple(*parts):
    return DescriptorTuple(*parts)


def operator_cases():
    """name -> (function, instance factory taking a seeded torch.Generator)."""
    margin = 0.5
    return {
        "spherical_conv": (lambda x, w, b: spherical_conv(x, w, b, 1),
                           lambda g: [_rand(g, 1, 2, 4, 6), _rand(g, 2, 2, 3, 3), _rand(g, 2)]),
        "spherical_conv_stride2": (lambda x, w: spherical_conv(x, w, None, 2),
                                   lambda g: [_rand(g, 1, 2, 4, 6), _rand(g, 2, 2, 3, 3)]),
        "spherical_maxpool": (lambda x: spherical_maxpool(x, 3, 2),
                              lambda g: [_rand(g, 1, 2, 4, 6)]),
        "squeeze": (squeeze, lambda g: [_rand(g, 2, 3, 4, 5)]),
        "excite": (excite, lambda g: [_rand(g, 2, 8), _rand(g, 2, 8), _rand(g, 8, 2)]),
        "recalibrate": (recalibrate, lambda g: [_rand(g, 2, 3, 4, 1), torch.rand(2, 3, generator=g, dtype=torch.float64)]),
        "soft_assignment": (soft_assignment, lambda g: [_rand(g, 1, 5, 4), _rand(g, 3, 4), _rand(g, 3)]),
        "netvlad": (netvlad, lambda g: [_rand(g, 1, 5, 4), _rand(g, 3, 4), _rand(g, 3, 4), _rand(g, 3)]),
        "compress_normalize": (compress_normalize, lambda g: [_rand(g, 1, 3, 4), _rand(g, 5, 12)]),
        "triplet_term": (lambda a, p, n: triplet_term(a, p, n, margin),
                         lambda g: [_unit(g, 6), _unit(g, 6), _unit(g, 3, 6)]),
        "cross_modal_loss": (lambda *p: cross_modal_loss(_as_tuple(*p), margin), _tuple_inputs),
        "same_modal_loss": (lambda *p: same_modal_loss(_as_tuple(*p), margin), _tuple_inputs),
        "anchor_loss": (lambda *p: anchor_loss(_as_tuple(*p)), _tuple_inputs),
        "total_loss": (lambda *p: total_loss(_as_tuple(*p), LossWeights()), _tuple_inputs),
    }


def run_case(name, instances: int, seed: int = 0) -> float:
    fn, make = operator_cases()[name]
    worst = 0.0
    for k in range(instances):
        gen = torch.Generator().manual_seed(seed * 1000 + k)
        worst = max(worst, fd_relative_error(fn, make(gen)))
    return worst
