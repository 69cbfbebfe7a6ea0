import os
import subprocess
import sys

import numpy as np
import pytest
import torch

from panoloc import kernels
from panoloc.kernels import InterpPlan, gather, use_backend


def _plan(rng, S=30, P=17):
    idx = rng.integers(0, S, size=(4, P))
    w = rng.uniform(size=(4, P))
    return InterpPlan(idx, w / w.sum(0), S)


def test_fallback_selected_by_env():
    code = "import panoloc.kernels as k; print(k.backend())"
    env = dict(os.environ, PANOLOC_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


def test_compiled_is_default_when_built():
    code = "import panoloc.kernels as k; print(k.backend())"
    env = {k: v for k, v in os.environ.items() if k != "PANOLOC_PURE_PYTHON"}
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == kernels.AVAILABLE[0]


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.set_backend("gpu")


def test_use_backend_restores():
    before = kernels.backend()
    with use_backend("python"):
        assert kernels.backend() == "python"
    assert kernels.backend() == before


def test_plan_shape_checked():
    with pytest.raises(ValueError):
        InterpPlan(np.zeros((3, 5), int), np.zeros((3, 5)), 10)


def test_gather_matches_dense(backend, rng):
    plan = _plan(rng)
    x = torch.from_numpy(rng.normal(size=(3, 30)))
    assert np.allclose(gather(x, plan).numpy(), x.numpy() @ plan.dense().T, atol=1e-12)


def test_gather_float32(backend, rng):
    plan = _plan(rng)
    x = torch.from_numpy(rng.normal(size=(2, 30)).astype(np.float32))
    out = gather(x, plan)
    assert out.dtype == torch.float32
    assert np.allclose(out.numpy(), x.numpy() @ plan.dense().T, atol=1e-5)


def test_gather_adjoint(backend, rng):
    # the backward pass is the transpose of the forward map
    plan = _plan(rng)
    x = torch.from_numpy(rng.normal(size=(2, 30))).requires_grad_(True)
    g = torch.from_numpy(rng.normal(size=(2, 17)))
    (gather(x, plan) * g).sum().backward()
    assert np.allclose(x.grad.numpy(), g.numpy() @ plan.dense(), atol=1e-12)


def test_gather_rejects_bad_input(rng):
    plan = _plan(rng)
    with pytest.raises(ValueError):
        gather(torch.zeros(2, 29, dtype=torch.float64), plan)
    with pytest.raises(TypeError):
        gather(torch.zeros(2, 30, dtype=torch.int64), plan)


def test_backends_agree(rng):
    if len(kernels.AVAILABLE) < 2:
        pytest.skip("compiled core not built")
    plan = _plan(rng, 200, 500)
    x = torch.from_numpy(rng.normal(size=(8, 200)))
    outs = []
    for name in kernels.AVAILABLE:
        with use_backend(name):
            outs.append(gather(x, plan))
    assert torch.allclose(outs[0], outs[1], atol=1e-13)
