import pytest
import torch

from gradients import fd_relative_error, operator_cases, run_case
from panoloc.kernels import gather
from panoloc.sphere import interp_plan


@pytest.mark.parametrize("name", sorted(operator_cases()))
def test_operator_gradient(backend, name):
    assert run_case(name, instances=3, seed=7) < 1e-4


def test_gather_backward_is_adjoint(backend):
    plan = interp_plan(6, 10, 3, 3, 1)
    x = torch.randn(2, 60, dtype=torch.float64, requires_grad=True)
    y = gather(x, plan)
    g = torch.randn_like(y)
    (gx,) = torch.autograd.grad(y, x, g)
    dense = torch.from_numpy(plan.dense())
    assert torch.allclose(gx, g @ dense, atol=1e-12)


def test_gather_matches_dense_plan(backend):
    plan = interp_plan(6, 10, 3, 5, 2)
    x = torch.randn(3, 60, dtype=torch.float64)
    assert torch.allclose(gather(x, plan), x @ torch.from_numpy(plan.dense()).T, atol=1e-12)


def test_gather_float32_supported(backend):
    plan = interp_plan(6, 10, 3, 3, 1)
    x = torch.randn(2, 60, requires_grad=True)
    y = gather(x, plan)
    assert y.dtype == torch.float32
    y.sum().backward()
    assert x.grad.shape == x.shape


def test_checker_detects_a_wrong_gradient():
    class Wrong(torch.autograd.Function):
        @staticmethod
        def forward(ctx, x):
            return x ** 2

        @staticmethod
        def backward(ctx, g):
            return g  # should be 2 x g

    x = torch.rand(5, dtype=torch.float64) + 1.0
    assert fd_relative_error(Wrong.apply, [x]) > 0.1
