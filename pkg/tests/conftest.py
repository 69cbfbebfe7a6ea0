import numpy as np
import pytest
import torch

from panoloc import kernels


def pytest_configure(config):
    torch.set_num_threads(1)


BACKENDS = ["python"] + (["compiled"] if kernels.AVAILABLE else [])


@pytest.fixture(params=BACKENDS)
def backend(request):
    """Run the test once per available gather backend."""
    with kernels.use_backend(request.param):
        yield request.param


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def max_rel_err(actual, expected, floor=1e-12):
    actual = np.asarray(actual, dtype=np.float64)
    expected = np.asarray(expected, dtype=np.float64)
    scale = max(float(np.abs(expected).max(initial=0.0)), floor)
    return float(np.abs(actual - expected).max(initial=0.0)) / scale


ACCEPTANCE_LINES: list = []


def record_criterion(number: int, passed: bool, detail: str) -> str:
    """Remember one acceptance verdict; the session summary lists them all."""
    line = f"criterion {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    ACCEPTANCE_LINES.append((number, line))
    return line


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for _, line in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(line)
