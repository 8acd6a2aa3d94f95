import numpy as np
import pytest
import torch

from jnmr.motion import REFERENCE_TIMES, MotionField, MotionSet


def random_field(gen, b=1, h=6, w=7, k=3, d=1, dtype=torch.float64, scale=2.0):
    taps = k * k
    wts = torch.softmax(torch.randn(b, taps, h, w, generator=gen, dtype=dtype), dim=1)
    a = scale * torch.randn(b, taps, h, w, generator=gen, dtype=dtype)
    bb = scale * torch.randn(b, taps, h, w, generator=gen, dtype=dtype)
    return MotionField(wts, a, bb, k, d)


def random_set(gen, b=1, h=6, w=7, k=3, dtype=torch.float64):
    fields = {n: random_field(gen, b, h, w, k, dtype=dtype) for n in REFERENCE_TIMES}
    return MotionSet(fields, torch.rand(b, 1, h, w, generator=gen, dtype=dtype))


def offset_field(alpha, beta=0.0, b=1, h=4, w=4, k=3, dtype=torch.float64):
    """Uniform-weight field whose every tap has the same constant offsets."""
    taps = k * k
    wts = torch.full((b, taps, h, w), 1.0 / taps, dtype=dtype)
    return MotionField(wts, torch.full_like(wts, alpha), torch.full_like(wts, beta), k, 1)


def identity_set(b=1, h=8, w=8, k=3, occ=0.5, dtype=torch.float64):
    fields = {n: MotionField.identity(b, h, w, k, dtype=dtype) for n in REFERENCE_TIMES}
    return MotionSet(fields, torch.full((b, 1, h, w), occ, dtype=dtype))


@pytest.fixture
def gen():
    return torch.Generator().manual_seed(0)


@pytest.fixture
def rng():
    return np.random.default_rng(0)


# one line per acceptance criterion, repeated in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
