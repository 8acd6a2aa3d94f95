import pytest
import torch
import torch.nn.functional as F
from hypothesis import given, settings, strategies as st

from conftest import random_field
from jnmr.motion import REFERENCE_TIMES, MotionField, MotionSet
from jnmr.warp import WarpConfig, deformable_warp, deformable_warp_reference, warp_all_references


def test_identity_kernel_is_bit_exact(gen):
    frame = torch.rand(2, 3, 9, 10, generator=gen)
    for k, d in ((3, 1), (5, 1), (5, 2)):
        assert torch.equal(deformable_warp(frame, MotionField.identity(2, 9, 10, k, d)), frame)
        assert torch.equal(deformable_warp_reference(frame, MotionField.identity(2, 9, 10, k, d)), frame)


def test_unit_vertical_shift_replicates_last_row(gen):
    frame = torch.rand(1, 3, 6, 5, generator=gen)
    ones = torch.ones(1, 1, 6, 5)
    out = deformable_warp(frame, MotionField.translation(ones, 0 * ones, 3))
    assert torch.equal(out[..., :-1, :], frame[..., 1:, :])
    assert torch.equal(out[..., -1, :], frame[..., -1, :])


def test_uniform_weights_give_clamped_box_filter(gen):
    frame = torch.rand(1, 2, 7, 8, generator=gen, dtype=torch.float64)
    k = 3
    w = torch.full((1, k * k, 7, 8), 1 / (k * k), dtype=torch.float64)
    z = torch.zeros_like(w)
    out = deformable_warp(frame, MotionField(w, z, z, k, 1))
    box = F.avg_pool2d(F.pad(frame, (1, 1, 1, 1), mode="replicate"), k, stride=1)
    assert torch.allclose(out, box, atol=1e-12)


@pytest.mark.parametrize("dtype", [torch.float32, torch.float64])
def test_compiled_matches_reference(gen, dtype):
    frame = torch.rand(2, 3, 6, 7, generator=gen, dtype=dtype)
    m = random_field(gen, b=2, h=6, w=7, k=3, dtype=dtype, scale=3.0)
    tol = 1e-12 if dtype == torch.float64 else 1e-5
    assert torch.allclose(deformable_warp(frame, m), deformable_warp_reference(frame, m), atol=tol)


def test_gradcheck_warp(gen):
    frame = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64, requires_grad=True)
    m = random_field(gen, b=1, h=8, w=8, k=3, scale=1.3)
    # keep sample positions away from pixel-grid kinks where the bilinear map is not differentiable
    a = (m.alpha.floor() + 0.25 + 0.5 * torch.rand_like(m.alpha)).requires_grad_()
    b = (m.beta.floor() + 0.25 + 0.5 * torch.rand_like(m.beta)).requires_grad_()
    w = m.weights.clone().requires_grad_()

    def fn(frame, w, a, b):
        return deformable_warp(frame, MotionField(w, a, b, 3, 1))

    assert torch.autograd.gradcheck(fn, (frame, w, a, b), eps=1e-3, atol=1e-6, rtol=1e-3)


def test_convex_combination_bound(gen):
    frame = torch.rand(2, 3, 8, 9, generator=gen, dtype=torch.float64)
    m = random_field(gen, b=2, h=8, w=9, k=5, scale=10.0)
    out = deformable_warp(frame, m)
    lo = frame.amin(dim=(2, 3), keepdim=True)
    hi = frame.amax(dim=(2, 3), keepdim=True)
    assert (out >= lo - 1e-12).all() and (out <= hi + 1e-12).all()


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2 ** 31 - 1), st.floats(-3, 3), st.floats(-3, 3))
def test_linear_in_frame(seed, s, t):
    g = torch.Generator().manual_seed(seed)
    x = torch.rand(1, 3, 6, 6, generator=g, dtype=torch.float64)
    y = torch.rand(1, 3, 6, 6, generator=g, dtype=torch.float64)
    m = random_field(g, b=1, h=6, w=6, k=3)
    lhs = deformable_warp(s * x + t * y, m)
    rhs = s * deformable_warp(x, m) + t * deformable_warp(y, m)
    assert (lhs - rhs).abs().max() <= 1e-6


def test_invalid_arguments(gen):
    frame = torch.rand(1, 3, 6, 6, generator=gen)
    m = MotionField.identity(1, 6, 6, 3)
    with pytest.raises(ValueError):
        deformable_warp(frame[..., :5], m)
    with pytest.raises(ValueError):
        deformable_warp(frame, m, WarpConfig(5, 1))
    bad = m.with_offsets(m.alpha.clone().fill_(float("nan")), m.beta)
    with pytest.raises(ValueError):
        deformable_warp(frame, bad)
    with pytest.raises(ValueError):
        deformable_warp(frame[0], m)
    with pytest.raises(ValueError):
        WarpConfig(4)


def test_warp_all_references(gen):
    frames = {n: torch.rand(1, 3, 6, 6, generator=gen, dtype=torch.float64) for n in REFERENCE_TIMES}
    ident = {n: MotionField.identity(1, 6, 6, 3, dtype=torch.float64) for n in REFERENCE_TIMES}
    out = warp_all_references(frames, MotionSet(ident, torch.zeros(1, 1, 6, 6, dtype=torch.float64)))
    assert all(torch.equal(out[n], frames[n]) for n in REFERENCE_TIMES)

    single = {1: frames[1]}
    m = random_field(gen, b=1, h=6, w=6, k=3)
    assert torch.equal(warp_all_references(single, {1: m})[1], deformable_warp(frames[1], m))

    ones = torch.ones(1, 1, 6, 6, dtype=torch.float64)
    shifts = {-2: (1, 0), -1: (0, 1), 1: (-1, 0), 2: (0, -2)}
    moved = warp_all_references(frames, {n: MotionField.translation(a * ones, b * ones, 3)
                                         for n, (a, b) in shifts.items()})
    for n, (a, b) in shifts.items():
        rows = (torch.arange(6) + a).clamp(0, 5)
        cols = (torch.arange(6) + b).clamp(0, 5)
        assert torch.equal(moved[n], frames[n][..., rows, :][..., cols])

    with pytest.raises(ValueError):
        warp_all_references(frames, {1: m})
