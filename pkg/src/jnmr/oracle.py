"""Analytic-oracle self check of the kinematic regression, warping and synthesis.

Every property compares the implementation against values derived from the
generator's closed-form trajectories, or against an algebraic symmetry.
"""
from __future__ import annotations

import contextlib
from dataclasses import dataclass
from typing import Callable, Dict, Iterator, List, Optional

import numpy as np
import torch

from . import motion as motion_mod
from .data import FAMILIES, KinematicScene, Sprite, generate_scene, random_scene
from .metrics import psnr
from .motion import (
    REFERENCE_TIMES,
    MotionField,
    MotionSet,
    RegressedMotions,
    regress_backward_motion,
    regress_forward_motion,
    solve_individual_quadratic,
)
from .regression import synthesize_intermediate
from .warp import deformable_warp

TOL = 1e-5


@dataclass
class PropertyResult:
    name: str
    passed: bool
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def _scenes(family: str, n: int, seed: int = 0, kernel_size: int = 3):
    for i in range(n):
        rng = np.random.default_rng([seed, FAMILIES.index(family), i])
        yield generate_scene(random_scene(rng, family, 32, 32), kernel_size, dtype=torch.float64)


def _offset_error(got: MotionField, want: MotionField) -> float:
    return max(float((got.alpha - want.alpha).abs().max()), float((got.beta - want.beta).abs().max()))


def _single_sprite(v0, accel, accel_after=None) -> KinematicScene:
    sprite = Sprite("rect", 4.0, (16.0, 16.0), v0, accel, ((0.8, 0.2, 0.2), (0.2, 0.2, 0.8)), accel_after=accel_after)
    return KinematicScene(32, 32, (0.5, 0.5, 0.5), [sprite], "quadratic")


def _regression_error(family: str, n: int, forward: bool) -> float:
    worst = 0.0
    for g in _scenes(family, n):
        d = g.true_displacements
        got = regress_forward_motion(d[-2], d[-1], d[1]) if forward else regress_backward_motion(d[2], d[1], d[-1])
        worst = max(worst, _offset_error(got, g.true_regressed[0 if forward else 1]))
    return worst


def prop_constant_velocity() -> PropertyResult:
    g = generate_scene(_single_sprite((1.0, 0.0), (0.0, 0.0)), 3, dtype=torch.float64)
    d = g.true_displacements
    m1 = float(d[-1].alpha[0, 0, 16, 16])
    fwd = regress_forward_motion(d[-2], d[-1], d[1])
    err = max(abs(m1 - 1.0), float(fwd.alpha.abs().max()), float(fwd.beta.abs().max()))
    return PropertyResult("constant_velocity", err <= TOL, f"M_-1 alpha={m1:.6f}, max|M_f|={err:.2e}")


def prop_pure_acceleration() -> PropertyResult:
    g = generate_scene(_single_sprite((0.0, 0.0), (1.0, 0.0)), 3, dtype=torch.float64)
    d = g.true_displacements
    vals = [float(d[n].alpha[0, 0, 16, 16]) for n in (-2, -1, 1)]
    fwd = float(regress_forward_motion(d[-2], d[-1], d[1]).alpha[0, 0, 16, 16])
    err = max(abs(vals[0] + 2.0), abs(vals[1] + 0.5), abs(vals[2] + 0.5), abs(fwd + 1.0))
    return PropertyResult("pure_acceleration", err <= TOL, f"M=(-2,-1,1)->{vals}, M_f={fwd:.6f} (want -1)")


def _family_prop(family: str, forward: bool, n: int) -> PropertyResult:
    err = _regression_error(family, n, forward)
    side = "forward" if forward else "backward"
    return PropertyResult(f"{side}_regression_{family}", err <= TOL, f"max |err| {err:.2e} px over {n} scenes")


def prop_individual_quadratic() -> PropertyResult:
    rng = np.random.default_rng(3)
    worst = 0.0
    for _ in range(50):
        c0, v, a = rng.normal(size=3)
        f = lambda s: c0 + v * s + a * s * s
        got_v, got_a = solve_individual_quadratic(f(-1.0), f(0.0), f(1.0))
        worst = max(worst, abs(got_v - v), abs(got_a - a))
    return PropertyResult("individual_quadratic", worst <= 1e-9, f"max coefficient error {worst:.2e}")


def random_motion_set(gen: torch.Generator, batch=1, h=8, w=8, k=3, dtype=torch.float64) -> MotionSet:
    taps = k * k
    fields = {}
    for n in REFERENCE_TIMES:
        wts = torch.softmax(torch.randn(batch, taps, h, w, generator=gen, dtype=dtype), dim=1)
        a = 3 * torch.randn(batch, taps, h, w, generator=gen, dtype=dtype)
        b = 3 * torch.randn(batch, taps, h, w, generator=gen, dtype=dtype)
        fields[n] = MotionField(wts, a, b, k, 1)
    return MotionSet(fields, torch.rand(batch, 1, h, w, generator=gen, dtype=dtype))


def prop_time_reversal(n: int = 20) -> PropertyResult:
    gen = torch.Generator().manual_seed(11)
    worst = 0.0
    for _ in range(n):
        ms = random_motion_set(gen)
        rev = ms.reversed()
        bwd = regress_backward_motion(ms[2], ms[1], ms[-1])
        dual = regress_forward_motion(rev[-2], rev[-1], rev[1])
        worst = max(worst, _offset_error(bwd, dual), float((bwd.weights - dual.weights).abs().max()))
    return PropertyResult("time_reversal_duality", worst <= TOL, f"max |M_b - M_f(reversed)| {worst:.2e}")


def prop_occlusion_swap(n: int = 10) -> PropertyResult:
    gen = torch.Generator().manual_seed(12)
    worst = 0.0
    for _ in range(n):
        ms = random_motion_set(gen)
        frames = {t: torch.rand(1, 3, 8, 8, generator=gen, dtype=torch.float64) for t in REFERENCE_TIMES}
        fwd = regress_forward_motion(ms[-2], ms[-1], ms[1])
        bwd = regress_backward_motion(ms[2], ms[1], ms[-1])
        theta = torch.rand(1, 1, 8, 8, generator=gen, dtype=torch.float64)
        out = synthesize_intermediate(frames, ms, RegressedMotions(fwd, bwd, theta))
        swapped = synthesize_intermediate({t: frames[-t] for t in REFERENCE_TIMES}, ms.reversed(),
                                          RegressedMotions(bwd, fwd, 1.0 - theta))
        worst = max(worst, float((out - swapped).abs().max()))
    return PropertyResult("occlusion_swap_symmetry", worst <= TOL, f"max |I - I(swapped)| {worst:.2e}")


def prop_identity_warp() -> PropertyResult:
    gen = torch.Generator().manual_seed(13)
    frame = torch.rand(2, 3, 9, 11, generator=gen)
    out = deformable_warp(frame, MotionField.identity(2, 9, 11, 5, 2))
    return PropertyResult("identity_warp_bit_exact", torch.equal(out, frame), "centre tap, zero offsets")


def prop_integer_shift() -> PropertyResult:
    gen = torch.Generator().manual_seed(14)
    frame = torch.rand(1, 3, 10, 10, generator=gen, dtype=torch.float64)
    ones = torch.ones(1, 1, 10, 10, dtype=torch.float64)
    out = deformable_warp(frame, MotionField.translation(2 * ones, -1 * ones, 3))
    want = frame[..., 2:8, 0:6]
    err = float((out[..., 0:6, 1:7] - want).abs().max())
    return PropertyResult("integer_shift", err == 0.0, f"interior error {err:.2e}")


def prop_warp_consistency(n: int = 6) -> PropertyResult:
    worst = float("inf")
    for family in FAMILIES:
        for g in _scenes(family, n, seed=5):
            for t in REFERENCE_TIMES:
                worst = min(worst, float(psnr(deformable_warp(g.frames[t], g.true_motions[t]), g.target)))
    return PropertyResult("oracle_warp_consistency", worst >= 40.0, f"min PSNR {worst:.2f} dB (need >= 40)")


def prop_static_scene() -> PropertyResult:
    g = generate_scene(_single_sprite((0.0, 0.0), (0.0, 0.0)), 3, dtype=torch.float64)
    still = all(torch.equal(g.frames[t], g.target) for t in REFERENCE_TIMES)
    zero = all(float(g.true_displacements[t].alpha.abs().max()) == 0.0 for t in REFERENCE_TIMES)
    return PropertyResult("static_scene", still and zero, f"frames equal target: {still}, motions zero: {zero}")


def prop_regressed_weights() -> PropertyResult:
    gen = torch.Generator().manual_seed(15)
    ms = random_motion_set(gen)
    fwd = regress_forward_motion(ms[-2], ms[-1], ms[1])
    err = float((fwd.weights.sum(dim=1) - 1).abs().max())
    return PropertyResult("regressed_weights_normalised", err <= TOL, f"max |sum W - 1| {err:.2e}")


PROPERTIES: Dict[str, Callable[[], PropertyResult]] = {
    "constant_velocity": prop_constant_velocity,
    "pure_acceleration": prop_pure_acceleration,
    "forward_regression_quadratic": lambda: _family_prop("quadratic", True, 20),
    "backward_regression_quadratic": lambda: _family_prop("quadratic", False, 20),
    "forward_regression_piecewise": lambda: _family_prop("piecewise", True, 20),
    "backward_regression_piecewise": lambda: _family_prop("piecewise", False, 20),
    "forward_regression_linear": lambda: _family_prop("linear", True, 20),
    "individual_quadratic": prop_individual_quadratic,
    "time_reversal_duality": prop_time_reversal,
    "occlusion_swap_symmetry": prop_occlusion_swap,
    "identity_warp_bit_exact": prop_identity_warp,
    "integer_shift": prop_integer_shift,
    "oracle_warp_consistency": prop_warp_consistency,
    "static_scene": prop_static_scene,
    "regressed_weights_normalised": prop_regressed_weights,
}

# deliberate defects for checking that the suite notices them
MUTATIONS = {
    # sign of the (M_1 - M_-1) term flipped in the forward three-point form
    "forward_sign": ("FORWARD_COEFFS", (2.0 / 3.0, -1.0 / 3.0, -1.0 / 3.0)),
}


@contextlib.contextmanager
def mutated(name: Optional[str]) -> Iterator[None]:
    if name is None:
        yield
        return
    if name not in MUTATIONS:
        raise ValueError(f"unknown mutation {name!r}; expected one of {sorted(MUTATIONS)}")
    attr, value = MUTATIONS[name]
    saved = getattr(motion_mod, attr)
    setattr(motion_mod, attr, value)
    try:
        yield
    finally:
        setattr(motion_mod, attr, saved)


def oracle_check(mutation: Optional[str] = None) -> List[PropertyResult]:
    """Run every property (optionally under an injected defect); never raises on failure."""
    results = []
    with mutated(mutation):
        for name, prop in PROPERTIES.items():
            try:
                results.append(prop())
            except Exception as exc:  # a crash is a failed property, not a crashed report
                results.append(PropertyResult(name, False, f"raised {type(exc).__name__}: {exc}"))
    return results
