"""Frames, deformable-kernel motions and the closed-form kinematic regression.

Tensors are batched: frames are ``(B, C, H, W)``, a motion field holds three
``(B, K*K, H, W)`` grids and occlusion / coefficient maps are ``(B, 1, H, W)``.
Nothing in this module owns learnable parameters.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, Optional, Sequence, Tuple

import torch

REFERENCE_TIMES: Tuple[int, int, int, int] = (-2, -1, 1, 2)


def check_frame(frame: torch.Tensor, name: str = "frame") -> torch.Tensor:
    if frame.dim() != 4:
        raise ValueError(f"{name} must be (B, C, H, W), got shape {tuple(frame.shape)}")
    if min(frame.shape[1:]) < 1:
        raise ValueError(f"{name} has an empty dimension: {tuple(frame.shape)}")
    return frame


@dataclass(frozen=True)
class MotionField:
    """Per-pixel deformable kernel: tap weights plus vertical/horizontal offsets.

    ``alpha`` is the vertical (row) offset, ``beta`` the horizontal one, both in
    pixels.  Weights are expected to be non-negative and sum to one over taps.
    """

    weights: torch.Tensor
    alpha: torch.Tensor
    beta: torch.Tensor
    kernel_size: int = 5
    dilation: int = 1

    def __post_init__(self):
        if self.kernel_size < 1:
            raise ValueError(f"kernel_size must be positive, got {self.kernel_size}")
        if self.dilation < 0:
            raise ValueError(f"dilation must be non-negative, got {self.dilation}")
        taps = self.kernel_size ** 2
        shape = self.weights.shape
        if self.weights.dim() != 4 or shape[1] != taps:
            raise ValueError(f"weights must be (B, {taps}, H, W), got {tuple(shape)}")
        if self.alpha.shape != shape or self.beta.shape != shape:
            raise ValueError(
                f"weights/alpha/beta shapes differ: {tuple(shape)}, "
                f"{tuple(self.alpha.shape)}, {tuple(self.beta.shape)}"
            )

    @property
    def shape(self) -> torch.Size:
        return self.weights.shape

    @property
    def spatial_size(self) -> Tuple[int, int]:
        return tuple(self.weights.shape[-2:])

    def channels(self) -> torch.Tensor:
        """Stack (W, alpha, beta) into one ``(B, 3*K*K, H, W)`` tensor."""
        return torch.cat([self.weights, self.alpha, self.beta], dim=1)

    @classmethod
    def from_channels(cls, stacked: torch.Tensor, kernel_size: int, dilation: int = 1) -> "MotionField":
        w, a, b = torch.chunk(stacked, 3, dim=1)
        return cls(w, a, b, kernel_size, dilation)

    @classmethod
    def identity(cls, batch: int, height: int, width: int, kernel_size: int = 5,
                 dilation: int = 1, dtype=torch.float32, device=None) -> "MotionField":
        """All mass on the centre tap, zero offsets."""
        taps = kernel_size ** 2
        w = torch.zeros(batch, taps, height, width, dtype=dtype, device=device)
        w[:, taps // 2] = 1.0
        zeros = torch.zeros_like(w)
        return cls(w, zeros, zeros.clone(), kernel_size, dilation)

    @classmethod
    def translation(cls, alpha: torch.Tensor, beta: torch.Tensor, kernel_size: int = 5,
                    dilation: int = 1) -> "MotionField":
        """Centre-tap kernel whose every tap carries the per-pixel offset ``(alpha, beta)``.

        ``alpha``/``beta`` are ``(B, 1, H, W)`` grids.
        """
        taps = kernel_size ** 2
        b, _, h, w = alpha.shape
        weights = torch.zeros(b, taps, h, w, dtype=alpha.dtype, device=alpha.device)
        weights[:, taps // 2] = 1.0
        return cls(weights, alpha.expand(b, taps, h, w).clone(), beta.expand(b, taps, h, w).clone(),
                   kernel_size, dilation)

    def with_offsets(self, alpha: torch.Tensor, beta: torch.Tensor) -> "MotionField":
        return MotionField(self.weights, alpha, beta, self.kernel_size, self.dilation)

    def negated_offsets(self) -> "MotionField":
        return self.with_offsets(-self.alpha, -self.beta)


@dataclass(frozen=True)
class MotionSet:
    """The four reference motions ``{-2, -1, 1, 2}`` plus the occlusion map."""

    motions: Dict[int, MotionField]
    occlusion: torch.Tensor

    def __post_init__(self):
        if tuple(sorted(self.motions)) != tuple(sorted(REFERENCE_TIMES)):
            raise ValueError(f"MotionSet needs exactly the keys {REFERENCE_TIMES}, got {sorted(self.motions)}")
        ref = self.motions[-2]
        for n, m in self.motions.items():
            if m.shape != ref.shape or m.kernel_size != ref.kernel_size or m.dilation != ref.dilation:
                raise ValueError(f"motion {n} does not match motion -2 in shape/K/d")
        b, _, h, w = ref.shape
        if self.occlusion.shape != (b, 1, h, w):
            raise ValueError(f"occlusion must be {(b, 1, h, w)}, got {tuple(self.occlusion.shape)}")

    def __getitem__(self, n: int) -> MotionField:
        return self.motions[n]

    def reversed(self) -> "MotionSet":
        """Index-negated set: ``M'_n = M_{-n}`` and ``O' = 1 - O``."""
        return MotionSet({n: self.motions[-n] for n in REFERENCE_TIMES}, 1.0 - self.occlusion)


@dataclass(frozen=True)
class RegressedMotions:
    """Forward/backward regressed motions and their mixing coefficient theta.

    A branch left as ``None`` contributes nothing to the offset frame.
    """

    forward: Optional[MotionField]
    backward: Optional[MotionField]
    theta: torch.Tensor
    extra: Tuple[MotionField, ...] = field(default_factory=tuple)

    def __post_init__(self):
        if self.forward is not None and self.backward is not None:
            if self.forward.shape != self.backward.shape:
                raise ValueError("forward/backward regressed motions differ in shape")

    def fields(self) -> Tuple[MotionField, ...]:
        return tuple(m for m in (self.forward, self.backward) if m is not None) + tuple(self.extra)


def _check_same(*fields: MotionField) -> None:
    ref = fields[0]
    for f in fields[1:]:
        if f.shape != ref.shape or f.kernel_size != ref.kernel_size or f.dilation != ref.dilation:
            raise ValueError(f"motion fields differ: {tuple(ref.shape)} vs {tuple(f.shape)}")


def linear_combination(coeffs: Sequence[float], fields: Sequence[MotionField]) -> Tuple[torch.Tensor, ...]:
    """Raw ``(weight_mix, alpha, beta)`` of ``sum c_i * field_i`` before weight normalisation."""
    _check_same(*fields)
    w = sum(c * f.weights for c, f in zip(coeffs, fields))
    a = sum(c * f.alpha for c, f in zip(coeffs, fields))
    b = sum(c * f.beta for c, f in zip(coeffs, fields))
    return w, a, b


def finalize(raw: Tuple[torch.Tensor, ...], kernel_size: int, dilation: int) -> MotionField:
    """Turn a raw combination into a valid field: softmax over taps for the weights."""
    w, a, b = raw
    return MotionField(torch.softmax(w, dim=1), a, b, kernel_size, dilation)


# (M_1 - M_-1) - 2 (M_-1 - M_-2), divided by 3, as coefficients on (M_-2, M_-1, M_1)
FORWARD_COEFFS = (2.0 / 3.0, -1.0, 1.0 / 3.0)
# the backward form mirrors it on (M_2, M_1, M_-1)
BACKWARD_COEFFS = (2.0 / 3.0, -1.0, 1.0 / 3.0)


def regress_forward_raw(m_minus2: MotionField, m_minus1: MotionField, m_plus1: MotionField):
    return linear_combination(FORWARD_COEFFS, (m_minus2, m_minus1, m_plus1))


def regress_forward_motion(m_minus2: MotionField, m_minus1: MotionField, m_plus1: MotionField) -> MotionField:
    """Forward motion just before the target instant from the three left-leaning references.

    Offsets get ``[(M_1 - M_-1) - 2 (M_-1 - M_-2)] / 3`` literally; the weight
    channel gets the softmax of the same combination.
    """
    return finalize(regress_forward_raw(m_minus2, m_minus1, m_plus1), m_minus2.kernel_size, m_minus2.dilation)


def regress_backward_raw(m_plus2: MotionField, m_plus1: MotionField, m_minus1: MotionField):
    return linear_combination(BACKWARD_COEFFS, (m_plus2, m_plus1, m_minus1))


def regress_backward_motion(m_plus2: MotionField, m_plus1: MotionField, m_minus1: MotionField) -> MotionField:
    """Mirror of :func:`regress_forward_motion`: ``[(M_-1 - M_1) - 2 (M_1 - M_2)] / 3``."""
    return finalize(regress_backward_raw(m_plus2, m_plus1, m_minus1), m_plus2.kernel_size, m_plus2.dilation)


def solve_individual_quadratic(m_prev, m_mid, m_next):
    """Velocity and acceleration of the quadratic through three unit-spaced samples.

    With ``m(s) = m_mid + v*s + a*s**2`` sampled at ``s = -1, 0, 1``:
    ``v = (m_next - m_prev) / 2`` and ``a = [(m_next - m_mid) - (m_mid - m_prev)] / 2``.
    Works on tensors, floats or :class:`MotionField` (offset channels only; the
    result is then a pair of ``(alpha, beta)`` tuples).
    """
    if isinstance(m_prev, MotionField):
        _check_same(m_prev, m_mid, m_next)
        v = tuple((n - p) / 2 for p, n in ((m_prev.alpha, m_next.alpha), (m_prev.beta, m_next.beta)))
        a = tuple(
            ((n - m) - (m - p)) / 2
            for p, m, n in ((m_prev.alpha, m_mid.alpha, m_next.alpha), (m_prev.beta, m_mid.beta, m_next.beta))
        )
        return v, a
    if torch.is_tensor(m_prev) and not (m_prev.shape == m_mid.shape == m_next.shape):
        raise ValueError("quadratic samples differ in shape")
    return (m_next - m_prev) / 2, ((m_next - m_mid) - (m_mid - m_prev)) / 2


def _sum_frames(frames: Sequence[torch.Tensor]) -> torch.Tensor:
    if len(frames) == 0:
        raise ValueError("frame list is empty")
    ref = frames[0].shape
    for f in frames[1:]:
        if f.shape != ref:
            raise ValueError(f"frame shapes differ: {tuple(ref)} vs {tuple(f.shape)}")
    total = frames[0]
    for f in frames[1:]:
        total = total + f
    return total


def blend_occlusion(forward_frames: Sequence[torch.Tensor], backward_frames: Sequence[torch.Tensor],
                    occlusion: torch.Tensor) -> torch.Tensor:
    """Basic synthesis ``O * sum(forward) + (1 - O) * sum(backward)``."""
    fwd = _sum_frames(forward_frames)
    bwd = _sum_frames(backward_frames)
    if fwd.shape != bwd.shape:
        raise ValueError(f"forward/backward frame shapes differ: {tuple(fwd.shape)} vs {tuple(bwd.shape)}")
    return occlusion * fwd + (1.0 - occlusion) * bwd


def compose_offset_frame(warped_fwd: Optional[torch.Tensor], warped_bwd: Optional[torch.Tensor],
                         theta: torch.Tensor) -> torch.Tensor:
    """Visual movement offset ``theta * fwd + (1 - theta) * bwd``; a missing side counts as zero."""
    if warped_fwd is None and warped_bwd is None:
        raise ValueError("at least one warped frame is required")
    if warped_fwd is not None and warped_bwd is not None and warped_fwd.shape != warped_bwd.shape:
        raise ValueError(f"shape mismatch: {tuple(warped_fwd.shape)} vs {tuple(warped_bwd.shape)}")
    out = 0.0
    if warped_fwd is not None:
        out = out + theta * warped_fwd
    if warped_bwd is not None:
        out = out + (1.0 - theta) * warped_bwd
    return out


def compose_predicted_frame(base: torch.Tensor, offset: torch.Tensor) -> torch.Tensor:
    if base.shape != offset.shape:
        raise ValueError(f"shape mismatch: {tuple(base.shape)} vs {tuple(offset.shape)}")
    return base + offset


def composition_mass(occlusion: torch.Tensor, regressed: Optional[RegressedMotions]) -> torch.Tensor:
    """Total kernel mass the synthesis puts on each pixel.

    Every warp of a constant-one image is one, so running the synthesis on ones
    gives ``2*O + 2*(1-O)`` for the basic frame plus ``theta`` / ``1-theta`` for
    each present regressed branch.  Dividing by it keeps a static scene at its
    own brightness.
    """
    mass = 2.0 * occlusion + 2.0 * (1.0 - occlusion)
    if regressed is not None:
        if regressed.forward is not None:
            mass = mass + regressed.theta
        if regressed.backward is not None:
            mass = mass + (1.0 - regressed.theta)
    return mass
