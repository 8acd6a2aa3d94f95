"""Joint non-linear motion regression: ConvLSTM combination of motion variations.

Every learned branch is a residual on top of the closed-form regression, with
a zero-initialised head, so an untrained regressor reproduces the analytic
model exactly.
"""
from __future__ import annotations

from typing import Mapping, Optional, Sequence, Tuple

import torch
import torch.nn as nn

from .motion import (
    REFERENCE_TIMES,
    MotionField,
    MotionSet,
    RegressedMotions,
    blend_occlusion,
    compose_offset_frame,
    compose_predicted_frame,
    composition_mass,
    finalize,
    regress_backward_motion,
    regress_forward_motion,
)
from .warp import WarpConfig, deformable_warp, warp_all_references

REGRESSION_MODES = (
    "linear",
    "quadratic",
    "linear_combination",
    "unidirectional_fwd",
    "unidirectional_bwd",
    "second_order_unidirectional",
    "joint_bidirectional",
)
LEARNED_MODES = {"unidirectional_fwd", "unidirectional_bwd", "second_order_unidirectional", "joint_bidirectional"}


def check_mode(mode: str) -> str:
    if mode not in REGRESSION_MODES:
        raise ValueError(f"unknown regression mode {mode!r}; expected one of {REGRESSION_MODES}")
    return mode


class ConvLSTMCell(nn.Module):
    """Convolutional LSTM cell with bias-free gates.

    Without biases a zero input on a zero state stays exactly zero, so a static
    scene never picks up a learned residual.
    """

    def __init__(self, input_channels: int, hidden_channels: int, kernel_size: int = 3):
        super().__init__()
        self.input_channels = input_channels
        self.hidden_channels = hidden_channels
        self.gates = nn.Conv2d(input_channels + hidden_channels, 4 * hidden_channels, kernel_size,
                               padding=kernel_size // 2, bias=False)

    def init_state(self, x: torch.Tensor) -> Tuple[torch.Tensor, torch.Tensor]:
        b, _, h, w = x.shape
        zeros = x.new_zeros(b, self.hidden_channels, h, w)
        return zeros, zeros

    def forward(self, x: torch.Tensor, state=None) -> Tuple[torch.Tensor, torch.Tensor]:
        if state is None:
            state = self.init_state(x)
        hidden, cell = state
        i, f, o, g = torch.chunk(self.gates(torch.cat([x, hidden], dim=1)), 4, dim=1)
        cell = torch.sigmoid(f) * cell + torch.sigmoid(i) * torch.tanh(g)
        hidden = torch.sigmoid(o) * torch.tanh(cell)
        return hidden, cell


def combine_variations(variation_seq: Sequence[torch.Tensor], cell: ConvLSTMCell, head: nn.Module,
                       kernel_size: int, dilation: int = 1, state=None):
    """Run the ConvLSTM over two motion variations and add its residual to the closed form.

    ``variation_seq`` holds stacked ``(W, alpha, beta)`` differences, e.g.
    ``[M_-1 - M_-2, M_1 - M_-1]`` for the forward branch.  The closed form
    ``(d2 - 2 d1) / 3`` is exactly the three-point regression of the original
    motions.  Returns the regressed field and the final ``(hidden, cell)``.
    """
    if len(variation_seq) != 2:
        raise ValueError(f"expected a sequence of two variations, got {len(variation_seq)}")
    d1, d2 = variation_seq
    if d1.shape != d2.shape:
        raise ValueError(f"variation shapes differ: {tuple(d1.shape)} vs {tuple(d2.shape)}")
    for d in variation_seq:
        state = cell(d, state)
    raw = (d2 - 2.0 * d1) / 3.0 + head(state[0])
    return finalize(torch.chunk(raw, 3, dim=1), kernel_size, dilation), state


def forward_variations(motions: MotionSet):
    m = {n: motions[n].channels() for n in REFERENCE_TIMES}
    return [m[-1] - m[-2], m[1] - m[-1]]


def backward_variations(motions: MotionSet):
    m = {n: motions[n].channels() for n in REFERENCE_TIMES}
    return [m[1] - m[2], m[-1] - m[1]]


def quadratic_regression(motions: MotionSet) -> MotionField:
    """Curvature of the single quadratic through ``(-1, M_-1), (0, 0), (1, M_1)``.

    The target's own motion is zero by definition, which makes the three
    samples unit spaced; the regressed field is ``2a``, i.e. the second
    derivative, which coincides with the three-point forms on exact quadratics.
    """
    prev, nxt = motions[-1].channels(), motions[1].channels()
    zero = torch.zeros_like(prev)
    accel = ((nxt - zero) - (zero - prev)) / 2.0
    ref = motions[-1]
    return finalize(torch.chunk(2.0 * accel, 3, dim=1), ref.kernel_size, ref.dilation)


def _logit(p: torch.Tensor, eps: float = 1e-6) -> torch.Tensor:
    p = p.clamp(eps, 1 - eps)
    return torch.log(p) - torch.log1p(-p)


def regress(motions: MotionSet, mode: str, params: Optional["MotionRegressor"] = None) -> RegressedMotions:
    """Regressed forward/backward motions and theta for one of the ablation modes.

    Closed-form modes need no parameters; learned modes take them from ``params``.
    """
    check_mode(mode)
    occ = motions.occlusion
    if mode == "linear":
        return RegressedMotions(None, None, occ)
    if mode == "quadratic":
        q = quadratic_regression(motions)
        return RegressedMotions(q, q, occ)
    if mode == "linear_combination":
        fwd = regress_forward_motion(motions[-2], motions[-1], motions[1])
        bwd = regress_backward_motion(motions[2], motions[1], motions[-1])
        return RegressedMotions(fwd, bwd, occ)
    if params is None:
        raise ValueError(f"mode {mode!r} needs learned regressor parameters")
    return params.learned(motions, mode)


class MotionRegressor(nn.Module):
    """Parameters of the learned regression modes (ConvLSTM, residual and theta heads)."""

    def __init__(self, mode: str = "joint_bidirectional", kernel_size: int = 5, dilation: int = 1,
                 hidden_channels: Optional[int] = None, conv_kernel: int = 3, share: bool = True):
        super().__init__()
        self.mode = check_mode(mode)
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.share = share
        if mode not in LEARNED_MODES:
            return
        channels = 3 * kernel_size ** 2
        hidden = hidden_channels or channels
        self.cell_f = ConvLSTMCell(channels, hidden, conv_kernel)
        self.head_f = nn.Conv2d(hidden, channels, 1, bias=False)
        if not share:
            self.cell_b = ConvLSTMCell(channels, hidden, conv_kernel)
            self.head_b = nn.Conv2d(hidden, channels, 1, bias=False)
        self.theta_head = nn.Conv2d(2 * hidden, 1, 1, bias=False)
        self.reset_heads()

    def reset_heads(self) -> None:
        """Zero the residual and theta heads so the regressor starts at the closed form."""
        for name in ("head_f", "head_b", "theta_head"):
            if hasattr(self, name):
                nn.init.zeros_(getattr(self, name).weight)

    @property
    def backward_cell(self):
        return self.cell_f if self.share else self.cell_b

    @property
    def backward_head(self):
        return self.head_f if self.share else self.head_b

    def forward_branch(self, motions: MotionSet, state=None):
        return combine_variations(forward_variations(motions), self.cell_f, self.head_f,
                                  self.kernel_size, self.dilation, state)

    def backward_branch(self, motions: MotionSet, state=None):
        return combine_variations(backward_variations(motions), self.backward_cell, self.backward_head,
                                  self.kernel_size, self.dilation, state)

    def theta(self, occlusion, h_f, h_b):
        return torch.sigmoid(_logit(occlusion) + self.theta_head(torch.cat([h_f, h_b], dim=1)))

    def learned(self, motions: MotionSet, mode: str) -> RegressedMotions:
        if mode not in LEARNED_MODES or mode != self.mode:
            raise ValueError(f"regressor was built for {self.mode!r}, cannot run {mode!r}")
        occ = motions.occlusion
        if mode == "joint_bidirectional" and self.share:
            # same cell on both branches: run them as one batch
            b = occ.shape[0]
            seq = [torch.cat(pair, dim=0) for pair in zip(forward_variations(motions), backward_variations(motions))]
            both, (h, _) = combine_variations(seq, self.cell_f, self.head_f, self.kernel_size, self.dilation)
            fwd, bwd = (MotionField(both.weights[s], both.alpha[s], both.beta[s], self.kernel_size, self.dilation)
                        for s in (slice(0, b), slice(b, None)))
            return RegressedMotions(fwd, bwd, self.theta(occ, h[:b], h[b:]))
        if mode == "joint_bidirectional":
            fwd, (h_f, _) = self.forward_branch(motions)
            bwd, (h_b, _) = self.backward_branch(motions)
            return RegressedMotions(fwd, bwd, self.theta(occ, h_f, h_b))
        if mode == "unidirectional_fwd":
            fwd, _ = self.forward_branch(motions)
            return RegressedMotions(fwd, None, torch.ones_like(occ))
        if mode == "unidirectional_bwd":
            bwd, _ = self.backward_branch(motions)
            return RegressedMotions(None, bwd, torch.zeros_like(occ))
        # second order: the backward pass continues from the forward pass's state
        fwd, state = self.forward_branch(motions)
        bwd, (h_b, _) = self.backward_branch(motions, state)
        return RegressedMotions(fwd, bwd, self.theta(occ, state[0], h_b))

    def forward(self, motions: MotionSet) -> RegressedMotions:
        return regress(motions, self.mode, self)


def synthesize_intermediate(frames: Mapping[int, torch.Tensor], motions: MotionSet,
                            regressed: Optional[RegressedMotions], cfg: Optional[WarpConfig] = None,
                            normalize: bool = False) -> torch.Tensor:
    """Basic synthesis plus the visual movement offset.

    ``I~0 = O (I^-2 + I^-1) + (1 - O)(I^1 + I^2) + theta phi(I_-1, M^f) + (1 - theta) phi(I_1, M^b)``.
    With ``normalize`` the sum is divided by its kernel mass (see
    :func:`composition_mass`), which is how the network uses it.
    """
    warped = warp_all_references(frames, motions, cfg)
    base = blend_occlusion([warped[-2], warped[-1]], [warped[1], warped[2]], motions.occlusion)
    out = base
    if regressed is not None and (regressed.forward is not None or regressed.backward is not None):
        fwd = deformable_warp(frames[-1], regressed.forward, cfg) if regressed.forward is not None else None
        bwd = deformable_warp(frames[1], regressed.backward, cfg) if regressed.backward is not None else None
        out = compose_predicted_frame(base, compose_offset_frame(fwd, bwd, regressed.theta))
    if normalize:
        out = out / composition_mass(motions.occlusion, regressed)
    return out
