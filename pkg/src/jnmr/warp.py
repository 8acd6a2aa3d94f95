"""Deformable-kernel warping with bilinear sampling and clamp-to-edge borders."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Dict

import numpy as np
import torch

try:
    from . import _warp_kernels as _kernels
except ImportError:  # pragma: no cover - numba missing
    _kernels = None

from .motion import MotionField, MotionSet, check_frame


@dataclass(frozen=True)
class WarpConfig:
    kernel_size: int = 5
    dilation: int = 1
    boundary: str = "clamp"
    sampling: str = "bilinear"

    def __post_init__(self):
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.dilation < 0:
            raise ValueError(f"dilation must be non-negative, got {self.dilation}")
        if self.boundary != "clamp":
            raise ValueError(f"unsupported boundary policy {self.boundary!r}")
        if self.sampling != "bilinear":
            raise ValueError(f"unsupported sampling {self.sampling!r}")


def _tap_offsets(kernel_size: int, dilation: int, device, dtype):
    # taps re-centred so that the zero-offset centre tap samples the pixel itself
    taps = torch.arange(kernel_size, device=device, dtype=dtype) - (kernel_size - 1) // 2
    dy = (taps.repeat_interleave(kernel_size) * dilation).view(1, -1, 1, 1)
    dx = (taps.repeat(kernel_size) * dilation).view(1, -1, 1, 1)
    return dy, dx


def _validate(frame: torch.Tensor, motion: MotionField, cfg: WarpConfig | None) -> None:
    check_frame(frame)
    if cfg is not None and (cfg.kernel_size != motion.kernel_size or cfg.dilation != motion.dilation):
        raise ValueError(
            f"motion has K={motion.kernel_size}, d={motion.dilation} but config expects "
            f"K={cfg.kernel_size}, d={cfg.dilation}"
        )
    b, c, h, w = frame.shape
    mb, _, mh, mw = motion.shape
    if (mb, mh, mw) != (b, h, w):
        raise ValueError(f"motion grid {tuple(motion.shape)} does not match frame {tuple(frame.shape)}")
    if not bool(torch.isfinite(motion.alpha.sum() + motion.beta.sum())):
        raise ValueError("motion offsets contain non-finite values")


def deformable_warp_reference(frame: torch.Tensor, motion: MotionField, cfg: WarpConfig | None = None) -> torch.Tensor:
    """Pure-torch warp, differentiated by autograd; runs on any device."""
    _validate(frame, motion, cfg)
    b, c, h, w = frame.shape
    taps = motion.shape[1]
    dy, dx = _tap_offsets(motion.kernel_size, motion.dilation, frame.device, frame.dtype)
    rows = torch.arange(h, device=frame.device, dtype=frame.dtype).view(1, 1, h, 1)
    cols = torch.arange(w, device=frame.device, dtype=frame.dtype).view(1, 1, 1, w)
    y = (rows + dy + motion.alpha).clamp(0, h - 1)
    x = (cols + dx + motion.beta).clamp(0, w - 1)

    y0 = y.detach().floor()
    x0 = x.detach().floor()
    wy = y - y0
    wx = x - x0
    y0 = y0.long()
    x0 = x0.long()
    y1 = (y0 + 1).clamp(max=h - 1)
    x1 = (x0 + 1).clamp(max=w - 1)

    # the four bilinear corners of every tap, gathered in one pass
    wts = motion.weights
    coef = torch.cat([wts * (1 - wy) * (1 - wx), wts * (1 - wy) * wx, wts * wy * (1 - wx), wts * wy * wx], dim=1)
    idx = torch.cat([y0 * w + x0, y0 * w + x1, y1 * w + x0, y1 * w + x1], dim=1)
    flat = frame.reshape(b, c, h * w)
    gathered = flat.gather(2, idx.reshape(b, 1, -1).expand(b, c, -1)).view(b, c, 4 * taps, h * w)
    out = (gathered * coef.reshape(b, 1, 4 * taps, h * w)).sum(dim=2)
    return out.view(b, c, h, w)


class _CompiledWarp(torch.autograd.Function):
    @staticmethod
    def forward(ctx, frame, weights, alpha, beta, dy, dx):
        arrays = [t.detach().contiguous().numpy() for t in (frame, weights, alpha, beta)]
        ctx.save_for_backward(frame, weights, alpha, beta)
        ctx.taps = (dy, dx)
        return torch.from_numpy(_kernels.warp_forward(*arrays, dy, dx))

    @staticmethod
    def backward(ctx, grad_out):
        arrays = [t.detach().contiguous().numpy() for t in ctx.saved_tensors]
        need_frame = ctx.needs_input_grad[0]
        grads = _kernels.warp_backward(grad_out.detach().contiguous().numpy(), *arrays, *ctx.taps, need_frame)
        g_frame = torch.from_numpy(grads[0]) if need_frame else None
        return (g_frame, *(torch.from_numpy(g) for g in grads[1:]), None, None)


def deformable_warp(frame: torch.Tensor, motion: MotionField, cfg: WarpConfig | None = None) -> torch.Tensor:
    """Warp ``frame`` with a per-pixel deformable kernel.

    ``out(i, j) = sum_k W_k(i, j) * frame(i + d*p_k + alpha_k(i, j), j + d*q_k + beta_k(i, j))``
    where ``(p_k, q_k)`` runs over the centred ``K x K`` grid.  Sample positions
    are clamped to the image before bilinear interpolation, so the output is a
    convex combination of input pixels whenever the weights are.

    On CPU this runs compiled forward/backward kernels; elsewhere it falls back
    to :func:`deformable_warp_reference`.
    """
    tensors = (frame, motion.weights, motion.alpha, motion.beta)
    if _kernels is None or any(t.device.type != "cpu" or t.dtype != frame.dtype for t in tensors) \
            or frame.dtype not in (torch.float32, torch.float64):
        return deformable_warp_reference(frame, motion, cfg)
    _validate(frame, motion, cfg)
    k, d = motion.kernel_size, motion.dilation
    taps = np.arange(k) - (k - 1) // 2
    dy = np.repeat(taps, k).astype(np.float64) * d
    dx = np.tile(taps, k).astype(np.float64) * d
    return _CompiledWarp.apply(*tensors, dy, dx)


def warp_all_references(frames: Mapping[int, torch.Tensor], motions: MotionSet | Mapping[int, MotionField],
                        cfg: WarpConfig | None = None) -> Dict[int, torch.Tensor]:
    """Warp every reference frame by its own motion; keys follow ``frames``."""
    table = motions.motions if isinstance(motions, MotionSet) else motions
    missing = [n for n in frames if n not in table]
    if missing:
        raise ValueError(f"no motion for reference frames {missing}")
    return {n: deformable_warp(frame, table[n], cfg) for n, frame in frames.items()}
