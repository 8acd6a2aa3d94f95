"""Frame quality metrics and the temporal-profile visualisation."""
from __future__ import annotations

from typing import Sequence

import torch
import torch.nn.functional as F

PSNR_CAP = 100.0


def _batched(x: torch.Tensor) -> torch.Tensor:
    if x.dim() == 3:
        return x.unsqueeze(0)
    if x.dim() != 4:
        raise ValueError(f"expected (C, H, W) or (B, C, H, W), got {tuple(x.shape)}")
    return x


def psnr(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Per-sample PSNR in dB for frames in [0, 1], computed in double precision.

    Returns shape ``(B,)``; MSE below 1e-10 is reported as the 100 dB cap.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    p, t = _batched(pred).double(), _batched(target).double()
    mse = (p - t).pow(2).flatten(1).mean(dim=1)
    out = 10.0 * torch.log10(1.0 / mse.clamp_min(1e-300))
    return torch.where(mse < 1e-10, torch.full_like(out, PSNR_CAP), out)


def gaussian_window(size: int = 11, sigma: float = 1.5, dtype=torch.float64) -> torch.Tensor:
    coords = torch.arange(size, dtype=dtype) - (size - 1) / 2
    g = torch.exp(-coords.pow(2) / (2 * sigma * sigma))
    g = g / g.sum()
    return torch.outer(g, g)


def ssim(pred: torch.Tensor, target: torch.Tensor, window_size: int = 11, sigma: float = 1.5) -> torch.Tensor:
    """Per-sample SSIM with a Gaussian window over valid positions, averaged over channels.

    Uses the usual constants ``(0.01)^2`` and ``(0.03)^2`` for unit dynamic
    range.  Frames smaller than the window shrink it to fit.
    """
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    x, y = _batched(pred).double(), _batched(target).double()
    c = x.shape[1]
    size = min(window_size, x.shape[-2], x.shape[-1])
    win = gaussian_window(size, sigma).to(x.device).expand(c, 1, size, size)

    def filt(z):
        return F.conv2d(z, win, groups=c)

    mu_x, mu_y = filt(x), filt(y)
    sxx = filt(x * x) - mu_x ** 2
    syy = filt(y * y) - mu_y ** 2
    sxy = filt(x * y) - mu_x * mu_y
    c1, c2 = 0.01 ** 2, 0.03 ** 2
    num = (2 * mu_x * mu_y + c1) * (2 * sxy + c2)
    den = (mu_x ** 2 + mu_y ** 2 + c1) * (sxx + syy + c2)
    return (num / den).flatten(1).mean(dim=1)


def temporal_profile(sequence: Sequence[torch.Tensor], row_index: int) -> torch.Tensor:
    """Stack pixel row ``row_index`` of every frame into a ``(C, T, W)`` image."""
    if len(sequence) == 0:
        raise ValueError("empty sequence")
    rows = []
    for frame in sequence:
        f = frame[0] if frame.dim() == 4 else frame
        if f.dim() != 3:
            raise ValueError(f"frames must be (C, H, W), got {tuple(frame.shape)}")
        if not 0 <= row_index < f.shape[-2]:
            raise IndexError(f"row {row_index} outside a frame of height {f.shape[-2]}")
        rows.append(f[:, row_index, :])
    return torch.stack(rows, dim=1)
