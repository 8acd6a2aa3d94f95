"""Coarse-to-fine synthesis enhancement: coarse reconstructions fused by a GridNet."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import torch
import torch.nn as nn
import torch.nn.functional as F

from .motion import REFERENCE_TIMES
from .rdfl import FeaturePyramid, MotionHeads, conv, upsample
from .regression import MotionRegressor, regress, synthesize_intermediate

SOURCE_FEATURES = {"f2f3": ("F2", "F3"), "f1f2": ("F2", "F1")}


@dataclass(frozen=True)
class GridFusionConfig:
    rows: int = 3
    columns: int = 4
    channels: Tuple[int, ...] = (32, 64, 96)

    def __post_init__(self):
        if self.rows != 3 or len(self.channels) != self.rows:
            raise ValueError("grid fusion uses three rows with one channel width each")
        if self.columns < 2 or self.columns % 2:
            raise ValueError(f"columns must be an even number >= 2, got {self.columns}")


def resize(x: torch.Tensor, size) -> torch.Tensor:
    if tuple(x.shape[-2:]) == tuple(size):
        return x
    if x.shape[-2] > size[0]:
        return F.adaptive_avg_pool2d(x, size)
    return upsample(x, size)


class Lateral(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.body = nn.Sequential(nn.PReLU(cin), conv(cin, cout), nn.PReLU(cout), conv(cout, cout))
        self.skip = conv(cin, cout, k=1) if cin != cout else None

    def forward(self, x):
        return self.body(x) + (x if self.skip is None else self.skip(x))


class Down(nn.Sequential):
    def __init__(self, cin, cout):
        super().__init__(nn.PReLU(cin), conv(cin, cout, stride=2), nn.PReLU(cout), conv(cout, cout))


class Up(nn.Module):
    def __init__(self, cin, cout):
        super().__init__()
        self.body = nn.Sequential(nn.PReLU(cin), conv(cin, cout), nn.PReLU(cout), conv(cout, cout))

    def forward(self, x, size):
        return self.body(upsample(x, size))


class GridNet(nn.Module):
    """Three-row residual grid: rows at H, H/2, H/4; first half of the columns
    down-samples between rows, the second half up-samples."""

    def __init__(self, row_inputs: Sequence[int], out_channels: int, cfg: GridFusionConfig):
        super().__init__()
        self.cfg = cfg
        ch = cfg.channels
        half = cfg.columns // 2
        self.inject = nn.ModuleList(Lateral(cin, c) for cin, c in zip(row_inputs, ch))
        self.lateral = nn.ModuleList(
            nn.ModuleList(Lateral(c, c) for _ in range(cfg.columns - 1)) for c in ch
        )
        self.down = nn.ModuleList(
            nn.ModuleList(Down(ch[r], ch[r + 1]) for _ in range(half)) for r in range(cfg.rows - 1)
        )
        self.up = nn.ModuleList(
            nn.ModuleList(Up(ch[r + 1], ch[r]) for _ in range(half)) for r in range(cfg.rows - 1)
        )
        self.out = conv(ch[0], out_channels)
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)

    def forward(self, rows: Sequence[torch.Tensor]) -> torch.Tensor:
        n_row, n_col, half = self.cfg.rows, self.cfg.columns, self.cfg.columns // 2
        sizes = [r.shape[-2:] for r in rows]
        state = [inj(x) for inj, x in zip(self.inject, rows)]
        for col in range(n_col):
            if col < half:
                for r in range(n_row - 1):
                    state[r + 1] = state[r + 1] + self.down[r][col](state[r])
            else:
                for r in reversed(range(n_row - 1)):
                    state[r] = state[r] + self.up[r][col - half](state[r + 1], sizes[r])
            if col < n_col - 1:
                state = [self.lateral[r][col](state[r]) for r in range(n_row)]
        return self.out(state[0])


def coarse_reconstruct(pyr: FeaturePyramid, frames: torch.Tensor, heads: Sequence[MotionHeads],
                       sources: Sequence[str], regressor: MotionRegressor, normalize: bool = True):
    """Reconstruct the middle frame at each coarse source scale.

    ``frames`` is ``(B, 4, C, H, W)``; each scale re-runs motion decoupling,
    regression (same mode and parameters as the fine level) and synthesis on
    average-pooled frames.  Returns the reconstructions and their regressions.
    """
    recons, regs = [], []
    for name, head in zip(sources, heads):
        feature = getattr(pyr, name)
        if feature is None:
            raise RuntimeError(f"pyramid level {name} is missing; run the decoder first")
        size = feature.shape[-2:]
        b, n, c, h, w = frames.shape
        small = F.adaptive_avg_pool2d(frames.flatten(0, 1), size).view(b, n, c, *size)
        refs = {t: small[:, i] for i, t in enumerate(REFERENCE_TIMES)}
        motions = head(feature)
        reg = regress(motions, regressor.mode, regressor)
        recons.append(synthesize_intermediate(refs, motions, reg, normalize=normalize))
        regs.append(reg)
    return recons, regs


def final_blend(tilde: torch.Tensor, bar: torch.Tensor, lambda_map: torch.Tensor) -> torch.Tensor:
    """``clamp(lambda * tilde + (1 - lambda) * bar, 0, 1)``."""
    if tilde.shape != bar.shape:
        raise ValueError(f"shape mismatch: {tuple(tilde.shape)} vs {tuple(bar.shape)}")
    return (lambda_map * tilde + (1.0 - lambda_map) * bar).clamp(0.0, 1.0)


class CFSE(nn.Module):
    def __init__(self, feature_channels: dict, fine_channels: int, kernel_size: int = 5, dilation: int = 1,
                 source_features: str = "f2f3", gridnet: bool = True,
                 grid: Optional[GridFusionConfig] = None, head_channels: Optional[int] = None,
                 image_channels: int = 3):
        super().__init__()
        if source_features not in SOURCE_FEATURES:
            raise ValueError(f"unknown cfse source features {source_features!r}")
        self.sources = SOURCE_FEATURES[source_features]
        # coarse heads are narrow: the deep features are wide and only need a rough decoupling
        coarse_hidden = head_channels or max(4, fine_channels // 2)
        self.heads = nn.ModuleList(
            MotionHeads(feature_channels[s], kernel_size, dilation, coarse_hidden) for s in self.sources
        )
        self.use_gridnet = gridnet
        grid = grid or GridFusionConfig()
        c = image_channels
        n_src = len(self.sources)
        if gridnet:
            # row 0: fine frame + upsampled recons + F6; row 1: all frames; row 2: frames + H/4 feature
            quarter = feature_channels[self.sources[1]]
            row_inputs = [c * (1 + n_src) + fine_channels, c * (1 + n_src), c * (1 + n_src) + quarter]
            self.grid = GridNet(row_inputs, c, grid)
        self.lambda_head = conv(2 * c, 1)
        nn.init.zeros_(self.lambda_head.weight)
        nn.init.zeros_(self.lambda_head.bias)

    def grid_fuse(self, multi_scale: Sequence[torch.Tensor], fine: torch.Tensor,
                  pyr: Optional[FeaturePyramid] = None) -> torch.Tensor:
        """Fuse coarse reconstructions and the fine frame into a full-resolution frame.

        The grid predicts a residual on the fine frame, so the zero-initialised
        grid starts as the identity instead of a black frame.
        """
        size = fine.shape[-2:]
        if not self.use_gridnet:
            return torch.stack([resize(x, size) for x in multi_scale]).mean(0)
        if pyr is None:
            raise ValueError("grid fusion needs the feature pyramid")
        h, w = size
        rows = []
        for r in range(3):
            s = (h // 2 ** r, w // 2 ** r)
            frames = [resize(fine, s)] + [resize(x, s) for x in multi_scale]
            if r == 0:
                frames.append(pyr.F6)
            elif r == 2:
                frames.append(resize(getattr(pyr, self.sources[1]), s))
            rows.append(torch.cat(frames, dim=1))
        return fine + self.grid(rows)

    def blend_weight(self, tilde, bar, occlusion):
        logit = torch.log(occlusion.clamp(1e-6, 1 - 1e-6)) - torch.log1p(-occlusion.clamp(1e-6, 1 - 1e-6))
        return torch.sigmoid(logit + self.lambda_head(torch.cat([tilde, bar], dim=1)))
