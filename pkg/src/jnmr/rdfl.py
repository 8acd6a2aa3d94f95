"""Regression-driven feature learning: hierarchical encoder/decoder and motion heads."""
from __future__ import annotations

from dataclasses import dataclass
from typing import List, Mapping, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .motion import REFERENCE_TIMES, MotionField, MotionSet


def conv(cin: int, cout: int, k: int = 3, stride: int = 1, bias: bool = True) -> nn.Conv2d:
    return nn.Conv2d(cin, cout, k, stride=stride, padding=k // 2, bias=bias)


def conv_block(cin: int, cout: int, depth: int = 3) -> nn.Sequential:
    """``depth`` 3x3 convolutions at constant resolution, each followed by LeakyReLU(0.1)."""
    layers: List[nn.Module] = []
    for i in range(depth):
        layers += [conv(cin if i == 0 else cout, cout), nn.LeakyReLU(0.1)]
    return nn.Sequential(*layers)


def downsample(x: torch.Tensor) -> torch.Tensor:
    return F.avg_pool2d(x, 2)


def upsample(x: torch.Tensor, size=None) -> torch.Tensor:
    if size is None:
        size = (x.shape[-2] * 2, x.shape[-1] * 2)
    return F.interpolate(x, size=size, mode="bilinear", align_corners=False)


def init_weights(module: nn.Module) -> None:
    """Orthogonal weights and zero biases for every convolution."""
    for m in module.modules():
        if isinstance(m, (nn.Conv2d, nn.ConvTranspose2d)):
            nn.init.orthogonal_(m.weight)
            if m.bias is not None:
                nn.init.zeros_(m.bias)


@dataclass
class FeaturePyramid:
    """Named intermediate features.

    ``F0..F2`` come from the encoder at H/2, H/4, H/8; ``F3`` (H/4) and ``F5``
    (H/2) from the decoder; ``F4`` only exists with skip compensation.  ``deep``
    holds the extra encoder levels of the five-hierarchy variant.
    """

    F: torch.Tensor
    F0: Optional[torch.Tensor] = None
    F1: Optional[torch.Tensor] = None
    F2: Optional[torch.Tensor] = None
    F3: Optional[torch.Tensor] = None
    F4: Optional[torch.Tensor] = None
    F5: Optional[torch.Tensor] = None
    F6: Optional[torch.Tensor] = None
    deep: tuple = ()


class RDFL(nn.Module):
    def __init__(self, in_channels: int = 3, base_channels: int = 64, depth: int = 3,
                 num_hierarchies: int = 3, skip_compensation: bool = True):
        super().__init__()
        if num_hierarchies < 3:
            raise ValueError(f"num_hierarchies must be at least 3, got {num_hierarchies}")
        if skip_compensation and num_hierarchies != 3:
            raise ValueError("multi-stage skip compensation is defined for three hierarchies only")
        self.num_hierarchies = num_hierarchies
        self.skip_compensation = skip_compensation
        c = base_channels
        self.widths = [c * min(2 ** i, 4) for i in range(num_hierarchies)]
        self.out_channels = c

        cins = [4 * in_channels] + self.widths[:-1]
        self.encoder = nn.ModuleList(conv_block(ci, co, depth) for ci, co in zip(cins, self.widths))

        c0, c1, c2 = self.widths[:3]
        if skip_compensation:
            self.dec_f2 = conv_block(c2, c1, depth)   # -> F3
            self.dec_f1 = conv_block(c1, c0, depth)   # -> F4
            self.dec_f3 = conv_block(c1, c0, depth)   # -> F5
        else:
            # plain chain from the deepest level back to H/2
            self.chain = nn.ModuleList(
                conv_block(self.widths[i + 1], self.widths[i], depth) for i in reversed(range(num_hierarchies - 1))
            )
        self.dec_f5 = conv_block(c0, c0, depth)       # -> F6

    def encode(self, frames: torch.Tensor) -> FeaturePyramid:
        """``frames`` is ``(B, 4, C, H, W)`` in temporal order (-2, -1, 1, 2)."""
        if frames.dim() != 5 or frames.shape[1] != len(REFERENCE_TIMES):
            raise ValueError(f"expected (B, 4, C, H, W) reference frames, got {tuple(frames.shape)}")
        feat = frames.flatten(1, 2)
        pyr = FeaturePyramid(F=feat)
        x = feat
        levels = []
        for block in self.encoder:
            x = downsample(block(x))
            levels.append(x)
        pyr.F0, pyr.F1, pyr.F2 = levels[:3]
        pyr.deep = tuple(levels[3:])
        return pyr

    def decode(self, pyr: FeaturePyramid) -> FeaturePyramid:
        if pyr.F0 is None or pyr.F1 is None or pyr.F2 is None:
            raise RuntimeError("decode needs encoder features F0, F1 and F2")
        if self.skip_compensation:
            pyr.F3 = upsample(self.dec_f2(pyr.F2)) + pyr.F1
            pyr.F4 = upsample(self.dec_f1(pyr.F1))
            pyr.F5 = upsample(self.dec_f3(pyr.F3)) + pyr.F0 + pyr.F4
        else:
            levels = [pyr.F0, pyr.F1, pyr.F2, *pyr.deep]
            x = levels[-1]
            for block in self.chain:
                x = upsample(block(x))
                if x.shape[-2:] == pyr.F1.shape[-2:]:
                    pyr.F3 = x
            pyr.F5 = x
        pyr.F6 = upsample(self.dec_f5(pyr.F5))
        return pyr

    def forward(self, frames: torch.Tensor) -> FeaturePyramid:
        return self.decode(self.encode(frames))


class MotionHeads(nn.Module):
    """Five sub-heads: one deformable kernel per reference frame and the occlusion map.

    Each sub-head is a 3x3 conv, LeakyReLU and a 1x1 output conv.  The five
    3x3 convs are stored as one conv with ``5 * hidden`` outputs, which is the
    same function (every sub-head reads only its own slice) computed in one call.
    """

    def __init__(self, in_channels: int, kernel_size: int = 5, dilation: int = 1,
                 hidden_channels: Optional[int] = None):
        super().__init__()
        self.in_channels = in_channels
        self.kernel_size = kernel_size
        self.dilation = dilation
        self.hidden = hidden_channels or in_channels
        taps = kernel_size ** 2
        self.trunk = conv(in_channels, 5 * self.hidden)
        self.act = nn.LeakyReLU(0.1)
        self.motion = nn.ModuleList(conv(self.hidden, 3 * taps, k=1) for _ in REFERENCE_TIMES)
        self.occlusion = conv(self.hidden, 1, k=1)

    def final_layers(self) -> List[nn.Conv2d]:
        return list(self.motion) + [self.occlusion]

    def branches(self, feature: torch.Tensor) -> List[torch.Tensor]:
        """Raw outputs of the four motion sub-heads and the occlusion sub-head."""
        hidden = torch.chunk(self.act(self.trunk(feature)), 5, dim=1)
        return [head(h) for head, h in zip(self.motion, hidden[:4])] + [self.occlusion(hidden[4])]

    def forward(self, feature: torch.Tensor) -> MotionSet:
        return decouple_motions(feature, self)


def decouple_motions(feature: torch.Tensor, heads: MotionHeads) -> MotionSet:
    """Map a feature grid to four normalised motion fields and an occlusion map."""
    if feature.dim() != 4 or feature.shape[1] != heads.in_channels:
        raise ValueError(f"heads expect {heads.in_channels} channels, got feature {tuple(feature.shape)}")
    outs = heads.branches(feature)
    motions = {}
    for n, raw in zip(REFERENCE_TIMES, outs[:4]):
        logits, alpha, beta = torch.chunk(raw, 3, dim=1)
        motions[n] = MotionField(torch.softmax(logits, dim=1), alpha, beta, heads.kernel_size, heads.dilation)
    return MotionSet(motions, torch.sigmoid(outs[4]))
