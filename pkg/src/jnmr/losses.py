"""Training objective: Charbonnier reconstruction, feature-space and deformation terms."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import torch
import torch.nn as nn

from .config import LossWeights
from .motion import MotionField, MotionSet, RegressedMotions

PERCEPTUAL_MODES = ("fixed_random", "external_plugin", "disabled")


def charbonnier_loss(pred: torch.Tensor, target: torch.Tensor, eps: float = 1e-3) -> torch.Tensor:
    """Mean over all elements of ``sqrt(x^2 + eps^2)`` with ``x = pred - target``."""
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return torch.sqrt((pred - target).pow(2) + eps * eps).mean()


class PerceptualExtractor(nn.Module):
    """Frozen feature extractor for the perceptual term.

    ``fixed_random`` builds a small conv stack from a fixed seed, so the loss is
    hermetic and reproducible.  ``external_plugin`` loads a TorchScript module
    from ``path`` (for instance a traced pretrained backbone).  ``disabled``
    makes the loss identically zero.
    """

    def __init__(self, mode: str = "fixed_random", path: Optional[str] = None, seed: int = 0,
                 layer: str = "conv3"):
        super().__init__()
        if mode not in PERCEPTUAL_MODES:
            raise ValueError(f"unknown perceptual mode {mode!r}; expected one of {PERCEPTUAL_MODES}")
        self.mode = mode
        self.layer = layer
        self.net: Optional[nn.Module] = None
        if mode == "fixed_random":
            with torch.random.fork_rng(devices=[]):
                torch.manual_seed(seed)
                self.net = nn.Sequential(
                    nn.Conv2d(3, 16, 3, padding=1), nn.ReLU(), nn.AvgPool2d(2),
                    nn.Conv2d(16, 32, 3, padding=1), nn.ReLU(), nn.AvgPool2d(2),
                    nn.Conv2d(32, 32, 3, padding=1), nn.ReLU(),
                )
                for m in self.net.modules():
                    if isinstance(m, nn.Conv2d):
                        nn.init.kaiming_normal_(m.weight, nonlinearity="relu")
                        nn.init.zeros_(m.bias)
        elif mode == "external_plugin":
            if not path:
                raise ValueError("external_plugin perceptual mode needs a module path")
            self.net = torch.jit.load(path, map_location="cpu")
        if self.net is not None:
            for p in self.net.parameters():
                p.requires_grad_(False)
            self.net.eval()

    def train(self, mode: bool = True):
        # the extractor never leaves eval mode
        super().train(mode)
        if self.net is not None:
            self.net.eval()
        return self

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        if self.net is None:
            raise RuntimeError("perceptual extractor is disabled")
        return self.net(x)


def perceptual_loss(pred: torch.Tensor, target: torch.Tensor, extractor: Optional[PerceptualExtractor]) -> torch.Tensor:
    """Mean squared distance between extractor features; zero when disabled."""
    if extractor is None or extractor.mode == "disabled":
        return pred.new_zeros(())
    if pred.shape != target.shape:
        raise ValueError(f"shape mismatch: {tuple(pred.shape)} vs {tuple(target.shape)}")
    return (extractor(pred) - extractor(target)).pow(2).mean()


def _field_variation(m: MotionField) -> torch.Tensor:
    total = m.alpha.new_zeros(m.alpha.shape[0])
    for grid in (m.alpha, m.beta):
        total = total + (grid[..., :, 1:] - grid[..., :, :-1]).abs().sum(dim=(1, 2, 3))
        total = total + (grid[..., 1:, :] - grid[..., :-1, :]).abs().sum(dim=(1, 2, 3))
    h, w = m.spatial_size
    return total / (h * w)


def deformation_loss(regressed: Optional[RegressedMotions], references: Optional[MotionSet] = None) -> torch.Tensor:
    """Anisotropic total variation of motion offsets, per pixel, averaged over the batch.

    Sums ``|d/dx|`` and ``|d/dy|`` of alpha and beta over all taps of every
    regressed field (and of the per-reference motions when ``references`` is
    given), divided by ``H * W``.
    """
    fields = list(regressed.fields()) if regressed is not None else []
    if references is not None:
        fields += [references.motions[n] for n in sorted(references.motions)]
    if not fields:
        if regressed is not None:
            return regressed.theta.new_zeros(())
        raise ValueError("deformation loss needs at least one motion field")
    return sum(_field_variation(m) for m in fields).mean()


@dataclass
class LossBreakdown:
    total: torch.Tensor
    charbonnier: torch.Tensor
    perceptual: torch.Tensor
    deformation: torch.Tensor

    def as_floats(self) -> dict:
        return {k: float(v.detach()) for k, v in self.__dict__.items()}


def total_loss(pred: torch.Tensor, target: torch.Tensor, regressed: Optional[RegressedMotions],
               weights: LossWeights, extractor: Optional[PerceptualExtractor] = None,
               references: Optional[MotionSet] = None) -> LossBreakdown:
    """``L = charbonnier + lambda_vgg * perceptual + lambda_d * deformation``."""
    charb = charbonnier_loss(pred, target, weights.epsilon)
    zero = charb.new_zeros(())
    perc = perceptual_loss(pred, target, extractor) if weights.lambda_vgg > 0 else zero
    refs = references if weights.deformation_on_references else None
    has_fields = (regressed is not None and regressed.fields()) or refs is not None
    deform = deformation_loss(regressed, refs) if weights.lambda_d > 0 and has_fields else zero
    total = charb + weights.lambda_vgg * perc + weights.lambda_d * deform
    return LossBreakdown(total, charb, perc, deform)
