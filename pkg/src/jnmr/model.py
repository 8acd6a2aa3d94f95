"""The assembled interpolation network and its checkpoint format."""
from __future__ import annotations

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import List, Optional

import torch
import torch.nn as nn
import torch.nn.functional as F

from .cfse import CFSE, GridFusionConfig, coarse_reconstruct, final_blend
from .config import ModelConfig
from .motion import REFERENCE_TIMES, MotionSet, RegressedMotions
from .rdfl import RDFL, FeaturePyramid, MotionHeads, init_weights
from .regression import MotionRegressor, regress, synthesize_intermediate
from .warp import WarpConfig

CHECKPOINT_FORMAT = 1


@dataclass
class Prediction:
    frame: torch.Tensor                 # final output, clamped to [0, 1]
    tilde: torch.Tensor                 # regressed synthesis before enhancement
    motions: MotionSet
    regressed: RegressedMotions
    bar: Optional[torch.Tensor] = None
    blend: Optional[torch.Tensor] = None
    coarse: List[torch.Tensor] = field(default_factory=list)
    coarse_regressed: List[RegressedMotions] = field(default_factory=list)


class JNMR(nn.Module):
    """Four reference frames in, middle frame out.

    Input is ``(B, 4, C, H, W)`` ordered as times (-2, -1, 1, 2).  Spatial
    sizes that are not multiples of ``2**num_hierarchies`` are reflect-padded
    and cropped back.
    """

    def __init__(self, cfg: ModelConfig):
        super().__init__()
        self.cfg = cfg
        self.force_lambda: Optional[float] = None
        with torch.random.fork_rng(devices=[]):
            torch.manual_seed(cfg.seed)
            self.rdfl = RDFL(cfg.image_channels, cfg.base_channels, cfg.conv_block_depth,
                             cfg.num_hierarchies, cfg.skip_compensation)
            c0 = self.rdfl.out_channels
            self.heads = MotionHeads(c0, cfg.kernel_size, cfg.dilation, cfg.head_channels)
            self.regressor = MotionRegressor(cfg.regression_mode, cfg.kernel_size, cfg.dilation,
                                             cfg.convlstm_hidden, cfg.convlstm_kernel, cfg.share_convlstm)
            self.cfse = None
            if cfg.cfse_enabled:
                w = self.rdfl.widths
                self.cfse = CFSE({"F1": w[1], "F2": w[2], "F3": w[1]}, c0, cfg.kernel_size, cfg.dilation,
                                 cfg.cfse_source_features, cfg.cfse_gridnet,
                                 GridFusionConfig(3, cfg.grid_columns, cfg.grid_widths), cfg.head_channels,
                                 cfg.image_channels)
            # one seed per component, so variants that share a component share its initial weights
            for i, part in enumerate((self.rdfl, self.heads, self.regressor, self.cfse)):
                if part is not None:
                    torch.manual_seed(cfg.seed * 16 + i)
                    init_weights(part)
            self.reset_zero_heads()

    def reset_zero_heads(self) -> None:
        self.regressor.reset_heads()
        if self.cfse is not None:
            nn.init.zeros_(self.cfse.lambda_head.weight)
            nn.init.zeros_(self.cfse.lambda_head.bias)
            if self.cfse.use_gridnet:
                nn.init.zeros_(self.cfse.grid.out.weight)
                nn.init.zeros_(self.cfse.grid.out.bias)

    @property
    def warp_config(self) -> WarpConfig:
        return WarpConfig(self.cfg.kernel_size, self.cfg.dilation)

    def _pad(self, frames: torch.Tensor):
        h, w = frames.shape[-2:]
        m = 2 ** self.cfg.num_hierarchies
        ph, pw = (-h) % m, (-w) % m
        if ph == 0 and pw == 0:
            return frames, (h, w)
        b, n, c = frames.shape[:3]
        flat = frames.flatten(0, 1)
        mode = "reflect" if ph < h and pw < w else "replicate"
        flat = F.pad(flat, (0, pw, 0, ph), mode=mode)
        return flat.view(b, n, c, h + ph, w + pw), (h, w)

    def forward(self, frames: torch.Tensor) -> Prediction:
        if frames.dim() != 5 or frames.shape[1] != 4:
            raise ValueError(f"expected (B, 4, C, H, W) frames, got {tuple(frames.shape)}")
        frames, (h, w) = self._pad(frames)
        pyr = self.rdfl(frames)
        refs = {t: frames[:, i] for i, t in enumerate(REFERENCE_TIMES)}
        motions = self.heads(pyr.F6)
        regressed = regress(motions, self.cfg.regression_mode, self.regressor)
        tilde = synthesize_intermediate(refs, motions, regressed, self.warp_config, normalize=True)

        out = Prediction(frame=tilde.clamp(0, 1), tilde=tilde, motions=motions, regressed=regressed)
        if self.cfse is not None:
            coarse, coarse_reg = coarse_reconstruct(pyr, frames, self.cfse.heads, self.cfse.sources,
                                                    self.regressor)
            bar = self.cfse.grid_fuse(coarse, tilde, pyr)
            lam = self.cfse.blend_weight(tilde, bar, motions.occlusion)
            if self.force_lambda is not None:
                lam = torch.full_like(lam, self.force_lambda)
            out.frame = final_blend(tilde, bar, lam)
            out.bar, out.blend, out.coarse, out.coarse_regressed = bar, lam, coarse, coarse_reg
        if out.frame.shape[-2:] != (h, w):
            out.frame = out.frame[..., :h, :w]
            out.tilde = out.tilde[..., :h, :w]
            if out.bar is not None:
                out.bar = out.bar[..., :h, :w]
        return out

    @torch.no_grad()
    def interpolate(self, frames: torch.Tensor) -> torch.Tensor:
        return self(frames).frame


def count_parameters(cfg_or_model) -> int:
    """Trainable parameters of the full assembled model."""
    model = cfg_or_model if isinstance(cfg_or_model, nn.Module) else JNMR(cfg_or_model)
    return sum(p.numel() for p in model.parameters() if p.requires_grad)


def save_checkpoint(path, model: JNMR, optimizer=None, scheduler=None, epoch: int = 0,
                    extra: Optional[dict] = None) -> Path:
    """Write ``<path>`` (parameters + state) and a plain-text manifest next to it."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    state = {
        "format": CHECKPOINT_FORMAT,
        "model_config": asdict(model.cfg),
        "model": model.state_dict(),
        "epoch": epoch,
        "extra": extra or {},
    }
    if optimizer is not None:
        state["optimizer"] = optimizer.state_dict()
    if scheduler is not None:
        state["scheduler"] = scheduler.state_dict()
    torch.save(state, path)
    manifest = {
        "format": CHECKPOINT_FORMAT,
        "parameters": count_parameters(model),
        "seed": model.cfg.seed,
        "epoch": epoch,
        "config": asdict(model.cfg),
    }
    path.with_suffix(".manifest.txt").write_text(
        "\n".join(f"{k}: {json.dumps(v)}" for k, v in manifest.items()) + "\n"
    )
    return path


def load_checkpoint(path, map_location="cpu"):
    """Return ``(model, state_dict)``; the raw dict keeps optimizer/scheduler state."""
    state = torch.load(path, map_location=map_location, weights_only=False)
    if state.get("format") != CHECKPOINT_FORMAT:
        raise ValueError(f"{path}: unsupported checkpoint format {state.get('format')!r}")
    cfg = ModelConfig(**state["model_config"])
    model = JNMR(cfg)
    model.load_state_dict(state["model"])
    return model, state
