"""Configuration dataclasses and the YAML tree format used by the CLI.

A config file is a YAML tree whose dotted paths map onto dataclass fields,
e.g. ``regression.mode``, ``cfse.gridnet`` or ``train.lr``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, asdict
from pathlib import Path
from typing import Any, Dict, Optional, Tuple

import yaml

from .regression import check_mode


@dataclass
class ModelConfig:
    base_channels: int = 64
    conv_block_depth: int = 3
    num_hierarchies: int = 3
    skip_compensation: bool = True
    kernel_size: int = 5
    dilation: int = 1
    image_channels: int = 3
    head_channels: Optional[int] = None
    regression_mode: str = "joint_bidirectional"
    convlstm_hidden: Optional[int] = None
    convlstm_kernel: int = 3
    share_convlstm: bool = True
    cfse_enabled: bool = True
    cfse_source_features: str = "f2f3"
    cfse_gridnet: bool = True
    grid_columns: int = 4
    grid_channels: Optional[Tuple[int, int, int]] = None
    seed: int = 0

    def __post_init__(self):
        check_mode(self.regression_mode)
        if self.kernel_size % 2 == 0 or self.kernel_size < 1:
            raise ValueError(f"kernel_size must be odd and positive, got {self.kernel_size}")
        if self.cfse_source_features not in ("f2f3", "f1f2"):
            raise ValueError(f"cfse.source_features must be f2f3 or f1f2, got {self.cfse_source_features!r}")
        if self.grid_channels is not None:
            self.grid_channels = tuple(int(c) for c in self.grid_channels)

    @property
    def grid_widths(self) -> Tuple[int, int, int]:
        if self.grid_channels is not None:
            return self.grid_channels
        scale = self.base_channels / 64
        return tuple(max(4, int(round(c * scale))) for c in (32, 64, 96))

    @classmethod
    def full(cls, **overrides) -> "ModelConfig":
        return cls(**overrides)

    @classmethod
    def desk(cls, **overrides) -> "ModelConfig":
        params = dict(base_channels=16, kernel_size=3, convlstm_hidden=8, convlstm_kernel=3)
        params.update(overrides)
        return cls(**params)


PRESETS = {"full": ModelConfig.full, "desk": ModelConfig.desk}


@dataclass
class LossWeights:
    lambda_vgg: float = 0.005
    lambda_d: float = 0.01
    epsilon: float = 0.001
    perceptual: str = "fixed_random"
    perceptual_path: Optional[str] = None
    deformation_on_references: bool = True

    def __post_init__(self):
        for name in ("lambda_vgg", "lambda_d", "epsilon"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")


@dataclass
class TrainConfig:
    preset: str = "desk"
    model: ModelConfig = field(default_factory=ModelConfig.desk)
    loss: LossWeights = field(default_factory=LossWeights)
    lr: float = 1e-3
    lr_decay_every: int = 20
    lr_decay: float = 0.5
    lr_floor: float = 6.25e-5
    betas: Tuple[float, float] = (0.9, 0.999)
    batch_size: int = 4
    max_epochs: int = 5
    seed: int = 0
    grad_clip: Optional[float] = None
    augment: bool = True
    train_scenes: int = 1600
    test_scenes: int = 200
    image_size: int = 64
    data_seed: int = 1234
    data_root: Optional[str] = None
    eval_every_epoch: bool = False

    def __post_init__(self):
        self.betas = tuple(self.betas)


def _flatten(tree: Dict[str, Any], prefix: str = "") -> Dict[str, Any]:
    out = {}
    for key, value in tree.items():
        path = f"{prefix}{key}"
        if isinstance(value, dict):
            out.update(_flatten(value, path + "."))
        else:
            out[path] = value
    return out


# dotted config keys that do not match a field name one-to-one
ALIASES = {
    "regression.mode": "model.regression_mode",
    "regression.convlstm_hidden": "model.convlstm_hidden",
    "regression.convlstm_kernel": "model.convlstm_kernel",
    "regression.share_convlstm": "model.share_convlstm",
    "cfse.enabled": "model.cfse_enabled",
    "cfse.source_features": "model.cfse_source_features",
    "cfse.gridnet": "model.cfse_gridnet",
    "cfse.columns": "model.grid_columns",
    "cfse.channels": "model.grid_channels",
}


def _onoff(value):
    if isinstance(value, str) and value.lower() in ("on", "off"):
        return value.lower() == "on"
    return value


def train_config_from_dict(tree: Dict[str, Any]) -> TrainConfig:
    flat = {ALIASES.get(k, k): _onoff(v) for k, v in _flatten(tree).items()}
    preset = flat.pop("train.preset", flat.pop("preset", "desk"))
    if preset not in PRESETS:
        raise ValueError(f"unknown model preset {preset!r}")
    model_kw = {k[len("model."):]: v for k, v in flat.items() if k.startswith("model.")}
    loss_kw = {k[len("loss."):]: v for k, v in flat.items() if k.startswith("loss.")}
    train_kw = {}
    for k, v in flat.items():
        if k.startswith(("model.", "loss.")):
            continue
        name = k.split(".", 1)[1] if k.startswith(("train.", "data.")) else k
        train_kw[name] = v
    names = {f.name for f in dataclasses.fields(TrainConfig)}
    unknown = sorted(set(train_kw) - names) + sorted(
        set(model_kw) - {f.name for f in dataclasses.fields(ModelConfig)}
    ) + sorted(set(loss_kw) - {f.name for f in dataclasses.fields(LossWeights)})
    if unknown:
        raise ValueError(f"unknown config keys: {unknown}")
    return TrainConfig(preset=preset, model=PRESETS[preset](**model_kw), loss=LossWeights(**loss_kw), **train_kw)


def load_config(path) -> TrainConfig:
    with open(path) as fh:
        tree = yaml.safe_load(fh) or {}
    return train_config_from_dict(tree)


def config_to_dict(cfg) -> Dict[str, Any]:
    def clean(obj):
        if isinstance(obj, tuple):
            return list(obj)
        if isinstance(obj, dict):
            return {k: clean(v) for k, v in obj.items()}
        return obj

    return clean(asdict(cfg))


def model_config_from_dict(d: Dict[str, Any]) -> ModelConfig:
    return ModelConfig(**d)


def dump_config(cfg: TrainConfig, path) -> None:
    Path(path).write_text(yaml.safe_dump(config_to_dict(cfg), sort_keys=False))
