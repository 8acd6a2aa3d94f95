"""Training loop, evaluation and inference entry points."""
from __future__ import annotations

import dataclasses
import json
import logging
import time
from dataclasses import dataclass, field
from functools import lru_cache
from pathlib import Path
from typing import Dict, List, Optional, Sequence

import numpy as np
import torch

from .config import TrainConfig, config_to_dict
from .data import AugmentationPolicy, FrameDataset, build_dataset, iterate_batches, load_split, read_image, write_image
from .losses import PerceptualExtractor, total_loss
from .metrics import psnr, ssim
from .model import JNMR, count_parameters, load_checkpoint, save_checkpoint

log = logging.getLogger(__name__)


class NonFiniteLossError(RuntimeError):
    pass


def lr_at_epoch(cfg: TrainConfig, epoch: int) -> float:
    """Step schedule: halve every ``lr_decay_every`` epochs, never below the floor."""
    return max(cfg.lr * cfg.lr_decay ** (epoch // cfg.lr_decay_every), cfg.lr_floor)


@dataclass
class RunRecord:
    """Append-only log of one training run."""

    config: dict
    parameters: int
    epochs: List[dict] = field(default_factory=list)
    evals: List[dict] = field(default_factory=list)
    checkpoints: List[str] = field(default_factory=list)
    wall_clock: float = 0.0
    steps: int = 0

    @property
    def final_psnr(self) -> Optional[float]:
        return self.evals[-1]["psnr"] if self.evals else None

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    def write(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=2) + "\n")


@lru_cache(maxsize=8)
def _cached_split(n: int, split: str, data_seed: int, size: int) -> FrameDataset:
    return build_dataset(n, split, data_seed, size)


def load_datasets(cfg: TrainConfig):
    """``(train, test)`` from ``cfg.data_root`` or rendered in memory (cached per process)."""
    if cfg.data_root:
        return load_split(cfg.data_root, "train"), load_split(cfg.data_root, "test")
    return (_cached_split(cfg.train_scenes, "train", cfg.data_seed, cfg.image_size),
            _cached_split(cfg.test_scenes, "test", cfg.data_seed, cfg.image_size))


def build_extractor(cfg: TrainConfig) -> Optional[PerceptualExtractor]:
    if cfg.loss.perceptual == "disabled" or cfg.loss.lambda_vgg == 0:
        return None
    return PerceptualExtractor(cfg.loss.perceptual, cfg.loss.perceptual_path, seed=cfg.seed)


def _dump_batch(out_dir: Optional[Path], epoch: int, step: int, ids, inputs, target) -> Optional[Path]:
    if out_dir is None:
        return None
    path = out_dir / f"nonfinite_epoch{epoch:03d}_step{step:06d}.pt"
    torch.save({"epoch": epoch, "step": step, "sample_ids": list(ids), "inputs": inputs, "target": target}, path)
    return path


def train(cfg: TrainConfig, train_set: Optional[FrameDataset] = None, test_set: Optional[FrameDataset] = None,
          out_dir=None, max_steps: Optional[int] = None, resume=None, evaluate_at_end: bool = True):
    """Train ``cfg.model`` on ``train_set`` with AdaMax; returns ``(model, RunRecord)``.

    Checkpoints go to ``out_dir/checkpoints`` after every epoch.  ``max_steps``
    cuts the run short (smoke tests); ``resume`` continues from a checkpoint
    written by this function.
    """
    start = time.perf_counter()
    if train_set is None or (test_set is None and evaluate_at_end):
        loaded = load_datasets(cfg)
        train_set = train_set if train_set is not None else loaded[0]
        test_set = test_set if test_set is not None else loaded[1]
    out = Path(out_dir) if out_dir is not None else None
    if out is not None:
        (out / "checkpoints").mkdir(parents=True, exist_ok=True)

    torch.manual_seed(cfg.seed)
    first_epoch = 0
    if resume is not None:
        model, state = load_checkpoint(resume)
        first_epoch = state["epoch"] + 1
    else:
        model, state = JNMR(cfg.model), None
    optimizer = torch.optim.Adamax(model.parameters(), lr=cfg.lr, betas=tuple(cfg.betas))
    scheduler = torch.optim.lr_scheduler.LambdaLR(optimizer, lambda e: lr_at_epoch(cfg, e) / cfg.lr)
    if state is not None:
        optimizer.load_state_dict(state["optimizer"])
        scheduler.load_state_dict(state["scheduler"])
    extractor = build_extractor(cfg)
    policy = AugmentationPolicy() if cfg.augment else None
    record = RunRecord(config_to_dict(cfg), count_parameters(model))
    if state is not None:
        record.epochs = list(state["extra"].get("epochs", []))
        record.steps = state["extra"].get("steps", 0)

    model.train()
    for epoch in range(first_epoch, cfg.max_epochs):
        sums: Dict[str, float] = {}
        n_batches = 0
        for ids, inputs, target in iterate_batches(train_set, cfg.batch_size, cfg.seed, epoch, policy):
            pred = model(inputs)
            losses = total_loss(pred.frame, target, pred.regressed, cfg.loss, extractor, pred.motions)
            if not torch.isfinite(losses.total):
                dump = _dump_batch(out, epoch, record.steps, ids, inputs, target)
                raise NonFiniteLossError(
                    f"non-finite loss at epoch {epoch}, step {record.steps}, batch samples "
                    f"{[train_set.ids[i] for i in ids]}" + (f"; batch dumped to {dump}" if dump else "")
                )
            optimizer.zero_grad(set_to_none=True)
            losses.total.backward()
            if cfg.grad_clip:
                torch.nn.utils.clip_grad_norm_(model.parameters(), cfg.grad_clip)
            optimizer.step()
            record.steps += 1
            n_batches += 1
            for k, v in losses.as_floats().items():
                sums[k] = sums.get(k, 0.0) + v
            if max_steps is not None and record.steps >= max_steps:
                break
        row = {"epoch": epoch, "lr": optimizer.param_groups[0]["lr"], "batches": n_batches}
        row.update({k: v / max(n_batches, 1) for k, v in sums.items()})
        scheduler.step()
        if cfg.eval_every_epoch and test_set is not None:
            row["test_psnr"] = evaluate(model, test_set).mean_psnr
            model.train()
        record.epochs.append(row)
        log.info("epoch %d: loss %.5f", epoch, row.get("total", float("nan")))
        if out is not None:
            ckpt = save_checkpoint(out / "checkpoints" / f"epoch_{epoch:03d}.pt", model, optimizer, scheduler, epoch,
                                   {"epochs": record.epochs, "steps": record.steps, "train_config": record.config})
            record.checkpoints.append(str(ckpt))
        if max_steps is not None and record.steps >= max_steps:
            break

    model.eval()
    if evaluate_at_end and test_set is not None:
        report = evaluate(model, test_set)
        record.evals.append({"split": "test", "checkpoint": record.checkpoints[-1] if record.checkpoints else None,
                             "psnr": report.mean_psnr, "ssim": report.mean_ssim, "n": len(report.rows)})
    record.wall_clock = time.perf_counter() - start
    if out is not None:
        record.write(out / "run.json")
    return model, record


@dataclass
class EvalReport:
    rows: List[dict]
    strata: Dict[str, dict] = field(default_factory=dict)
    families: Dict[str, dict] = field(default_factory=dict)

    @property
    def mean_psnr(self) -> float:
        return float(np.mean([r["psnr"] for r in self.rows])) if self.rows else float("nan")

    @property
    def mean_ssim(self) -> float:
        return float(np.mean([r["ssim"] for r in self.rows])) if self.rows else float("nan")

    def summary(self) -> dict:
        return {"psnr": self.mean_psnr, "ssim": self.mean_ssim, "n": len(self.rows),
                "strata": self.strata, "families": self.families}

    def write_records(self, path) -> None:
        """One JSON record per sequence (id, psnr, ssim, ...)."""
        with open(path, "w") as fh:
            for r in self.rows:
                fh.write(json.dumps(r) + "\n")


def estimated_magnitude(motions) -> torch.Tensor:
    """Mean displacement length implied by the kernels of ``M_-1`` and ``M_1``, per sample."""
    from .warp import _tap_offsets
    mags = []
    for n in (-1, 1):
        m = motions[n]
        dy, dx = _tap_offsets(m.kernel_size, m.dilation, m.alpha.device, m.alpha.dtype)
        y = (m.weights * (m.alpha + dy)).sum(dim=1)
        x = (m.weights * (m.beta + dx)).sum(dim=1)
        mags.append(torch.sqrt(y * y + x * x).flatten(1).mean(dim=1))
    return (mags[0] + mags[1]) / 2


def _group_means(rows, key) -> Dict[str, dict]:
    groups: Dict[str, List[dict]] = {}
    for r in rows:
        if r.get(key) is not None:
            groups.setdefault(r[key], []).append(r)
    return {k: {"psnr": float(np.mean([r["psnr"] for r in v])), "ssim": float(np.mean([r["ssim"] for r in v])),
                "n": len(v)} for k, v in sorted(groups.items())}


@torch.no_grad()
def evaluate(model: JNMR, dataset: FrameDataset, stratify: bool = False, batch_size: int = 8) -> EvalReport:
    """Per-sequence PSNR/SSIM of the predicted middle frame.

    With ``stratify`` the sequences are split into slow / medium / fast
    terciles of motion magnitude: the generator's ground truth when the
    dataset carries it, otherwise the model's own estimate.
    """
    was_training = model.training
    model.eval()
    rows = []
    for start in range(0, len(dataset), batch_size):
        idx = list(range(start, min(start + batch_size, len(dataset))))
        inputs, target = dataset.batch(idx)
        pred = model(inputs)
        p, s = psnr(pred.frame, target), ssim(pred.frame, target)
        est = estimated_magnitude(pred.motions)
        for k, i in enumerate(idx):
            meta = dataset.meta[i] if dataset.meta else {}
            rows.append({"id": dataset.ids[i], "psnr": float(p[k]), "ssim": float(s[k]),
                         "family": meta.get("family"),
                         "magnitude": float(meta["motion_magnitude"]) if "motion_magnitude" in meta else float(est[k])})
    if was_training:
        model.train()
    report = EvalReport(rows)
    report.families = _group_means(rows, "family")
    if stratify and rows:
        mags = np.array([r["magnitude"] for r in rows])
        lo, hi = np.quantile(mags, [1 / 3, 2 / 3])
        for r, m in zip(rows, mags):
            r["stratum"] = "slow" if m <= lo else ("medium" if m <= hi else "fast")
        report.strata = _group_means(rows, "stratum")
    return report


def load_frames(paths: Sequence) -> torch.Tensor:
    """Read four images into a ``(1, 4, C, H, W)`` batch; resolutions must agree."""
    if len(paths) != 4:
        raise ValueError(f"expected four input images, got {len(paths)}")
    frames = [read_image(p) for p in paths]
    shapes = {tuple(f.shape) for f in frames}
    if len(shapes) != 1:
        raise ValueError(f"input images differ in resolution: {sorted(shapes)}")
    return torch.stack(frames)[None]


def interpolate(checkpoint, paths: Sequence, output) -> Path:
    """Predict the middle frame of four images (times -2, -1, 1, 2) and write it as PNG."""
    frames = load_frames(paths)
    model, _ = load_checkpoint(checkpoint)
    model.eval()
    out = model.interpolate(frames)
    write_image(out[0], output)
    return Path(output)
