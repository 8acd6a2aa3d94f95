"""Ablation suites: each row is a config variant trained and evaluated under one budget."""
from __future__ import annotations

import copy
import dataclasses
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Dict, List, Optional

from .config import TrainConfig, config_to_dict
from .model import count_parameters


@dataclass(frozen=True)
class Variant:
    label: str
    description: str
    model: Dict[str, object]


SUITES: Dict[str, List[Variant]] = {
    "regression_modes": [
        Variant("Model 1", "Linear", {"regression_mode": "linear"}),
        Variant("Model 2", "Quadratic", {"regression_mode": "quadratic"}),
        Variant("Model 3", "Linear combination of quadratic", {"regression_mode": "linear_combination"}),
        Variant("Model 4", "Unidirectional", {"regression_mode": "unidirectional_fwd"}),
        Variant("Model 5", "Second-order unidirectional", {"regression_mode": "second_order_unidirectional"}),
        Variant("JNMR", "Joint bidirectional", {"regression_mode": "joint_bidirectional"}),
    ],
    "components": [
        Variant("Baseline", "plain encoder-decoder, linear blending, no enhancement",
                {"skip_compensation": False, "regression_mode": "linear", "cfse_enabled": False}),
        Variant("Baseline w/ RDFL", "adds multi-stage skip compensation",
                {"skip_compensation": True, "regression_mode": "linear", "cfse_enabled": False}),
        Variant("Baseline w/ JNMR", "adds joint motion regression",
                {"skip_compensation": False, "regression_mode": "joint_bidirectional", "cfse_enabled": False}),
        Variant("Baseline w/ CFSE", "adds coarse-to-fine enhancement",
                {"skip_compensation": False, "regression_mode": "linear", "cfse_enabled": True}),
        Variant("JNMR(Full)", "all components",
                {"skip_compensation": True, "regression_mode": "joint_bidirectional", "cfse_enabled": True}),
    ],
    "cfse_sources": [
        Variant("Model III", "no coarse sources, no grid fusion", {"cfse_enabled": False}),
        Variant("Model IV", "sources F1, F2 with grid fusion",
                {"cfse_enabled": True, "cfse_source_features": "f1f2", "cfse_gridnet": True}),
        Variant("Model V", "sources F2, F3 without grid fusion",
                {"cfse_enabled": True, "cfse_source_features": "f2f3", "cfse_gridnet": False}),
        Variant("JNMR", "sources F2, F3 with grid fusion",
                {"cfse_enabled": True, "cfse_source_features": "f2f3", "cfse_gridnet": True}),
    ],
    "hierarchy": [
        Variant("Model I", "5 hierarchies, no compensation", {"num_hierarchies": 5, "skip_compensation": False}),
        Variant("Model II", "3 hierarchies, no compensation", {"num_hierarchies": 3, "skip_compensation": False}),
        Variant("JNMR", "3 hierarchies with compensation", {"num_hierarchies": 3, "skip_compensation": True}),
    ],
}


def variant_config(base: TrainConfig, variant: Variant) -> TrainConfig:
    cfg = copy.deepcopy(base)
    cfg.model = dataclasses.replace(cfg.model, **variant.model)
    return cfg


def config_key(cfg: TrainConfig) -> str:
    """Canonical text of everything that influences a run's result."""
    d = config_to_dict(cfg)
    d.pop("data_root", None)
    return json.dumps(d, sort_keys=True)


@dataclass
class AblationRow:
    label: str
    description: str
    parameters: int
    psnr: float
    ssim: float
    delta_psnr: float = 0.0
    delta_ssim: float = 0.0
    delta_parameters: int = 0
    run: Optional[str] = None


@dataclass
class AblationTable:
    suite: str
    rows: List[AblationRow] = field(default_factory=list)

    def row(self, label: str) -> AblationRow:
        for r in self.rows:
            if r.label == label:
                return r
        raise KeyError(label)

    def to_text(self) -> str:
        head = f"{'Model':<18} {'#P':>9} {'PSNR':>8} {'dPSNR':>7} {'SSIM':>7} {'dSSIM':>7}  description"
        lines = [f"# suite: {self.suite}", head]
        for r in self.rows:
            lines.append(f"{r.label:<18} {r.parameters:>9d} {r.psnr:>8.3f} {r.delta_psnr:>+7.3f} "
                         f"{r.ssim:>7.4f} {r.delta_ssim:>+7.4f}  {r.description}")
        return "\n".join(lines) + "\n"

    def to_records(self) -> List[dict]:
        return [dict(suite=self.suite, **dataclasses.asdict(r)) for r in self.rows]


def run_ablation(suite: str, base: TrainConfig, train_set=None, test_set=None, out_dir=None,
                 runner: Optional[Callable] = None, cache: Optional[dict] = None) -> AblationTable:
    """Train and evaluate every variant of ``suite`` with the seed and budget of ``base``.

    Deltas are relative to the first row.  ``cache`` maps :func:`config_key`
    to finished ``(psnr, ssim, run_dir)`` so identical configurations (within
    or across suites) are trained once.
    """
    if suite not in SUITES:
        raise ValueError(f"unknown ablation suite {suite!r}; expected one of {sorted(SUITES)}")
    if runner is None:
        from .training import train as runner
    cache = {} if cache is None else cache
    table = AblationTable(suite)
    for k, variant in enumerate(SUITES[suite]):
        cfg = variant_config(base, variant)
        key = config_key(cfg)
        if key not in cache:
            run_dir = Path(out_dir) / f"{k}_{variant.label.replace(' ', '_').replace('/', '')}" if out_dir else None
            _, record = runner(cfg, train_set, test_set, out_dir=run_dir)
            cache[key] = (record.evals[-1]["psnr"], record.evals[-1]["ssim"], str(run_dir) if run_dir else None)
        p, s, run = cache[key]
        table.rows.append(AblationRow(variant.label, variant.description, count_parameters(cfg.model), p, s, run=run))
    ref = table.rows[0]
    for r in table.rows:
        r.delta_psnr = r.psnr - ref.psnr
        r.delta_ssim = r.ssim - ref.ssim
        r.delta_parameters = r.parameters - ref.parameters
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / f"{suite}.txt").write_text(table.to_text())
        with open(out / f"{suite}.jsonl", "w") as fh:
            for rec in table.to_records():
                fh.write(json.dumps(rec) + "\n")
    return table
