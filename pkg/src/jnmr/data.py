"""Septuplet loading, augmentation and the synthetic kinematic sprite generator.

Generated scenes come with exact motions.  Two sign conventions are emitted:

* ``true_displacements``: kinematic ``M_n = p(0) - p(n)``, what the regression
  formulas are written in;
* ``true_motions``: the warp offsets ``p(n) - p(0)`` that make
  ``deformable_warp(frame_n, M) == target``, because the warp samples at
  ``x + offset``.
"""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Dict, Iterator, List, Optional, Sequence, Tuple

import numpy as np
import torch
from PIL import Image

from .motion import REFERENCE_TIMES, MotionField, MotionSet

FAMILIES = ("linear", "quadratic", "piecewise")
SEPTUPLET_TIMES = (-3, -2, -1, 0, 1, 2, 3)     # im1 ... im7
SAMPLE_TIMES = (-2, -1, 0, 1, 2)               # stored order: inputs around the target


class SequenceIOError(OSError):
    """A septuplet file is missing or cannot be decoded."""


# ---------------------------------------------------------------- septuplets

@dataclass
class SeptupletIndex:
    root: Path
    sequences: List[str]

    target_index = 4
    reference_indices = (2, 3, 5, 6)

    @classmethod
    def from_root(cls, root, split_file: Optional[str] = None) -> "SeptupletIndex":
        """Index ``<root>/sequences/<id>``; ids come from ``split_file`` when given
        (path relative to ``root`` or absolute), else from the directory listing."""
        root = Path(root)
        if split_file is not None:
            path = Path(split_file)
            path = path if path.is_absolute() else root / path
            ids = [line.strip() for line in path.read_text().splitlines() if line.strip()]
        else:
            ids = sorted(p.name for p in (root / "sequences").iterdir() if p.is_dir())
        return cls(root, ids)

    def __len__(self) -> int:
        return len(self.sequences)

    def sequence_dir(self, i: int) -> Path:
        return self.root / "sequences" / self.sequences[i]

    def validate(self) -> None:
        """Check that every sequence has seven readable images of one resolution."""
        for i, seq in enumerate(self.sequences):
            sizes = set()
            for k in range(1, 8):
                path = self.sequence_dir(i) / f"im{k}.png"
                try:
                    with Image.open(path) as im:
                        sizes.add(im.size)
                except OSError as exc:
                    raise SequenceIOError(f"sequence {seq}: cannot read {path.name}: {exc}") from exc
            if len(sizes) != 1:
                raise SequenceIOError(f"sequence {seq}: images differ in resolution {sorted(sizes)}")


def read_image(path) -> torch.Tensor:
    """8-bit image file to a ``(C, H, W)`` float tensor in [0, 1]."""
    with Image.open(path) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    return torch.from_numpy(arr.copy()).permute(2, 0, 1).float() / 255.0


def write_image(frame: torch.Tensor, path) -> None:
    """``(C, H, W)`` tensor in [0, 1] to an 8-bit PNG (rounded to nearest)."""
    if frame.dim() == 4:
        frame = frame[0]
    arr = (frame.detach().clamp(0, 1) * 255.0).round().to(torch.uint8).permute(1, 2, 0).cpu().numpy()
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Image.fromarray(arr).save(path)


def _read_uint8(path, seq: str) -> np.ndarray:
    try:
        with Image.open(path) as im:
            return np.asarray(im.convert("RGB"), dtype=np.uint8)
    except (OSError, ValueError) as exc:
        raise SequenceIOError(f"sequence {seq}: cannot read {Path(path).name}: {exc}") from exc


def _load_septuplet_uint8(index: SeptupletIndex, i: int) -> np.ndarray:
    if not 0 <= i < len(index):
        raise IndexError(f"sample {i} out of range for {len(index)} sequences")
    seq = index.sequences[i]
    order = (2, 3, 4, 5, 6)                     # times -2, -1, 0, 1, 2
    frames = [_read_uint8(index.sequence_dir(i) / f"im{k}.png", seq) for k in order]
    if len({f.shape for f in frames}) != 1:
        raise SequenceIOError(f"sequence {seq}: frames differ in resolution")
    return np.stack(frames).transpose(0, 3, 1, 2)


def load_septuplet_sample(index: SeptupletIndex, i: int) -> Tuple[torch.Tensor, torch.Tensor]:
    """``(inputs (4, C, H, W), target (C, H, W))``; inputs are im2, im3, im5, im6."""
    arr = torch.from_numpy(_load_septuplet_uint8(index, i)).float() / 255.0
    return arr[[0, 1, 3, 4]], arr[2]


# ------------------------------------------------------------------ dataset

@dataclass
class FrameDataset:
    """Samples held as ``uint8`` tensors ``(N, 5, C, H, W)`` in time order -2..2."""

    frames: torch.Tensor
    ids: List[str]
    meta: List[dict] = field(default_factory=list)

    def __post_init__(self):
        if self.frames.dim() != 5 or self.frames.shape[1] != 5:
            raise ValueError(f"frames must be (N, 5, C, H, W), got {tuple(self.frames.shape)}")
        if len(self.ids) != self.frames.shape[0]:
            raise ValueError("one id per sample is required")

    def __len__(self) -> int:
        return self.frames.shape[0]

    def sample(self, i: int) -> Tuple[torch.Tensor, torch.Tensor]:
        f = self.frames[i].float() / 255.0
        return f[[0, 1, 3, 4]], f[2]

    def batch(self, indices: Sequence[int]) -> Tuple[torch.Tensor, torch.Tensor]:
        f = self.frames[list(indices)].float() / 255.0
        return f[:, [0, 1, 3, 4]], f[:, 2]

    def subset(self, indices: Sequence[int]) -> "FrameDataset":
        indices = list(indices)
        meta = [self.meta[i] for i in indices] if self.meta else []
        return FrameDataset(self.frames[indices], [self.ids[i] for i in indices], meta)

    @classmethod
    def from_septuplets(cls, index: SeptupletIndex) -> "FrameDataset":
        arrays = [_load_septuplet_uint8(index, i) for i in range(len(index))]
        if len({a.shape for a in arrays}) > 1:
            raise SequenceIOError("sequences in one split must share a resolution")
        frames = torch.from_numpy(np.stack(arrays)) if arrays else torch.zeros(0, 5, 3, 1, 1, dtype=torch.uint8)
        meta = _read_manifest(index.root, index.sequences)
        return cls(frames, list(index.sequences), meta)


def _read_manifest(root: Path, ids: Sequence[str]) -> List[dict]:
    path = Path(root) / "manifest.jsonl"
    if not path.exists():
        return []
    rows = {}
    for line in path.read_text().splitlines():
        if line.strip():
            rec = json.loads(line)
            rows[rec["id"]] = rec
    if not all(i in rows for i in ids):
        return []
    return [rows[i] for i in ids]


# ------------------------------------------------------------- augmentation

@dataclass(frozen=True)
class AugmentationPolicy:
    horizontal_flip: bool = True
    vertical_flip: bool = True
    temporal_reversal: bool = True
    probability: float = 0.5

    @classmethod
    def none(cls) -> "AugmentationPolicy":
        return cls(False, False, False)


@dataclass(frozen=True)
class AppliedAugmentation:
    horizontal_flip: bool = False
    vertical_flip: bool = False
    temporal_reversal: bool = False


def draw_augmentation(policy: AugmentationPolicy, rng_seed: int) -> AppliedAugmentation:
    rng = np.random.default_rng(rng_seed)
    draws = rng.random(3) < policy.probability
    return AppliedAugmentation(
        bool(policy.horizontal_flip and draws[0]),
        bool(policy.vertical_flip and draws[1]),
        bool(policy.temporal_reversal and draws[2]),
    )


def apply_augmentation(inputs: torch.Tensor, target: torch.Tensor, ops: AppliedAugmentation):
    """Apply ``ops`` to ``inputs (..., 4, C, H, W)`` and ``target (..., C, H, W)``.

    Every operation is an involution, so applying the same ops again undoes them.
    """
    if ops.horizontal_flip:
        inputs, target = inputs.flip(-1), target.flip(-1)
    if ops.vertical_flip:
        inputs, target = inputs.flip(-2), target.flip(-2)
    if ops.temporal_reversal:
        inputs = inputs.flip(-4)
    return inputs, target


def augment(sample, policy: AugmentationPolicy, rng_seed: int):
    """Randomly flip / time-reverse one ``(inputs, target)`` sample.

    Returns ``((inputs, target), applied)``; pass ``applied`` to
    :func:`apply_augmentation` again to undo it.
    """
    inputs, target = sample
    ops = draw_augmentation(policy, rng_seed)
    return apply_augmentation(inputs, target, ops), ops


def epoch_order(n: int, seed: int, epoch: int, shuffle: bool = True) -> List[int]:
    """Deterministic sample order for one epoch."""
    if not shuffle:
        return list(range(n))
    rng = np.random.default_rng([seed, epoch])
    return rng.permutation(n).tolist()


def augmentation_seed(seed: int, epoch: int, i: int) -> int:
    return int(np.random.SeedSequence([seed, epoch, i]).generate_state(1)[0])


def iterate_batches(dataset: FrameDataset, batch_size: int, seed: int, epoch: int,
                    policy: Optional[AugmentationPolicy] = None, shuffle: bool = True,
                    drop_last: bool = False) -> Iterator[Tuple[List[int], torch.Tensor, torch.Tensor]]:
    """Yield ``(sample_ids, inputs (B, 4, C, H, W), target (B, C, H, W))``.

    Order and augmentation depend only on ``(seed, epoch)`` and the sample
    position, never on timing or worker count.
    """
    order = epoch_order(len(dataset), seed, epoch, shuffle)
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        if drop_last and len(idx) < batch_size:
            break
        inputs, target = dataset.batch(idx)
        if policy is not None:
            outs = []
            for k, i in enumerate(idx):
                ops = draw_augmentation(policy, augmentation_seed(seed, epoch, i))
                outs.append(apply_augmentation(inputs[k], target[k], ops))
            inputs = torch.stack([o[0] for o in outs])
            target = torch.stack([o[1] for o in outs])
        yield idx, inputs, target


# ----------------------------------------------------------- sprite scenes

@dataclass
class Sprite:
    """A textured shape moving on ``p(t) = p0 + v0 t + a t^2 / 2`` (row, col).

    ``accel_after`` switches the acceleration for ``t > 0`` (position and
    velocity stay continuous at ``t = 0``), giving a two-stage trajectory.
    """

    shape: str                      # "rect" or "disc"
    size: float                     # half-extent / radius in pixels
    p0: Tuple[float, float]
    v0: Tuple[float, float]
    accel: Tuple[float, float]
    colors: Tuple[Tuple[float, float, float], Tuple[float, float, float]]
    stripe_width: float = 4.0
    stripe_angle: float = 0.0
    accel_after: Optional[Tuple[float, float]] = None

    def position(self, t: float) -> np.ndarray:
        a = self.accel if (t <= 0 or self.accel_after is None) else self.accel_after
        return np.asarray(self.p0) + np.asarray(self.v0) * t + 0.5 * np.asarray(a) * t * t

    def bounding_radius(self) -> float:
        return self.size * (math.sqrt(2.0) if self.shape == "rect" else 1.0)


@dataclass
class KinematicScene:
    height: int
    width: int
    background: Tuple[float, float, float]
    sprites: List[Sprite]
    family: str = "quadratic"
    seed: int = 0
    times: Tuple[int, ...] = SEPTUPLET_TIMES

    def __post_init__(self):
        for s in self.sprites:
            r = s.bounding_radius()
            for t in self.times:
                y, x = s.position(t)
                if y - r < 1 or x - r < 1 or y + r > self.height - 2 or x + r > self.width - 2:
                    raise ValueError(f"sprite leaves the canvas at t={t}: centre ({y:.2f}, {x:.2f}), radius {r:.2f}")


SUPERSAMPLE = 4


def _tent_matrix(n: int, s: int) -> np.ndarray:
    """Rows map fine samples at ``(m + 0.5)/s - 1`` to pixels with a 2-px tent filter."""
    pos = (np.arange((n + 1) * s) + 0.5) / s - 1.0
    w = np.maximum(0.0, 1.0 - np.abs(pos[None, :] - np.arange(n)[:, None]))
    return w / w.sum(axis=1, keepdims=True)


def render(scene: KinematicScene, t: float, supersample: int = SUPERSAMPLE) -> np.ndarray:
    """Render the scene at time ``t`` as a ``(3, H, W)`` float64 array.

    Point samples on a grid ``supersample`` times finer than the pixels are
    integrated with a two-pixel tent filter: edges come out anti-aliased, and
    the result is smooth enough that bilinear resampling at fractional
    positions stays accurate.
    """
    h, w, s = scene.height, scene.width, supersample
    ys = (np.arange((h + 1) * s) + 0.5) / s - 1.0
    xs = (np.arange((w + 1) * s) + 0.5) / s - 1.0
    img = np.empty((3, ys.size, xs.size))
    img[:] = np.asarray(scene.background)[:, None, None]
    for sp in scene.sprites:
        cy, cx = sp.position(t)
        r = sp.bounding_radius() + 1.0 / s
        # only the fine samples inside the sprite's bounding box can change
        y0, y1 = np.searchsorted(ys, cy - r), np.searchsorted(ys, cy + r, side="right")
        x0, x1 = np.searchsorted(xs, cx - r), np.searchsorted(xs, cx + r, side="right")
        u, v = np.meshgrid(ys[y0:y1] - cy, xs[x0:x1] - cx, indexing="ij")
        if sp.shape == "rect":
            inside = (np.abs(u) <= sp.size) & (np.abs(v) <= sp.size)
        else:
            inside = u * u + v * v <= sp.size * sp.size
        proj = u * math.cos(sp.stripe_angle) + v * math.sin(sp.stripe_angle)
        band = np.floor(proj / sp.stripe_width).astype(np.int64) % 2
        color = np.asarray(sp.colors)[band].transpose(2, 0, 1)
        block = img[:, y0:y1, x0:x1]
        img[:, y0:y1, x0:x1] = np.where(inside[None], color, block)
    ty, tx = _tent_matrix(h, s), _tent_matrix(w, s)
    return ty @ img @ tx.T


def _owner_map(scene: KinematicScene) -> np.ndarray:
    """Index of the nearest sprite (by centre at t=0) for every pixel."""
    h, w = scene.height, scene.width
    yy, xx = np.meshgrid(np.arange(h), np.arange(w), indexing="ij")
    if not scene.sprites:
        return np.zeros((h, w), dtype=np.int64)
    d = np.stack([(yy - s.p0[0]) ** 2 + (xx - s.p0[1]) ** 2 for s in scene.sprites])
    return d.argmin(axis=0)


def analytic_regressed(sprite: Sprite) -> Tuple[np.ndarray, np.ndarray]:
    """Closed-form forward/backward regressed displacement of one sprite.

    With left acceleration ``a_l`` (t <= 0) and right acceleration ``a_r``,
    the three-point forms evaluate to ``-(a_r + 5 a_l) / 6`` (forward) and
    ``-(a_l + 5 a_r) / 6`` (backward); both reduce to ``-a`` for a single
    quadratic and to zero for constant velocity.
    """
    a_l = np.asarray(sprite.accel, dtype=np.float64)
    a_r = np.asarray(sprite.accel_after if sprite.accel_after is not None else sprite.accel, dtype=np.float64)
    return -(a_r + 5 * a_l) / 6.0, -(a_l + 5 * a_r) / 6.0


@dataclass
class GeneratedScene:
    scene: KinematicScene
    frames: Dict[int, torch.Tensor]             # t -> (1, 3, H, W) for every rendered time
    target: torch.Tensor                        # (1, 3, H, W) at t = 0
    true_displacements: MotionSet               # M_n = p(0) - p(n)
    true_motions: MotionSet                     # warp offsets p(n) - p(0)
    true_regressed: Tuple[MotionField, MotionField]   # analytic (forward, backward), kinematic sign

    def inputs(self) -> torch.Tensor:
        """``(1, 4, 3, H, W)`` reference frames in order -2, -1, 1, 2."""
        return torch.stack([self.frames[n] for n in REFERENCE_TIMES], dim=1)


def _dense(values: np.ndarray, owner: np.ndarray) -> torch.Tensor:
    """Per-sprite ``(n_sprites, 2)`` values painted onto the owner map -> two ``(1, 1, H, W)`` grids."""
    if values.shape[0] == 0:
        z = torch.zeros(1, 1, *owner.shape, dtype=torch.float64)
        return z, z.clone()
    grid = values[owner]                         # (H, W, 2)
    a = torch.from_numpy(np.ascontiguousarray(grid[..., 0]))[None, None]
    b = torch.from_numpy(np.ascontiguousarray(grid[..., 1]))[None, None]
    return a, b


def generate_scene(scene: KinematicScene, kernel_size: int = 5, dilation: int = 1,
                   dtype=torch.float32) -> GeneratedScene:
    """Render every sample time and emit exact dense motions.

    Every pixel takes the motion of the sprite whose centre is nearest at
    t = 0; the background is a flat colour, so this is exact wherever sprites
    keep apart (the random scene builder enforces that).
    """
    frames = {t: torch.from_numpy(render(scene, t)).to(dtype)[None] for t in scene.times}
    if 0 not in frames:
        raise ValueError("scene times must include the target instant 0")
    owner = _owner_map(scene)
    occ = torch.full((1, 1, scene.height, scene.width), 0.5, dtype=dtype)

    disp, warp = {}, {}
    for n in REFERENCE_TIMES:
        vals = np.array([s.position(0) - s.position(n) for s in scene.sprites]).reshape(-1, 2)
        a, b = _dense(vals, owner)
        disp[n] = MotionField.translation(a.to(dtype), b.to(dtype), kernel_size, dilation)
        warp[n] = MotionField.translation((-a).to(dtype), (-b).to(dtype), kernel_size, dilation)

    fwd_vals = np.array([analytic_regressed(s)[0] for s in scene.sprites]).reshape(-1, 2)
    bwd_vals = np.array([analytic_regressed(s)[1] for s in scene.sprites]).reshape(-1, 2)
    fa, fb = _dense(fwd_vals, owner)
    ba, bb = _dense(bwd_vals, owner)
    regressed = (MotionField.translation(fa.to(dtype), fb.to(dtype), kernel_size, dilation),
                 MotionField.translation(ba.to(dtype), bb.to(dtype), kernel_size, dilation))
    return GeneratedScene(scene, frames, frames[0], MotionSet(disp, occ), MotionSet(warp, occ.clone()), regressed)


def _rand_color(rng, lo=0.15, hi=0.85):
    return tuple(float(c) for c in rng.uniform(lo, hi, 3))


def random_scene(rng: np.random.Generator, family: str, height: int = 64, width: int = 64,
                 max_sprites: int = 2, static_probability: float = 0.0, seed: int = 0,
                 max_tries: int = 200) -> KinematicScene:
    """Draw a scene of one trajectory family with well separated sprites.

    ``linear`` has zero acceleration, ``quadratic`` one constant acceleration,
    ``piecewise`` switches acceleration at t = 0.
    """
    if family not in FAMILIES:
        raise ValueError(f"unknown trajectory family {family!r}; expected one of {FAMILIES}")
    background = _rand_color(rng, 0.3, 0.7)
    static = rng.random() < static_probability
    n_sprites = int(rng.integers(1, max_sprites + 1))
    scale = min(height, width) / 64.0
    for _ in range(max_tries):
        sprites = []
        for _k in range(n_sprites):
            size = float(rng.uniform(4.0, 8.0)) * scale
            v0 = (0.0, 0.0) if static else tuple(float(x) for x in rng.uniform(-1.5, 1.5, 2) * scale)
            acc = (0.0, 0.0)
            after = None
            if family != "linear" and not static:
                acc = tuple(float(x) for x in rng.uniform(-0.75, 0.75, 2) * scale)
            if family == "piecewise" and not static:
                after = tuple(float(x) for x in rng.uniform(-0.75, 0.75, 2) * scale)
            margin = size * 1.5 + 2
            p0 = (float(rng.uniform(margin, height - margin)), float(rng.uniform(margin, width - margin)))
            colors = (_rand_color(rng), _rand_color(rng))
            sprites.append(Sprite(
                shape=str(rng.choice(["rect", "disc"])), size=size, p0=p0, v0=v0, accel=acc,
                colors=colors, stripe_width=float(rng.uniform(4.0, 8.0)) * scale,
                stripe_angle=float(rng.uniform(0, math.pi)),
                accel_after=after,
            ))
        try:
            scene = KinematicScene(height, width, background, sprites, family, seed)
        except ValueError:
            continue
        if _separated(scene):
            return scene
        n_sprites = max(1, n_sprites - 1) if rng.random() < 0.5 else n_sprites
    raise RuntimeError(f"could not place sprites for a {family} scene after {max_tries} tries")


def _separated(scene: KinematicScene) -> bool:
    """Sprites keep far enough apart that nearest-centre motion assignment is exact."""
    sps = scene.sprites
    for i in range(len(sps)):
        for j in range(i + 1, len(sps)):
            di = max(np.abs(sps[i].position(t) - sps[i].position(0)).max() for t in scene.times)
            dj = max(np.abs(sps[j].position(t) - sps[j].position(0)).max() for t in scene.times)
            need = 2.0 * (max(sps[i].bounding_radius(), sps[j].bounding_radius()) + 2.0
                          + math.sqrt(2.0) * (di + dj))
            if np.linalg.norm(np.asarray(sps[i].p0) - np.asarray(sps[j].p0)) < need:
                return False
    return True


def scene_seed(data_seed: int, split: str, i: int) -> int:
    split_id = {"train": 0, "test": 1}.get(split, 2)
    return int(np.random.SeedSequence([data_seed, split_id, i]).generate_state(1)[0])


def scene_record(scene: KinematicScene, seq_id: str, split: str) -> dict:
    disp = [np.abs(s.position(0) - s.position(n)).sum() for s in scene.sprites for n in REFERENCE_TIMES]
    return {
        "id": seq_id,
        "split": split,
        "family": scene.family,
        "seed": scene.seed,
        "height": scene.height,
        "width": scene.width,
        "background": list(scene.background),
        "motion_magnitude": float(np.mean(disp)) if disp else 0.0,
        "sprites": [asdict(s) for s in scene.sprites],
    }


def desk_scenes(n: int, split: str, data_seed: int = 1234, size: int = 64,
                static_probability: float = 0.1) -> Iterator[Tuple[str, KinematicScene]]:
    """The three families in equal proportion (round robin), one seed per scene."""
    for i in range(n):
        family = FAMILIES[i % len(FAMILIES)]
        seed = scene_seed(data_seed, split, i)
        rng = np.random.default_rng(seed)
        yield f"{split}_{i:05d}", random_scene(rng, family, size, size,
                                               static_probability=static_probability, seed=seed)


def build_dataset(n: int, split: str, data_seed: int = 1234, size: int = 64) -> FrameDataset:
    """Render a synthetic split in memory (time order -2..2, 8-bit quantised)."""
    frames, ids, meta = [], [], []
    for seq_id, scene in desk_scenes(n, split, data_seed, size):
        stack = np.stack([render(scene, t) for t in SAMPLE_TIMES])
        frames.append(np.round(np.clip(stack, 0, 1) * 255.0).astype(np.uint8))
        ids.append(seq_id)
        meta.append(scene_record(scene, seq_id, split))
    tensor = torch.from_numpy(np.stack(frames)) if frames else torch.zeros(0, 5, 3, size, size, dtype=torch.uint8)
    return FrameDataset(tensor, ids, meta)


def write_dataset(root, splits: Dict[str, int], data_seed: int = 1234, size: int = 64) -> Path:
    """Write synthetic splits as septuplets plus split lists and a JSON-lines manifest."""
    root = Path(root)
    (root / "sequences").mkdir(parents=True, exist_ok=True)
    records = []
    for split, n in splits.items():
        ids = []
        for seq_id, scene in desk_scenes(n, split, data_seed, size):
            for k, t in enumerate(SEPTUPLET_TIMES, start=1):
                img = np.round(np.clip(render(scene, t), 0, 1) * 255.0).astype(np.uint8)
                path = root / "sequences" / seq_id / f"im{k}.png"
                path.parent.mkdir(parents=True, exist_ok=True)
                Image.fromarray(img.transpose(1, 2, 0)).save(path)
            ids.append(seq_id)
            records.append(scene_record(scene, seq_id, split))
        (root / f"{split}.txt").write_text("\n".join(ids) + "\n")
    with open(root / "manifest.jsonl", "w") as fh:
        fh.write(json.dumps({"id": "_dataset", "data_seed": data_seed, "size": size, "splits": splits}) + "\n")
        for rec in records:
            fh.write(json.dumps(rec) + "\n")
    return root


def load_split(root, split: str) -> FrameDataset:
    return FrameDataset.from_septuplets(SeptupletIndex.from_root(root, f"{split}.txt"))
