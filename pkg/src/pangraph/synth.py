"""Synthetic (token grid, 2-D skeleton, 3-D skeleton, label) data with known structure.

Two class families share one recipe:

* spatial classes: a class-specific subset of joints oscillates at a common
  frequency, so which joints move is the signal;
* temporal classes: every joint oscillates, and only the number of cycles per
  clip differs. Cycle counts are coprime to the clip length, so the set of
  per-frame values is the same for every temporal class and a model without
  temporal modelling cannot tell them apart.

The oscillation moves the skeleton and is also written into the tokens of the
patches under the moving joints. Every joint's patch additionally carries a
fixed joint-identity vector, and every patch carries background plus noise.
"""
from __future__ import annotations

import hashlib
import math
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import numpy as np

from . import container
from .models import Batch
from .rng import Rng
from .sampling import SkeletonSequence, TokenGrid, patch_indices

# COCO-17 joint layout in metres, x right, y down, roughly 1.7 m tall
COCO17_TEMPLATE = np.array([
    [0.00, -0.80], [-0.04, -0.84], [0.04, -0.84], [-0.09, -0.82], [0.09, -0.82],
    [-0.20, -0.58], [0.20, -0.58], [-0.28, -0.30], [0.28, -0.30], [-0.32, -0.04], [0.32, -0.04],
    [-0.12, -0.02], [0.12, -0.02], [-0.14, 0.40], [0.14, 0.40], [-0.15, 0.82], [0.15, 0.82],
])


@dataclass
class SynthSpec:
    num_classes: int = 8
    per_class: int = 50
    frames: int = 32
    joints: int = 17
    persons: int = 1
    grid_h: int = 16
    grid_w: int = 16
    channels: int = 64
    patch_size: int = 14
    gain: float = 1.0
    noise: float = 0.5
    presence: float = 1.0
    motion: float = 0.1            # oscillation amplitude of moving joints, metres
    drift: float = 0.03            # random-walk step of the body root, metres per frame
    drift_bound: float = 0.9       # |root offset| cap, metres; big enough to leave the frame
    pixels_per_metre: float = 100.0   # 2.24 m across a 224 px frame; feet and hands leave it on some walks
    spatial_cycles: int = 3
    second_person_prob: float = 0.5
    val_fraction: float = 0.2
    seed: int = 42

    def __post_init__(self):
        self.validate()

    @property
    def height(self) -> int:
        return self.grid_h * self.patch_size

    @property
    def width(self) -> int:
        return self.grid_w * self.patch_size

    @property
    def spatial_classes(self) -> int:
        return self.num_classes // 2

    def validate(self) -> None:
        def bad(msg):
            raise ValueError(f"invalid synth spec: {msg}")

        if self.num_classes < 2:
            bad("need at least two classes")
        if min(self.per_class, self.frames, self.joints, self.persons, self.grid_h, self.grid_w,
               self.channels, self.patch_size) < 1:
            bad("extents must be positive")
        if self.spatial_classes > self.joints:
            bad(f"{self.spatial_classes} spatial classes need at least as many joints")
        if self.noise < 0 or self.gain < 0:
            bad("noise and gain must be non-negative")
        if not 0 < self.val_fraction < 1:
            bad("val_fraction must lie in (0, 1)")
        if round(self.per_class * self.val_fraction) in (0, self.per_class):
            bad("val_fraction leaves an empty split")
        temporal_cycles(self.num_classes - self.spatial_classes, self.frames)

    def to_dict(self) -> dict:
        return asdict(self)


def synth_spec_keys() -> list[str]:
    return [f.name for f in fields(SynthSpec)]


def temporal_cycles(count: int, frames: int) -> list[int]:
    """The first ``count`` cycle counts coprime to ``frames`` and below Nyquist."""
    out = [c for c in range(1, frames // 2) if math.gcd(c, frames) == 1][:count]
    if len(out) < count:
        raise ValueError(f"clip length {frames} supports only {len(out)} temporal classes")
    return out


def class_motifs(spec: SynthSpec) -> list[tuple[np.ndarray, int]]:
    """``(active joint mask, cycles per clip)`` per class."""
    ns = spec.spatial_classes
    motifs = []
    for k in range(ns):
        motifs.append((np.arange(spec.joints) % ns == k, spec.spatial_cycles))
    for c in temporal_cycles(spec.num_classes - ns, spec.frames):
        motifs.append((np.ones(spec.joints, dtype=bool), c))
    return motifs


def spatial_class_ids(spec: SynthSpec) -> list[int]:
    return list(range(spec.spatial_classes))


def temporal_class_ids(spec: SynthSpec) -> list[int]:
    return list(range(spec.spatial_classes, spec.num_classes))


@dataclass
class Sample:
    id: str
    grid: TokenGrid
    skel2d: SkeletonSequence
    skel3d: SkeletonSequence
    label: int
    split: str


class Generator:
    """Deterministic per-sample generation: sample ``i`` depends only on the seed and ``i``."""

    def __init__(self, spec: SynthSpec):
        self.spec = spec
        self.motifs = class_motifs(spec)
        fixed = Rng(spec.seed).child("fixed")
        c, j = spec.channels, spec.joints
        self.background = fixed.child("background").normal(c) / math.sqrt(c)
        self.identity = _unit_rows(fixed.child("identity").normal((j, c)))
        self.signal = _unit_rows(fixed.child("signal").normal((j, c)))
        angles = fixed.child("directions").uniform(0, 2 * np.pi, j)
        self.directions = np.stack([np.cos(angles), np.sin(angles), np.zeros(j)], axis=1)
        if j == len(COCO17_TEMPLATE):
            template = COCO17_TEMPLATE
        else:
            template = fixed.child("template").uniform(-0.6, 0.6, (j, 2)) * [0.6, 1.3]
        self.template = np.concatenate([template, np.zeros((j, 1))], axis=1)

    @property
    def size(self) -> int:
        return self.spec.num_classes * self.spec.per_class

    def label(self, i: int) -> int:
        return i // self.spec.per_class

    def split(self, i: int) -> str:
        n_val = round(self.spec.per_class * self.spec.val_fraction)
        return "val" if i % self.spec.per_class >= self.spec.per_class - n_val else "train"

    def sample_id(self, i: int) -> str:
        return f"s{i:05d}"

    def skeleton3d(self, i: int) -> tuple[np.ndarray, np.ndarray]:
        """``(T, M, J, 3)`` coordinates in metres and the ``(M,)`` presence flags."""
        spec = self.spec
        rng = Rng(spec.seed).child(f"sample{i}")
        mask, cycles = self.motifs[self.label(i)]
        t = np.arange(spec.frames)
        present = np.ones(spec.persons, dtype=bool)
        if spec.persons > 1:
            present[1:] = rng.child("present").uniform(size=spec.persons - 1) < spec.second_person_prob
        coords = np.zeros((spec.frames, spec.persons, spec.joints, 3))
        for m in range(spec.persons):
            if not present[m]:
                continue
            pr = rng.child(f"person{m}")
            phase = pr.child("phase").uniform(0, 2 * np.pi)
            wave = np.sin(2 * np.pi * cycles * t / spec.frames + phase)
            root = np.zeros((spec.frames, 3))
            root[0, :2] = pr.child("start").uniform(-0.3, 0.3, 2) + [0.45 * (m - (spec.persons - 1) / 2), 0.0]
            steps = pr.child("walk").normal((spec.frames, 3), spec.drift) * [1.0, 0.5, 0.2]
            for s in range(1, spec.frames):
                root[s] = np.clip(root[s - 1] + steps[s], -spec.drift_bound, spec.drift_bound)
            moving = spec.motion * wave[:, None, None] * self.directions[None] * mask[None, :, None]
            coords[:, m] = self.template[None] + root[:, None] + moving
        return coords, present

    def project(self, coords: np.ndarray, present: np.ndarray) -> np.ndarray:
        """Orthographic pixel projection, image centre at the origin."""
        spec = self.spec
        px = coords[..., :2] * spec.pixels_per_metre + [spec.width / 2, spec.height / 2]
        return px * present[None, :, None, None]

    def sample(self, i: int) -> Sample:
        spec = self.spec
        label = self.label(i)
        mask, cycles = self.motifs[label]
        coords3d, present = self.skeleton3d(i)
        coords2d = self.project(coords3d, present)
        rng = Rng(spec.seed).child(f"sample{i}")
        t = np.arange(spec.frames)
        g = spec.grid_h * spec.grid_w
        grid = np.broadcast_to(self.background, (spec.frames, g, spec.channels)).copy()
        if spec.noise:
            grid += rng.child("noise").normal((spec.frames, g, spec.channels), spec.noise)
        idx = patch_indices(coords2d, spec.patch_size, spec.grid_h, spec.grid_w, spec.height, spec.width)
        for m in np.flatnonzero(present):
            phase = rng.child(f"person{m}").child("phase").uniform(0, 2 * np.pi)
            wave = np.sin(2 * np.pi * cycles * t / spec.frames + phase)
            tokens = (spec.presence * self.identity[None]
                      + spec.gain * wave[:, None, None] * self.signal[None] * mask[None, :, None])
            rows = np.repeat(t, spec.joints)
            np.add.at(grid, (rows, idx[:, m].reshape(-1)), tokens.reshape(-1, spec.channels))
        valid = np.broadcast_to(present, (spec.frames, spec.persons))
        grid = grid.reshape(spec.frames, spec.grid_h, spec.grid_w, spec.channels).astype(np.float32)
        return Sample(self.sample_id(i),
                      TokenGrid(grid, spec.patch_size, spec.height, spec.width),
                      SkeletonSequence(coords2d.astype(np.float32), valid.copy()),
                      SkeletonSequence(coords3d.astype(np.float32), valid.copy()),
                      label, self.split(i))


def _unit_rows(a: np.ndarray) -> np.ndarray:
    return a / np.linalg.norm(a, axis=-1, keepdims=True)


class Dataset:
    """All samples held in memory as stacked arrays."""

    def __init__(self, grids, skel2d, skel3d, valid, labels, splits, ids, *, patch_size, height, width,
                 num_classes, spec: SynthSpec | None = None):
        self.grids, self.skel2d, self.skel3d, self.valid = grids, skel2d, skel3d, valid
        self.labels = np.asarray(labels, dtype=np.int64)
        self.splits = np.asarray(splits)
        self.ids = list(ids)
        self.patch_size, self.height, self.width = patch_size, height, width
        self.num_classes = num_classes
        self.spec = spec

    def __len__(self) -> int:
        return len(self.ids)

    def indices(self, split: str) -> np.ndarray:
        return np.flatnonzero(self.splits == split)

    @property
    def frames(self) -> int:
        return self.grids.shape[1]

    @property
    def channels(self) -> int:
        return self.grids.shape[-1]

    @property
    def joints(self) -> int:
        return self.skel2d.shape[3]

    @property
    def persons(self) -> int:
        return self.skel2d.shape[2]

    def batch(self, idx, t_skel: int | None = None) -> Batch:
        idx = np.asarray(idx)
        skel3d = self.skel3d[idx]
        if t_skel is not None:
            skel3d = resample_frames(skel3d, t_skel)
        return Batch(grid=self.grids[idx], patch_size=self.patch_size, height=self.height, width=self.width,
                     skel2d=self.skel2d[idx], skel3d=skel3d, valid=self.valid[idx], labels=self.labels[idx],
                     ids=[self.ids[i] for i in idx])

    def sample_hash(self, i: int) -> str:
        h = hashlib.sha256()
        for a in (self.grids[i], self.skel2d[i], self.skel3d[i]):
            h.update(np.ascontiguousarray(a).tobytes())
        return h.hexdigest()


def resample_frames(x: np.ndarray, frames: int) -> np.ndarray:
    """Stretch or shrink axis 1 to ``frames`` by duplicating (or dropping) whole frames."""
    t = x.shape[1]
    if t == frames:
        return x
    return x[:, np.arange(frames) * t // frames]


def generate_arrays(spec: SynthSpec) -> Dataset:
    gen = Generator(spec)
    n = gen.size
    grids = np.empty((n, spec.frames, spec.grid_h, spec.grid_w, spec.channels), dtype=np.float32)
    skel2d = np.empty((n, spec.frames, spec.persons, spec.joints, 2), dtype=np.float32)
    skel3d = np.empty((n, spec.frames, spec.persons, spec.joints, 3), dtype=np.float32)
    valid = np.empty((n, spec.frames, spec.persons), dtype=bool)
    labels, splits, ids = [], [], []
    for i in range(n):
        s = gen.sample(i)
        grids[i], skel2d[i], skel3d[i], valid[i] = s.grid.data, s.skel2d.coords, s.skel3d.coords, s.skel2d.valid
        labels.append(s.label)
        splits.append(s.split)
        ids.append(s.id)
    return Dataset(grids, skel2d, skel3d, valid, labels, splits, ids, patch_size=spec.patch_size,
                   height=spec.height, width=spec.width, num_classes=spec.num_classes, spec=spec)


def spec_text(spec: SynthSpec) -> str:
    return "".join(f"{k}={v}\n" for k, v in spec.to_dict().items())


def parse_spec_text(text: str) -> SynthSpec:
    types = {f.name: f.type for f in fields(SynthSpec)}
    values = {}
    for line in text.splitlines():
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, _, raw = line.partition("=")
        key = key.strip()
        if key not in types:
            raise ValueError(f"unknown synth key {key!r}")
        values[key] = float(raw) if types[key] in ("float", float) else int(raw)
    return SynthSpec(**values)


def generate(spec: SynthSpec, out_dir) -> Path:
    """Write ``dataset.txt``, ``manifest.tsv`` and three PANT files per sample."""
    out = Path(out_dir)
    (out / "samples").mkdir(parents=True, exist_ok=True)
    gen = Generator(spec)
    lines = []
    for i in range(gen.size):
        s = gen.sample(i)
        rel = f"samples/{s.id}"
        container.write(out / f"{rel}.grid.pant", s.grid.data)
        container.write(out / f"{rel}.skel2d.pant", s.skel2d.coords)
        container.write(out / f"{rel}.skel3d.pant", s.skel3d.coords)
        lines.append(f"{s.id}\t{rel}\t{s.label}\t{s.split}")
    (out / "dataset.txt").write_text(spec_text(spec))
    (out / "manifest.tsv").write_text("\n".join(lines) + "\n")
    return out


def read_manifest(path) -> list[tuple[str, str, int, str]]:
    records = []
    for lineno, line in enumerate(Path(path).read_text().splitlines(), 1):
        if not line.strip():
            continue
        parts = line.split("\t")
        if len(parts) != 4 or parts[3] not in ("train", "val", "test"):
            raise ValueError(f"{path}:{lineno}: expected id<TAB>path<TAB>label<TAB>split")
        records.append((parts[0], parts[1], int(parts[2]), parts[3]))
    return records


def ingest_grid(path, patch_size: int = 1, height: int | None = None, width: int | None = None,
                dtype=np.float32) -> TokenGrid:
    data = container.read(path, dtype)
    if data.ndim != 4:
        raise ValueError(f"{path}: token grid must be 4-D (T, Gh, Gw, C), got dims {list(data.shape)}")
    return TokenGrid(data, patch_size, height or data.shape[1] * patch_size, width or data.shape[2] * patch_size)


def ingest_skeleton(path, dtype=np.float32) -> SkeletonSequence:
    return SkeletonSequence(container.read(path, dtype))


def load_dataset(directory, dtype=np.float32) -> Dataset:
    directory = Path(directory)
    spec = parse_spec_text((directory / "dataset.txt").read_text())
    grids, s2, s3, valid, labels, splits, ids = [], [], [], [], [], [], []
    for sid, rel, label, split in read_manifest(directory / "manifest.tsv"):
        grid = ingest_grid(directory / f"{rel}.grid.pant", spec.patch_size, spec.height, spec.width, dtype)
        skel2d = ingest_skeleton(directory / f"{rel}.skel2d.pant", dtype)
        skel3d = ingest_skeleton(directory / f"{rel}.skel3d.pant", dtype)
        if skel2d.frames != grid.frames:
            raise ValueError(f"{sid}: grid has {grid.frames} frames, skeleton {skel2d.frames}")
        grids.append(grid.data)
        s2.append(skel2d.coords)
        s3.append(skel3d.coords)
        valid.append(skel2d.valid)
        labels.append(label)
        splits.append(split)
        ids.append(sid)
    if not ids:
        raise ValueError(f"{directory}: empty manifest")
    return Dataset(np.stack(grids), np.stack(s2), np.stack(s3), np.stack(valid), labels, splits, ids,
                   patch_size=spec.patch_size, height=spec.height, width=spec.width,
                   num_classes=spec.num_classes, spec=spec)
