"""Full architectures: PAN, PAN-Ensemble, PAN-Unified and their ablations."""
from __future__ import annotations

import hashlib
from dataclasses import asdict, dataclass, field, fields

import numpy as np

from . import tensor as T
from .calibration import PostCalibration
from .graph import block_stack, load_topology
from .nn import BatchNorm, Linear, Module
from .rng import Rng
from .sampling import even_weights, patch_indices
from .tensor import Parameter, Tensor

FUSIONS = ("sum", "concat", "attention")


@dataclass
class ModelConfig:
    variant: str = "pan"                 # pan | ensemble | unified | skeleton
    sampling: str = "guided"             # guided | even
    even_mode: str = "linear"            # linear | nearest
    num_classes: int = 120
    in_channels: int = 384               # token embedding width C
    joints: int = 25
    persons: int = 2
    topology: str = "ntu25"
    c_r: int = 256
    heads: int = 4
    attn_scale: str = "head"             # head: sqrt(d_h); full: sqrt(C_R)
    rgb_block_inputs: tuple[int, ...] = (256, 256, 256, 512, 512)
    skel_block_outputs: tuple[int, ...] = (64, 64, 64, 128, 128)
    skel_head_outputs: tuple[int, ...] = (128, 128, 256, 256, 256)
    t_rgb: int = 32
    t_skel: int = 64
    no_calibration: bool = False
    no_gc: bool = False
    no_tc: bool = False
    no_pan: bool = False
    fusion: str = "sum"                  # sum | concat | attention
    alignment: str = "none"              # none | pre (before the graph) | post (after it)
    ensemble_scores: str = "logits"      # logits | softmax
    dtype: str = "float32"
    seed: int = 0

    def __post_init__(self):
        for name in ("rgb_block_inputs", "skel_block_outputs", "skel_head_outputs"):
            setattr(self, name, tuple(int(v) for v in getattr(self, name)))
        self.validate()

    @property
    def l1(self) -> int:
        return len(self.rgb_block_inputs)

    @property
    def l2(self) -> int:
        return len(self.skel_block_outputs)

    @property
    def l3(self) -> int:
        return len(self.skel_head_outputs)

    @property
    def block_variant(self) -> str:
        return "no-gc" if self.no_gc else "no-tc" if self.no_tc else "full"

    @property
    def needs_skeleton3d(self) -> bool:
        return self.variant in ("ensemble", "unified", "skeleton") or self.alignment != "none"

    @property
    def needs_skeleton2d(self) -> bool:
        return self.sampling == "guided" and not self.no_pan and self.variant != "skeleton"

    def validate(self) -> None:
        def bad(msg):
            raise ValueError(f"invalid model config: {msg}")

        choices = {"variant": ("pan", "ensemble", "unified", "skeleton"), "sampling": ("guided", "even"),
                   "even_mode": ("linear", "nearest"), "attn_scale": ("head", "full"),
                   "fusion": FUSIONS, "alignment": ("none", "pre", "post"),
                   "ensemble_scores": ("logits", "softmax"), "dtype": ("float32", "float64")}
        for key, allowed in choices.items():
            if getattr(self, key) not in allowed:
                bad(f"{key}={getattr(self, key)!r} not in {allowed}")
        if self.no_gc and self.no_tc:
            bad("no_gc and no_tc are separate ablations; pick one")
        if self.no_pan and self.variant in ("unified", "skeleton"):
            bad(f"no_pan removes the visual token graph; it does not apply to {self.variant}")
        if self.alignment != "none" and (self.variant != "pan" or self.no_pan):
            bad("alignment losses apply to the plain pan variant")
        if self.rgb_block_inputs and self.rgb_block_inputs[0] != self.c_r:
            bad(f"first RGB block input {self.rgb_block_inputs[0]} must equal c_r {self.c_r}")
        if self.c_r % self.heads:
            bad(f"heads {self.heads} must divide c_r {self.c_r}")
        if self.needs_skeleton3d and self.t_skel != 2 * self.t_rgb:
            bad(f"skeleton path halves time once: t_skel {self.t_skel} must be 2 * t_rgb {self.t_rgb}")
        for c in self.rgb_block_inputs + self.skel_block_outputs + self.skel_head_outputs:
            if c % 4:
                bad(f"block width {c} not divisible by the 4 temporal branches")
        if min(self.num_classes, self.in_channels, self.joints, self.persons) < 1:
            bad("extents must be positive")

    def to_dict(self) -> dict:
        return asdict(self)

    def digest(self) -> str:
        text = "\n".join(f"{k}={v}" for k, v in sorted(self.to_dict().items()))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def replace(self, **changes) -> "ModelConfig":
        data = self.to_dict()
        data.update(changes)
        return ModelConfig(**data)


def model_config_keys() -> list[str]:
    return [f.name for f in fields(ModelConfig)]


@dataclass
class Batch:
    """Model inputs for ``N`` samples.

    ``grid (N, T, Gh, Gw, C)``; ``skel2d (N, T, M, J, 2)`` pixels;
    ``skel3d (N, T_s, M, J, 3)``; ``valid (N, T, M)`` person-frame mask.
    """

    grid: np.ndarray
    patch_size: int = 1
    height: int = 0
    width: int = 0
    skel2d: np.ndarray | None = None
    skel3d: np.ndarray | None = None
    valid: np.ndarray | None = None
    labels: np.ndarray | None = None
    ids: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.height:
            self.height = self.grid.shape[2] * self.patch_size
        if not self.width:
            self.width = self.grid.shape[3] * self.patch_size

    @property
    def size(self) -> int:
        return self.grid.shape[0]


@dataclass
class ModelOutput:
    logits: Tensor                        # (N, K)
    person_logits: Tensor                 # (N, M, K)
    aux_loss: Tensor | None = None
    attention: Tensor | None = None


def _person_weights(valid_persons: np.ndarray, dtype) -> np.ndarray:
    """Mean over valid persons; a sample with none valid averages over all."""
    w = valid_persons.astype(np.float64)
    count = w.sum(axis=1, keepdims=True)
    w = np.where(count > 0, w / np.maximum(count, 1), 1.0 / w.shape[1])
    return w[..., None].astype(dtype)


def aggregate_persons(person_logits: Tensor, valid_persons: np.ndarray) -> Tensor:
    return T.sum(person_logits * _person_weights(valid_persons, person_logits.dtype), axis=1)


def alignment_loss(feat_r: Tensor, feat_s_projected: Tensor) -> Tensor:
    """Mean squared error between aligned embeddings."""
    return T.mse(feat_r, feat_s_projected)


class Head(Module):
    """Global average pool over time and joints, then a fully connected layer."""

    def __init__(self, c: int, num_classes: int, rng: Rng, dtype):
        self.fc = Linear(c, num_classes, rng.child("fc"), dtype=dtype)

    def forward(self, h: Tensor) -> Tensor:
        return self.fc(T.mean(h, axis=(1, 2)))


class TokenEncoder(Module):
    """Sampling plus calibration (or a bare ``C -> C_R`` projection)."""

    def __init__(self, cfg: ModelConfig, rng: Rng, dtype):
        self.cfg = cfg
        if cfg.no_calibration:
            self.calib = None
            self.proj = Parameter(rng.child("proj").normal((cfg.in_channels, cfg.c_r),
                                                          1.0 / np.sqrt(cfg.in_channels), dtype))
        else:
            self.calib = PostCalibration(cfg.in_channels, cfg.c_r, cfg.heads, rng.child("calib"),
                                         scale=cfg.attn_scale, dtype=dtype)
            self.proj = None

    def sample(self, batch: Batch) -> tuple[Tensor, Tensor, np.ndarray]:
        """Flat grid ``(N, T, G, C)``, sampled ``(N, T, M*J, C)``, frame mask ``(N, T, M)``."""
        cfg = self.cfg
        n, t, gh, gw, c = batch.grid.shape
        if c != cfg.in_channels:
            raise T.ShapeError(f"grid channels {c} != configured in_channels {cfg.in_channels}")
        dtype = np.dtype(cfg.dtype)
        flat = batch.grid.reshape(n, t, gh * gw, c).astype(dtype, copy=False)
        m, j = cfg.persons, cfg.joints
        if cfg.sampling == "guided":
            if batch.skel2d is None:
                raise ValueError("guided sampling needs a 2-D skeleton")
            if batch.skel2d.shape[:4] != (n, t, m, j):
                raise T.ShapeError(f"2-D skeleton dims {list(batch.skel2d.shape)} do not match "
                                   f"(N, T, M, J) = {[n, t, m, j]}")
            idx = patch_indices(batch.skel2d, batch.patch_size, gh, gw, batch.height, batch.width)
            valid = batch.valid if batch.valid is not None else np.ones((n, t, m), dtype=bool)
            sampled = T.gather_tokens(Tensor(flat), idx.reshape(n, t, m * j))
            mask = np.repeat(valid, j, axis=2)[..., None].astype(dtype)
            sampled = sampled * mask
        else:
            lo, hi, w = even_weights(gh * gw, j, cfg.even_mode)
            w = w.astype(dtype)[None, None, :, None]
            tokens = flat[:, :, lo] * (1 - w) + flat[:, :, hi] * w
            sampled = Tensor(np.tile(tokens, (1, 1, m, 1)))
            valid = np.ones((n, t, m), dtype=bool)
        return Tensor(flat), sampled, valid

    def forward(self, batch: Batch) -> tuple[Tensor, np.ndarray]:
        """``Feat_R`` as ``(N*M, T, J, C_R)`` and the ``(N, T, M)`` frame mask."""
        cfg = self.cfg
        grid, sampled, valid = self.sample(batch)
        feat = T.linear(sampled, self.proj) if self.calib is None else self.calib(grid, sampled)
        n, t = grid.shape[:2]
        feat = T.reshape(feat, (n, t, cfg.persons, cfg.joints, cfg.c_r))
        feat = T.reshape(T.permute(feat, (0, 2, 1, 3, 4)), (n * cfg.persons, t, cfg.joints, cfg.c_r))
        mask = valid.transpose(0, 2, 1).reshape(n * cfg.persons, t, 1, 1).astype(feat.dtype)
        return feat * mask, valid

    def attention_maps(self, batch: Batch) -> Tensor:
        if self.calib is None:
            raise ValueError("model has no calibration module")
        grid, sampled, _ = self.sample(batch)
        return self.calib.attention(grid, sampled)


class GraphNet(Module):
    """Stack of basic blocks; absent persons are re-zeroed after every block."""

    def __init__(self, c_in: list[int], c_out: list[int], adjacency: np.ndarray, rng: Rng, *,
                 strides: list[int] | None = None, variant: str, dtype):
        self.blocks = block_stack(c_in, c_out, adjacency, rng, strides=strides, variant=variant, dtype=dtype)

    def forward(self, h: Tensor, person_mask: np.ndarray | None = None) -> Tensor:
        m = None if person_mask is None else person_mask.reshape(-1, 1, 1, 1).astype(h.dtype)
        for block in self.blocks:
            h = block(h)
            if m is not None:
                h = h * m
        return h


class SkeletonPath(Module):
    """``L2`` blocks over 3-D coordinates, halving time at the last block.

    Each sequence is first translated so that the mean first-frame joint of its
    present persons sits at the origin, then batch-normalized per (joint,
    coordinate) channel. Without the translation the body's drift across the
    scene dominates the input and joint training of the fused model stalls.
    """

    def __init__(self, cfg: ModelConfig, adjacency: np.ndarray, rng: Rng, dtype):
        outs = list(cfg.skel_block_outputs)
        ins = [3] + outs[:-1]
        strides = [1] * (len(outs) - 1) + [2]
        self.cfg = cfg
        self.data_bn = BatchNorm(cfg.joints * 3, dtype=dtype)
        self.net = GraphNet(ins, outs, adjacency, rng, strides=strides, variant=cfg.block_variant, dtype=dtype)

    def forward(self, batch: Batch) -> tuple[Tensor, np.ndarray]:
        """``Feat_S`` as ``(N*M, T_s/2, J, C_S)`` and the per-person mask ``(N, M)``."""
        cfg = self.cfg
        if batch.skel3d is None:
            raise ValueError("this model needs a 3-D skeleton stream")
        s = batch.skel3d
        if s.ndim != 5 or s.shape[-1] != 3:
            raise T.ShapeError(f"3-D skeleton must be (N, T, M, J, 3), got dims {list(s.shape)}")
        n, ts, m, j, _ = s.shape
        if (ts, m, j) != (cfg.t_skel, cfg.persons, cfg.joints):
            raise T.ShapeError(f"3-D skeleton dims {list(s.shape)} do not match "
                               f"(T_s, M, J) = {[cfg.t_skel, cfg.persons, cfg.joints]}")
        persons = np.any(s != 0, axis=(1, 3, 4))
        s = centre_sequences(s, persons)
        x = Tensor(s.transpose(0, 2, 1, 3, 4).reshape(n * m, ts, j * 3).astype(cfg.dtype))
        x = T.reshape(self.data_bn(x), (n * m, ts, j, 3))
        return self.net(x, persons), persons


def centre_sequences(s: np.ndarray, persons: np.ndarray) -> np.ndarray:
    """Shift ``(N, T, M, J, 3)`` so each sample's present persons average to the origin at frame 0."""
    w = persons[:, :, None, None].astype(s.dtype)
    count = np.maximum(w.sum(axis=(1, 2)) * s.shape[3], 1)
    origin = (s[:, 0] * w).sum(axis=(1, 2)) / count
    return np.where(persons[:, None, :, None, None], s - origin[:, None, None, None], 0).astype(s.dtype)


def _valid_persons(valid: np.ndarray) -> np.ndarray:
    return valid.any(axis=1)


class PAN(Module):
    """Token sampling, calibration, ``L1`` graph blocks and a classification head."""

    def __init__(self, cfg: ModelConfig, rng: Rng | None = None):
        rng = rng or Rng(cfg.seed)
        dtype = np.dtype(cfg.dtype)
        self.cfg = cfg
        adj = _initial_topology(cfg)
        self.encoder = TokenEncoder(cfg, rng.child("encoder"), dtype)
        ins = list(cfg.rgb_block_inputs)
        outs = ins[1:] + ins[-1:]
        self.gcn = GraphNet(ins, outs, adj, rng.child("gcn"), variant=cfg.block_variant, dtype=dtype)
        self.head = Head(outs[-1], cfg.num_classes, rng.child("head"), dtype)
        self.skeleton = self.align_proj = self.skeleton_tail = None
        if cfg.alignment != "none":
            self.skeleton = SkeletonPath(cfg, adj, rng.child("skeleton"), dtype)
            c_s = cfg.skel_block_outputs[-1]
            if cfg.alignment == "post":
                tail = list(cfg.skel_head_outputs)
                self.skeleton_tail = GraphNet([c_s] + tail[:-1], tail, adj, rng.child("skeleton_tail"),
                                              variant=cfg.block_variant, dtype=dtype)
                self.align_proj = Linear(tail[-1], outs[-1], rng.child("align"), dtype=dtype)
            else:
                self.align_proj = Linear(c_s, cfg.c_r, rng.child("align"), dtype=dtype)

    def features(self, batch: Batch) -> tuple[Tensor, np.ndarray, np.ndarray]:
        feat_r, valid = self.encoder(batch)
        persons = _valid_persons(valid)
        return feat_r, valid, persons

    def forward(self, batch: Batch) -> ModelOutput:
        cfg = self.cfg
        feat_r, valid, persons = self.features(batch)
        h = self.gcn(feat_r, persons)
        aux = None
        if self.skeleton is not None:
            feat_s, s_persons = self.skeleton(batch)
            if cfg.alignment == "pre":
                aux = alignment_loss(feat_r, self.align_proj(feat_s))
            else:
                aux = alignment_loss(h, self.align_proj(self.skeleton_tail(feat_s, s_persons)))
        person_logits = T.reshape(self.head(h), (batch.size, cfg.persons, cfg.num_classes))
        return ModelOutput(aggregate_persons(person_logits, persons), person_logits, aux)


class RawHead(Module):
    """``no-pan`` ablation: pool the raw token grid and classify directly."""

    def __init__(self, cfg: ModelConfig, rng: Rng | None = None):
        rng = rng or Rng(cfg.seed)
        self.cfg = cfg
        self.fc = Linear(cfg.in_channels, cfg.num_classes, rng.child("head"), dtype=np.dtype(cfg.dtype))

    def forward(self, batch: Batch) -> ModelOutput:
        grid = Tensor(batch.grid.astype(self.cfg.dtype, copy=False))
        logits = self.fc(T.mean(grid, axis=(1, 2, 3)))
        return ModelOutput(logits, T.reshape(logits, (batch.size, 1, self.cfg.num_classes)))


class SkeletonClassifier(Module):
    """Skeleton-only pathway: ``L2`` then ``L3`` blocks and a head."""

    def __init__(self, cfg: ModelConfig, rng: Rng | None = None):
        rng = rng or Rng(cfg.seed)
        dtype = np.dtype(cfg.dtype)
        self.cfg = cfg
        adj = _initial_topology(cfg)
        self.skeleton = SkeletonPath(cfg, adj, rng.child("skeleton"), dtype)
        tail = list(cfg.skel_head_outputs)
        self.gcn = GraphNet([cfg.skel_block_outputs[-1]] + tail[:-1], tail, adj, rng.child("gcn"),
                            variant=cfg.block_variant, dtype=dtype)
        self.head = Head(tail[-1], cfg.num_classes, rng.child("head"), dtype)

    def forward(self, batch: Batch) -> ModelOutput:
        cfg = self.cfg
        feat_s, persons = self.skeleton(batch)
        h = self.gcn(feat_s, persons)
        person_logits = T.reshape(self.head(h), (batch.size, cfg.persons, cfg.num_classes))
        return ModelOutput(aggregate_persons(person_logits, persons), person_logits)


class PANEnsemble(Module):
    """Separate RGB and skeleton pathways; class scores are summed."""

    def __init__(self, cfg: ModelConfig, rng: Rng | None = None):
        rng = rng or Rng(cfg.seed)
        self.cfg = cfg
        rgb_cfg = cfg.replace(variant="pan")
        self.rgb = RawHead(rgb_cfg, rng.child("rgb")) if cfg.no_pan else PAN(rgb_cfg, rng.child("rgb"))
        self.skel = SkeletonClassifier(cfg.replace(variant="pan", no_pan=False), rng.child("skel"))

    def forward(self, batch: Batch) -> ModelOutput:
        a, b = self.rgb(batch), self.skel(batch)
        return ModelOutput(combine_scores(a.logits, b.logits, self.cfg.ensemble_scores),
                           a.person_logits + b.person_logits)


def ensemble_from_paths(cfg: ModelConfig, rgb_state: dict, skel_state: dict) -> PANEnsemble:
    """Late fusion of two separately trained pathways (a ``pan`` and a ``skeleton`` model)."""
    model = PANEnsemble(cfg.replace(variant="ensemble"))
    model.rgb.load_state_dict(rgb_state)
    model.skel.load_state_dict(skel_state)
    return model


def combine_scores(a: Tensor, b: Tensor, mode: str = "logits") -> Tensor:
    """Late fusion: sum raw logits, or sum per-path softmax probabilities."""
    if mode == "softmax":
        return T.softmax(a, axis=-1) + T.softmax(b, axis=-1)
    return a + b


class Fusion(Module):
    """Merge ``Feat_R (.., C_R)`` with ``Feat_S (.., C_S)``.

    ``sum``: ``Feat_R + P Feat_S``; ``concat``: ``[Feat_R, Feat_S] W``;
    ``attention``: sigmoid gate ``g`` from ``[Feat_R, P Feat_S]``, mixing
    ``g * Feat_R + (1 - g) * P Feat_S``.

    ``Feat_S`` first passes a batch norm whose scale starts at zero, so training
    begins from the visual-token model and learns how much skeleton to mix in.
    Raw ``Feat_S`` is several times larger than ``Feat_R``, and without the norm
    the first SGD steps on ``P`` blow up the fused features.
    """

    def __init__(self, kind: str, c_r: int, c_s: int, rng: Rng, dtype):
        self.kind = kind
        self.proj = self.mix = self.gate = None
        if kind in ("sum", "attention"):
            self.proj = Linear(c_s, c_r, rng.child("proj"), dtype=dtype)
        if kind == "concat":
            self.mix = Linear(c_r + c_s, c_r, rng.child("mix"), dtype=dtype)
        if kind == "attention":
            self.gate = Linear(2 * c_r, c_r, rng.child("gate"), dtype=dtype)
        self.norm = BatchNorm(c_s, init_scale=0.0, dtype=dtype)

    def forward(self, feat_r: Tensor, feat_s: Tensor) -> Tensor:
        if feat_r.shape[:3] != feat_s.shape[:3]:
            raise T.ShapeError(f"Feat_R {feat_r.dims} and Feat_S {feat_s.dims} differ in (N*M, T, J)")
        feat_s = self.norm(feat_s)
        if self.kind == "sum":
            return feat_r + self.proj(feat_s)
        if self.kind == "concat":
            return self.mix(T.concat([feat_r, feat_s], axis=-1))
        s = self.proj(feat_s)
        g = T.sigmoid(self.gate(T.concat([feat_r, s], axis=-1)))
        return g * feat_r + (1.0 - g) * s


class PANUnified(Module):
    """Skeletal embeddings fused into the visual token graph before one ``L1`` stack."""

    def __init__(self, cfg: ModelConfig, rng: Rng | None = None):
        rng = rng or Rng(cfg.seed)
        dtype = np.dtype(cfg.dtype)
        self.cfg = cfg
        adj = _initial_topology(cfg)
        self.encoder = TokenEncoder(cfg, rng.child("encoder"), dtype)
        self.skeleton = SkeletonPath(cfg, adj, rng.child("skeleton"), dtype)
        self.fusion = Fusion(cfg.fusion, cfg.c_r, cfg.skel_block_outputs[-1], rng.child("fusion"), dtype)
        ins = list(cfg.rgb_block_inputs)
        outs = ins[1:] + ins[-1:]
        self.gcn = GraphNet(ins, outs, adj, rng.child("gcn"), variant=cfg.block_variant, dtype=dtype)
        self.head = Head(outs[-1], cfg.num_classes, rng.child("head"), dtype)

    def forward(self, batch: Batch) -> ModelOutput:
        cfg = self.cfg
        feat_r, valid = self.encoder(batch)
        feat_s, _ = self.skeleton(batch)
        persons = _valid_persons(valid)
        h = self.gcn(self.fusion(feat_r, feat_s), persons)
        person_logits = T.reshape(self.head(h), (batch.size, cfg.persons, cfg.num_classes))
        return ModelOutput(aggregate_persons(person_logits, persons), person_logits)


def _initial_topology(cfg: ModelConfig) -> np.ndarray:
    topo = load_topology(cfg.topology, cfg.joints)
    if topo.num_joints != cfg.joints:
        raise ValueError(f"topology {cfg.topology!r} has {topo.num_joints} joints, config says {cfg.joints}")
    return topo.adjacency + np.eye(cfg.joints)


def build_model(cfg: ModelConfig, rng: Rng | None = None) -> Module:
    if cfg.variant == "skeleton":
        return SkeletonClassifier(cfg, rng)
    if cfg.variant == "ensemble":
        return PANEnsemble(cfg, rng)
    if cfg.variant == "unified":
        return PANUnified(cfg, rng)
    if cfg.no_pan:
        return RawHead(cfg, rng)
    return PAN(cfg, rng)


def count_parameters(cfg: ModelConfig) -> tuple[int, dict[str, int]]:
    """Exact learnable-scalar count and a breakdown by top-level module path."""
    model = build_model(cfg)
    breakdown: dict[str, int] = {}
    for name, p in model.named_parameters():
        key = ".".join(name.split(".")[:2]) if name.split(".")[0] in ("rgb", "skel") else name.split(".")[0]
        breakdown[key] = breakdown.get(key, 0) + p.size
    return sum(breakdown.values()), breakdown


def micro_config(**changes) -> ModelConfig:
    """Tiny shapes for gradient checks: T=4, J=5, M=2, 4x4 grid, C=8, C_R=8, 3 classes."""
    base = dict(num_classes=3, in_channels=8, joints=5, persons=2, topology="chain5", c_r=8, heads=2,
                rgb_block_inputs=(8, 16), skel_block_outputs=(8, 8), skel_head_outputs=(8, 8),
                t_rgb=4, t_skel=8, dtype="float64", seed=3)
    base.update(changes)
    return ModelConfig(**base)


def micro_batch(cfg: ModelConfig, n: int = 2, grid_side: int = 4, patch_size: int = 4, seed: int = 0) -> Batch:
    """Random inputs matching ``cfg``; some joints fall off-frame to exercise clamping."""
    rng = Rng(seed).child("micro")
    side = grid_side * patch_size
    skel2d = rng.child("2d").uniform(-2.0, side + 2.0, (n, cfg.t_rgb, cfg.persons, cfg.joints, 2))
    skel3d = rng.child("3d").normal((n, cfg.t_skel, cfg.persons, cfg.joints, 3))
    return Batch(grid=rng.child("grid").normal((n, cfg.t_rgb, grid_side, grid_side, cfg.in_channels)),
                 patch_size=patch_size, skel2d=skel2d, skel3d=skel3d,
                 valid=np.ones((n, cfg.t_rgb, cfg.persons), dtype=bool),
                 labels=np.arange(n) % cfg.num_classes)
