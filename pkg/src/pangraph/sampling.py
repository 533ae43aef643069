"""Joint-guided and even sampling of visual token embeddings."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass
class TokenGrid:
    """Per-frame patch embeddings, ``data`` shaped ``(T, Gh, Gw, C)``.

    The encoder's cls token is never stored here.
    """

    data: np.ndarray
    patch_size: int
    height: int
    width: int

    def __post_init__(self):
        if self.data.ndim != 4:
            raise ValueError(f"token grid must be 4-D (T, Gh, Gw, C), got dims {list(self.data.shape)}")
        if self.patch_size < 1:
            raise ValueError("patch size must be >= 1")
        expected = (math.ceil(self.height / self.patch_size), math.ceil(self.width / self.patch_size))
        if self.data.shape[1:3] != expected:
            raise ValueError(f"grid {self.data.shape[1:3]} does not match ceil(H/P) x ceil(W/P) = {expected}")

    @classmethod
    def from_array(cls, data: np.ndarray, patch_size: int = 1) -> "TokenGrid":
        """Wrap a bare array, taking image extents as ``Gh * P`` by ``Gw * P``."""
        return cls(data, patch_size, data.shape[1] * patch_size, data.shape[2] * patch_size)

    @property
    def frames(self) -> int:
        return self.data.shape[0]

    @property
    def gh(self) -> int:
        return self.data.shape[1]

    @property
    def gw(self) -> int:
        return self.data.shape[2]

    @property
    def channels(self) -> int:
        return self.data.shape[3]

    @property
    def num_tokens(self) -> int:
        return self.gh * self.gw

    def flat(self) -> np.ndarray:
        return self.data.reshape(self.frames, self.num_tokens, self.channels)


@dataclass
class SkeletonSequence:
    """Joint coordinates ``(T, M, J, 2|3)`` plus a ``(T, M)`` validity mask.

    2-D coordinates are pixels, x before y.
    """

    coords: np.ndarray
    valid: np.ndarray | None = None

    def __post_init__(self):
        if self.coords.ndim != 4 or self.coords.shape[-1] not in (2, 3):
            raise ValueError(f"skeleton must be (T, M, J, 2|3), got dims {list(self.coords.shape)}")
        if self.valid is None:
            # all-zero person-frames are the zero-padding convention for absent people
            self.valid = np.any(self.coords != 0, axis=(2, 3))
        self.valid = np.asarray(self.valid, dtype=bool)

    @property
    def frames(self) -> int:
        return self.coords.shape[0]

    @property
    def persons(self) -> int:
        return self.coords.shape[1]

    @property
    def joints(self) -> int:
        return self.coords.shape[2]


@dataclass
class SampledTokens:
    data: np.ndarray      # (T, M, J, C)
    indices: np.ndarray   # (T, M, J) flat patch index per joint
    strategy: str         # "guided" | "even"


def joint_to_patch_index(x: float, y: float, patch_size: int, gw: int, gh: int | None = None) -> int:
    """Flat row-major index of the patch holding pixel ``(x, y)``."""
    idx = int(y // patch_size) * gw + int(x // patch_size)
    hi = gw * gh - 1 if gh is not None else idx
    return min(max(idx, 0), hi)


def patch_indices(coords: np.ndarray, patch_size: int, gh: int, gw: int,
                  height: int, width: int) -> np.ndarray:
    """Vectorised joint-to-patch mapping for any ``(..., 2)`` pixel array.

    Coordinates are clamped into the frame first, so off-frame joints land on
    the nearest edge patch.
    """
    x = np.clip(coords[..., 0], 0, width - 1)
    y = np.clip(coords[..., 1], 0, height - 1)
    col = np.floor(x / patch_size).astype(np.int64)
    row = np.floor(y / patch_size).astype(np.int64)
    return np.clip(row * gw + col, 0, gh * gw - 1)


def guided_sample(grid: TokenGrid, skeleton2d: SkeletonSequence) -> SampledTokens:
    if skeleton2d.coords.shape[-1] != 2:
        raise ValueError("guided sampling needs a 2-D skeleton")
    if skeleton2d.frames != grid.frames:
        raise ValueError(f"frame mismatch: grid has {grid.frames}, skeleton has {skeleton2d.frames}")
    idx = patch_indices(skeleton2d.coords, grid.patch_size, grid.gh, grid.gw, grid.height, grid.width)
    flat = grid.flat()
    data = flat[np.arange(grid.frames)[:, None, None], idx]
    data = data * skeleton2d.valid[:, :, None, None]
    return SampledTokens(data.astype(grid.data.dtype, copy=False), idx, "guided")


def even_positions(num_tokens: int, joints: int) -> np.ndarray:
    """Evenly spaced fractional positions over the flattened token sequence."""
    if joints < 1:
        raise ValueError("need at least one joint")
    if joints == 1:
        return np.array([(num_tokens - 1) / 2.0])
    if num_tokens < 2:
        raise ValueError("even sampling of several joints needs at least two tokens")
    return np.arange(joints) * (num_tokens - 1) / (joints - 1)


def even_weights(num_tokens: int, joints: int, mode: str = "linear") -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """``(lo, hi, w)`` such that token_j = (1 - w_j) * flat[lo_j] + w_j * flat[hi_j]."""
    pos = even_positions(num_tokens, joints)
    if mode == "nearest":
        near = np.floor(pos + 0.5).astype(np.int64)
        return near, near, np.zeros_like(pos)
    if mode != "linear":
        raise ValueError(f"unknown even-sampling mode {mode!r}")
    lo = np.floor(pos).astype(np.int64)
    hi = np.minimum(lo + 1, num_tokens - 1)
    return lo, hi, pos - lo


def even_sample(grid: TokenGrid, persons: int, joints: int, mode: str = "linear") -> SampledTokens:
    lo, hi, w = even_weights(grid.num_tokens, joints, mode)
    flat = grid.flat()
    per_frame = flat[:, lo] * (1.0 - w)[None, :, None] + flat[:, hi] * w[None, :, None]
    data = np.repeat(per_frame[:, None], persons, axis=1)
    near = np.where(w < 0.5, lo, hi)
    idx = np.broadcast_to(near, (grid.frames, persons, joints)).copy()
    return SampledTokens(data.astype(grid.data.dtype, copy=False), idx, "even")


def extend_persons(tokens: SampledTokens, target: int, mode: str = "zero-pad") -> SampledTokens:
    m = tokens.data.shape[1]
    if target < m:
        raise ValueError(f"cannot shrink persons from {m} to {target}")
    if target == m:
        return tokens
    if mode == "zero-pad":
        pad = [(0, 0), (0, target - m)] + [(0, 0)] * (tokens.data.ndim - 2)
        data = np.pad(tokens.data, pad)
        idx = np.pad(tokens.indices, pad[:3])
    elif mode == "replicate":
        order = np.arange(target) % m
        data, idx = tokens.data[:, order], tokens.indices[:, order]
    else:
        raise ValueError(f"unknown person extension mode {mode!r}")
    return SampledTokens(data, idx, tokens.strategy)
