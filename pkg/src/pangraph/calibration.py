"""Cross-attention refinement of sampled tokens against the full token grid."""
from __future__ import annotations

import math

import numpy as np

from . import tensor as T
from .nn import Module
from .rng import Rng
from .sampling import SampledTokens, TokenGrid
from .tensor import Parameter, Tensor


class PostCalibration(Module):
    """Multi-head cross-attention, sampled tokens as queries, grid tokens as keys/values.

    Output per frame: ``concat_h(softmax(Q_h K_h^T / s) V_h) + O W_res`` where
    heads are column groups of the single ``C x C_R`` projections, and ``s`` is
    ``sqrt(d_h)`` (``scale="head"``) or ``sqrt(C_R)`` (``scale="full"``).
    No projection carries a bias, so the module holds exactly ``4 * C * C_R``
    parameters.
    """

    def __init__(self, c: int, c_r: int, heads: int, rng: Rng, *, scale: str = "head",
                 dtype=np.float32):
        if c_r % heads:
            raise ValueError(f"{heads} heads do not divide C_R = {c_r}")
        if scale not in ("head", "full"):
            raise ValueError(f"unknown attention scale {scale!r}")
        self.c, self.c_r, self.heads = c, c_r, heads
        self.head_dim = c_r // heads
        self.scale = 1.0 / math.sqrt(self.head_dim if scale == "head" else c_r)
        std = 1.0 / math.sqrt(c)
        self.w_q = Parameter(rng.child("q").normal((c, c_r), std, dtype))
        self.w_k = Parameter(rng.child("k").normal((c, c_r), std, dtype))
        self.w_v = Parameter(rng.child("v").normal((c, c_r), std, dtype))
        self.w_res = Parameter(rng.child("res").normal((c, c_r), std, dtype))

    def _check(self, grid: Tensor, sampled: Tensor) -> None:
        if grid.ndim != 4 or sampled.ndim != 4:
            raise T.ShapeError(f"expected (N, T, tokens, C) inputs, got {grid.dims} and {sampled.dims}")
        if grid.shape[:2] != sampled.shape[:2]:
            raise T.ShapeError(f"batch/frame mismatch: grid {grid.dims} vs sampled {sampled.dims}")
        if grid.shape[-1] != self.c or sampled.shape[-1] != self.c:
            raise T.ShapeError(f"channel mismatch: module expects C={self.c}, got grid {grid.dims}, "
                               f"sampled {sampled.dims}")

    def _split_heads(self, x: Tensor) -> Tensor:
        n, t, k, _ = x.shape
        return T.permute(T.reshape(x, (n, t, k, self.heads, self.head_dim)), (0, 1, 3, 2, 4))

    def attention(self, grid: Tensor, sampled: Tensor) -> Tensor:
        """Post-softmax maps ``(N, T, heads, queries, keys)``."""
        self._check(grid, sampled)
        q = self._split_heads(T.linear(sampled, self.w_q))
        k = self._split_heads(T.linear(grid, self.w_k))
        logits = T.matmul(q, T.permute(k, (0, 1, 2, 4, 3))) * self.scale
        return T.softmax(logits, axis=-1)

    def forward(self, grid: Tensor, sampled: Tensor) -> Tensor:
        """``grid (N, T, G, C)`` and ``sampled (N, T, Q, C)`` -> ``(N, T, Q, C_R)``."""
        attn = self.attention(grid, sampled)
        v = self._split_heads(T.linear(grid, self.w_v))
        n, t, q = sampled.shape[:3]
        mixed = T.reshape(T.permute(T.matmul(attn, v), (0, 1, 3, 2, 4)), (n, t, q, self.c_r))
        return mixed + T.linear(sampled, self.w_res)


def calibrate(grid: TokenGrid, sampled: SampledTokens, module: PostCalibration) -> np.ndarray:
    """Single-sample convenience wrapper returning ``(T, M, J, C_R)``."""
    t, m, j, c = sampled.data.shape
    if grid.frames != t:
        raise T.ShapeError(f"frame mismatch: grid has {grid.frames}, sampled tokens have {t}")
    g = Tensor(grid.flat()[None].astype(module.w_q.dtype))
    o = Tensor(sampled.data.reshape(1, t, m * j, c).astype(module.w_q.dtype))
    return module(g, o).data.reshape(t, m, j, module.c_r)


def attention_maps(grid: TokenGrid, sampled: SampledTokens, module: PostCalibration) -> np.ndarray:
    """``(T, heads, M*J, Gh*Gw)`` post-softmax maps for one sample."""
    t, m, j, c = sampled.data.shape
    g = Tensor(grid.flat()[None].astype(module.w_q.dtype))
    o = Tensor(sampled.data.reshape(1, t, m * j, c).astype(module.w_q.dtype))
    return module.attention(g, o).data[0]
