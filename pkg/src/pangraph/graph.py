"""Spatiotemporal graph convolution blocks over joint-indexed node features.

Node features are ``Tensor (N, T, J, C)``; persons are folded into ``N``.
"""
from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path

import numpy as np

from . import tensor as T
from .nn import BatchNorm, Linear, Module, TemporalConv
from .rng import Rng
from .tensor import Parameter, Tensor

GROUPS = 3
VARIANTS = ("full", "no-gc", "no-tc")


@dataclass
class AdjacencyTopology:
    num_joints: int
    edges: list[tuple[int, int]]

    def __post_init__(self):
        for i, j in self.edges:
            if not (0 <= i < self.num_joints and 0 <= j < self.num_joints):
                raise ValueError(f"edge ({i}, {j}) outside 0..{self.num_joints - 1}")
            if i == j:
                raise ValueError(f"self-loop edge ({i}, {j}) in topology")

    @property
    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.num_joints, self.num_joints))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    @property
    def normalized(self) -> np.ndarray:
        return normalize_adjacency(self.adjacency)

    def permuted(self, perm: np.ndarray) -> "AdjacencyTopology":
        """Relabel so that new joint ``k`` is old joint ``perm[k]``."""
        inv = np.argsort(perm)
        return AdjacencyTopology(self.num_joints, [(int(inv[i]), int(inv[j])) for i, j in self.edges])


def parse_topology(text: str, num_joints: int | None = None) -> AdjacencyTopology:
    """Parse ``i j`` edge lines (0-based); ``#`` starts a comment."""
    edges = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ValueError(f"line {lineno}: expected 'i j', got {line!r}")
        edges.append((int(parts[0]), int(parts[1])))
    if num_joints is None:
        num_joints = 1 + max((max(e) for e in edges), default=-1)
    return AdjacencyTopology(num_joints, edges)


def load_topology(name_or_path: str, num_joints: int | None = None) -> AdjacencyTopology:
    """Load a shipped topology (``coco17``, ``ntu25``) or an edge-list file.

    ``chain<J>`` builds a path graph, handy for arbitrary joint counts.
    """
    if name_or_path.startswith("chain"):
        j = int(name_or_path[5:])
        return AdjacencyTopology(j, [(i, i + 1) for i in range(j - 1)])
    shipped = resources.files("pangraph") / "topologies" / f"{name_or_path}.txt"
    if shipped.is_file():
        text = shipped.read_text()
    else:
        text = Path(name_or_path).read_text()
    return parse_topology(text, num_joints)


def normalize_adjacency(a: np.ndarray) -> np.ndarray:
    """``D^-1/2 (A + I) D^-1/2`` for a symmetric binary ``A``."""
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2 or a.shape[0] != a.shape[1] or not np.array_equal(a, a.T):
        raise ValueError("adjacency must be a symmetric square matrix")
    a_hat = a + np.eye(len(a))
    d = 1.0 / np.sqrt(a_hat.sum(axis=1))
    return a_hat * d[:, None] * d[None, :]


def graph_mix(x: Tensor, adj) -> Tensor:
    """Shared-topology aggregation ``out[.., u, c] = sum_v adj[u, v] x[.., v, c]``."""
    return T.matmul(T.as_tensor(adj, x.dtype), x)


def vanilla_gc(h: Tensor, a_hat, weight: Tensor, activation=T.relu) -> Tensor:
    out = T.linear(graph_mix(h, a_hat), weight)
    return activation(out) if activation is not None else out


class CtrGc(Module):
    """One channel-wise topology refinement group.

    The refined topology is ``lam * xi(tanh(psi(h) - phi(h))) + A_tilde`` per
    output channel, where psi/phi see the temporal mean of the input.
    """

    def __init__(self, c_in: int, c_out: int, adjacency: np.ndarray, rng: Rng, dtype=np.float32,
                 rel_reduction: int = 8):
        rel = max(c_in // rel_reduction, 1)
        self.psi = Linear(c_in, rel, rng.child("psi"), dtype=dtype)
        self.phi = Linear(c_in, rel, rng.child("phi"), dtype=dtype)
        self.xi = Linear(rel, c_out, rng.child("xi"), dtype=dtype)
        self.value = Linear(c_in, c_out, rng.child("value"), dtype=dtype)
        self.topology = Parameter(np.asarray(adjacency, dtype=dtype), decay=False)

    def correlations(self, h: Tensor) -> Tensor:
        """Pairwise ``tanh(psi(h_u) - phi(h_v))`` as ``(N, J, J, d')``."""
        n, _, j, _ = h.shape
        pooled = T.mean(h, axis=1)
        q = T.reshape(self.psi(pooled), (n, j, 1, -1))
        k = T.reshape(self.phi(pooled), (n, 1, j, -1))
        return T.tanh(q - k)

    def refined_topology(self, h: Tensor, lam: Tensor) -> Tensor:
        """Per-sample, per-channel adjacency ``(N, J, J, C_out)``."""
        j = h.shape[2]
        return self.xi(self.correlations(h)) * lam + T.reshape(self.topology, (j, j, 1))

    def static_topology(self, h: Tensor, c_out: int) -> Tensor:
        """``A_tilde`` alone, laid out like :meth:`refined_topology`."""
        n, _, j, _ = h.shape
        ones = Tensor(np.ones((n, 1, 1, c_out), dtype=self.topology.dtype))
        return ones * T.reshape(self.topology, (j, j, 1))

    def forward(self, h: Tensor, lam: Tensor | None) -> Tensor:
        """``lam=None`` mixes with the shared topology only (no refinement)."""
        c_out = self.value.weight.shape[1]
        adj = self.static_topology(h, c_out) if lam is None else self.refined_topology(h, lam)
        adj = T.permute(adj, (0, 3, 1, 2))                               # N, C, J, J
        v = T.permute(self.value(h), (0, 3, 2, 1))                       # N, C, J, T
        return T.permute(T.matmul(adj, v), (0, 3, 2, 1))


class GraphConv(Module):
    """``down(h) + relu(bn(sum_g CtrGc_g(h)))``; ``no-gc`` swaps the sum for a per-node 1x1."""

    def __init__(self, c_in: int, c_out: int, adjacency: np.ndarray, rng: Rng, *,
                 variant: str = "full", dtype=np.float32):
        self.variant = variant
        if variant == "no-gc":
            self.proj = Linear(c_in, c_out, rng.child("proj"), dtype=dtype)
            self.groups = []
            self.lam = None
        else:
            self.groups = [CtrGc(c_in, c_out, adjacency, rng.child(f"group{g}"), dtype=dtype)
                           for g in range(GROUPS)]
            self.lam = Parameter(np.zeros(1, dtype=dtype), decay=False)
        self.bn = BatchNorm(c_out, init_scale=1e-6, dtype=dtype)
        if c_in != c_out:
            self.down = Linear(c_in, c_out, rng.child("down"), dtype=dtype)
            self.down_bn = BatchNorm(c_out, dtype=dtype)
        else:
            self.down = self.down_bn = None

    def aggregate(self, h: Tensor) -> Tensor:
        if self.variant == "no-gc":
            return self.proj(h)
        out = self.groups[0](h, self.lam)
        for g in self.groups[1:]:
            out = out + g(h, self.lam)
        return out

    def forward(self, h: Tensor) -> Tensor:
        shortcut = h if self.down is None else self.down_bn(self.down(h))
        return shortcut + T.relu(self.bn(self.aggregate(h)))


class MaxPoolT(Module):
    def __init__(self, kernel: int = 3, stride: int = 1):
        self.kernel, self.stride = kernel, stride
        self.pad_mode = "zeros"

    def forward(self, x: Tensor) -> Tensor:
        return T.max_pool_temporal(x, self.kernel, self.stride, self.pad_mode)


class DilatedBranch(Module):
    def __init__(self, channels: int, width: int, rng: Rng, *, kernel: int, dilation: int,
                 stride: int, dtype=np.float32):
        self.proj = Linear(channels, width, rng.child("in"), dtype=dtype)
        self.bn = BatchNorm(width, dtype=dtype)
        self.conv = TemporalConv(width, width, rng.child("conv"), kernel=kernel, dilation=dilation,
                                 stride=stride, dtype=dtype)
        self.bn_out = BatchNorm(width, dtype=dtype)

    def forward(self, h: Tensor) -> Tensor:
        return self.bn_out(self.conv(T.relu(self.bn(self.proj(h)))))


class MsTc(Module):
    """Four temporal branches (dilated convs, max-pool, plain 1x1), concatenated."""

    def __init__(self, channels: int, rng: Rng, *, stride: int = 1, kernel: int = 5,
                 dilations: tuple[int, ...] = (1, 2), dtype=np.float32):
        branches = len(dilations) + 2
        if channels % branches:
            raise ValueError(f"MS-TC channels {channels} not divisible by {branches} branches")
        bc = channels // branches
        self.stride = stride
        self.convs = [DilatedBranch(channels, bc, rng.child(f"dil{d}"), kernel=kernel, dilation=d,
                                    stride=stride, dtype=dtype) for d in dilations]
        self.pool_in = Linear(channels, bc, rng.child("pool_in"), dtype=dtype)
        self.pool_bn = BatchNorm(bc, dtype=dtype)
        self.pool = MaxPoolT(3, stride)
        self.pool_out_bn = BatchNorm(bc, dtype=dtype)
        self.point = Linear(channels, bc, rng.child("point"), dtype=dtype)
        self.point_bn = BatchNorm(bc, dtype=dtype)

    def output_bns(self) -> list[BatchNorm]:
        return [c.bn_out for c in self.convs] + [self.pool_out_bn, self.point_bn]

    def forward(self, h: Tensor) -> Tensor:
        outs = [branch(h) for branch in self.convs]
        outs.append(self.pool_out_bn(self.pool(T.relu(self.pool_bn(self.pool_in(h))))))
        sub = h if self.stride == 1 else h[:, ::self.stride]
        outs.append(self.point_bn(self.point(sub)))
        return T.concat(outs, axis=-1)


class TemporalPool(Module):
    """``no-tc`` stand-in: temporal mean followed by a 1x1 projection."""

    def __init__(self, channels: int, rng: Rng, dtype=np.float32):
        self.proj = Linear(channels, channels, rng.child("proj"), dtype=dtype)
        self.bn = BatchNorm(channels, dtype=dtype)

    def output_bns(self) -> list[BatchNorm]:
        return [self.bn]

    def forward(self, h: Tensor) -> Tensor:
        return self.bn(self.proj(T.mean(h, axis=1, keepdims=True)))


class BasicBlock(Module):
    """``h' = GraphConv(h)``; ``out = temporal(h') + residual(h)``."""

    def __init__(self, c_in: int, c_out: int, adjacency: np.ndarray, rng: Rng, *, stride: int = 1,
                 variant: str = "full", dtype=np.float32):
        if variant not in VARIANTS:
            raise ValueError(f"unknown block variant {variant!r}")
        self.c_in, self.c_out, self.stride, self.variant = c_in, c_out, stride, variant
        self.gc = GraphConv(c_in, c_out, adjacency, rng.child("gc"),
                            variant="no-gc" if variant == "no-gc" else "full", dtype=dtype)
        if variant == "no-tc":
            self.tc = TemporalPool(c_out, rng.child("tc"), dtype=dtype)
        else:
            self.tc = MsTc(c_out, rng.child("tc"), stride=stride, dtype=dtype)
        if c_in != c_out or stride != 1:
            self.res = Linear(c_in, c_out, rng.child("res"), dtype=dtype)
            self.res_bn = BatchNorm(c_out, dtype=dtype)
        else:
            self.res = self.res_bn = None

    def residual(self, h: Tensor) -> Tensor:
        if self.res is None:
            return h
        sub = h if self.stride == 1 else h[:, ::self.stride]
        return self.res_bn(self.res(sub))

    def forward(self, h: Tensor) -> Tensor:
        return self.tc(self.gc(h)) + self.residual(h)


def block_stack(channels_in: list[int], channels_out: list[int], adjacency: np.ndarray, rng: Rng, *,
                strides: list[int] | None = None, variant: str = "full", dtype=np.float32) -> list[BasicBlock]:
    strides = strides or [1] * len(channels_in)
    return [BasicBlock(ci, co, adjacency, rng.child(f"block{i}"), stride=s, variant=variant, dtype=dtype)
            for i, (ci, co, s) in enumerate(zip(channels_in, channels_out, strides))]
