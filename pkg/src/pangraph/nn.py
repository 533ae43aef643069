"""Minimal module system: parameter registration, naming, train/eval state."""
from __future__ import annotations

from typing import Iterator

import numpy as np

from . import tensor as T
from .rng import Rng
from .tensor import Parameter, Tensor


class Module:
    training: bool = True

    def forward(self, *args, **kwargs):
        raise NotImplementedError

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def _children(self) -> Iterator[tuple[str, object]]:
        for key, value in vars(self).items():
            if isinstance(value, (Parameter, Module)):
                yield key, value
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, (Parameter, Module)):
                        yield f"{key}.{i}", item

    def named_parameters(self, prefix: str = "") -> Iterator[tuple[str, Parameter]]:
        for key, value in self._children():
            name = f"{prefix}{key}"
            if isinstance(value, Parameter):
                value.name = name
                yield name, value
            else:
                yield from value.named_parameters(name + ".")

    def parameters(self) -> list[Parameter]:
        return [p for _, p in self.named_parameters()]

    def modules(self) -> Iterator["Module"]:
        yield self
        for _, value in self._children():
            if isinstance(value, Module):
                yield from value.modules()

    def named_buffers(self, prefix: str = "") -> Iterator[tuple[str, np.ndarray]]:
        for key, value in getattr(self, "buffers", {}).items():
            yield f"{prefix}{key}", value
        for key, value in self._children():
            if isinstance(value, Module):
                yield from value.named_buffers(f"{prefix}{key}.")

    def num_parameters(self) -> int:
        return sum(p.size for p in self.parameters())

    def train(self, mode: bool = True) -> "Module":
        for m in self.modules():
            m.training = mode
        return self

    def eval(self) -> "Module":
        return self.train(False)

    def zero_grad(self) -> None:
        for p in self.parameters():
            p.zero_grad()

    def state_dict(self) -> dict[str, np.ndarray]:
        state = {name: p.data.copy() for name, p in self.named_parameters()}
        state.update({name: b.copy() for name, b in self.named_buffers()})
        return state

    def load_state_dict(self, state: dict[str, np.ndarray]) -> None:
        params = dict(self.named_parameters())
        buffers = dict(self.named_buffers())
        missing = (set(params) | set(buffers)) - set(state)
        unexpected = set(state) - set(params) - set(buffers)
        if missing or unexpected:
            raise KeyError(f"state mismatch: missing={sorted(missing)} unexpected={sorted(unexpected)}")
        for name, p in params.items():
            if state[name].shape != p.shape:
                raise T.ShapeError(f"{name}: stored dims {list(state[name].shape)} != {p.dims}")
            p.data[...] = state[name]
        for name, b in buffers.items():
            b[...] = state[name]

    def astype(self, dtype) -> "Module":
        for p in self.parameters():
            p.data = p.data.astype(dtype)
            p.grad = np.zeros_like(p.data)
        for m in self.modules():
            for key, b in getattr(m, "buffers", {}).items():
                m.buffers[key] = b.astype(dtype)
        return self


def kaiming_normal(rng: Rng, fan: int, shape, dtype) -> np.ndarray:
    return rng.normal(shape, scale=np.sqrt(2.0 / fan), dtype=dtype)


class Linear(Module):
    """1x1 channel projection (no spatial or temporal extent)."""

    def __init__(self, c_in: int, c_out: int, rng: Rng, *, bias: bool = True, dtype=np.float32):
        self.weight = Parameter(kaiming_normal(rng, c_out, (c_in, c_out), dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype), decay=True) if bias else None

    def forward(self, x: Tensor) -> Tensor:
        return T.linear(x, self.weight, self.bias)


class BatchNorm(Module):
    def __init__(self, channels: int, *, init_scale: float = 1.0, momentum: float = 0.9,
                 eps: float = 1e-5, dtype=np.float32):
        self.gamma = Parameter(np.full(channels, init_scale, dtype=dtype), decay=False)
        self.beta = Parameter(np.zeros(channels, dtype=dtype), decay=False)
        self.buffers = {"running_mean": np.zeros(channels, dtype=dtype),
                        "running_var": np.ones(channels, dtype=dtype)}
        self.momentum = momentum
        self.eps = eps

    def forward(self, x: Tensor) -> Tensor:
        return T.batch_norm(x, self.gamma, self.beta, self.buffers["running_mean"],
                            self.buffers["running_var"], training=self.training,
                            momentum=self.momentum, eps=self.eps)


class TemporalConv(Module):
    def __init__(self, c_in: int, c_out: int, rng: Rng, *, kernel: int = 5, dilation: int = 1,
                 stride: int = 1, dtype=np.float32):
        self.weight = Parameter(kaiming_normal(rng, c_out * kernel, (kernel * c_in, c_out), dtype))
        self.bias = Parameter(np.zeros(c_out, dtype=dtype))
        self.kernel, self.dilation, self.stride = kernel, dilation, stride
        self.pad_mode = "zeros"

    def forward(self, x: Tensor) -> Tensor:
        return T.conv_temporal(x, self.weight, self.bias, kernel=self.kernel,
                               dilation=self.dilation, stride=self.stride, pad_mode=self.pad_mode)


def set_pad_mode(module: Module, mode: str) -> None:
    """Switch every temporal op under ``module`` between zero and circular padding."""
    for m in module.modules():
        if hasattr(m, "pad_mode"):
            m.pad_mode = mode
