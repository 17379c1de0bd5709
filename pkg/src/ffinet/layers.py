"""Parameter containers shared by the spectral blocks and the model."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Iterator

import numpy as np

from . import tensor as tc
from .tensor import Tensor


@dataclass
class Conv:
    weight: Tensor
    bias: Tensor | None
    stride: int = 1
    padding: int = 0
    groups: int = 1
    transposed: bool = False
    output_padding: int = 0

    def __call__(self, x: Tensor) -> Tensor:
        if self.transposed:
            return tc.conv_transpose2d(x, self.weight, self.bias, self.stride, self.padding,
                                       self.output_padding, self.groups)
        return tc.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


@dataclass
class GroupNorm:
    gamma: Tensor
    beta: Tensor
    num_groups: int
    eps: float = 1e-5

    def __call__(self, x: Tensor) -> Tensor:
        return tc.group_norm(x, self.num_groups, self.gamma, self.beta, self.eps)


@dataclass
class ConvBlock:
    """conv -> optional GN -> optional leaky ReLU (``slope=None`` skips it)."""

    conv: Conv
    norm: GroupNorm | None
    slope: float | None

    def __call__(self, x: Tensor) -> Tensor:
        return activate(self.norm, self.conv(x), self.slope)


def activate(norm: GroupNorm | None, x: Tensor, slope: float | None) -> Tensor:
    if norm is not None:
        x = norm(x)
    if slope is not None:
        x = tc.leaky_relu(x, slope)
    return x


def named_parameters(obj, prefix: str = "") -> Iterator[tuple[str, Tensor]]:
    """Yield ``(dotted_name, tensor)`` for every Tensor reachable through dataclass fields and lists."""
    if isinstance(obj, Tensor):
        yield prefix, obj
    elif dataclasses.is_dataclass(obj):
        for f in dataclasses.fields(obj):
            name = f"{prefix}.{f.name}" if prefix else f.name
            yield from named_parameters(getattr(obj, f.name), name)
    elif isinstance(obj, (list, tuple)):
        for i, item in enumerate(obj):
            name = f"{prefix}.{i}" if prefix else str(i)
            yield from named_parameters(item, name)


def parameters(obj) -> list[Tensor]:
    return [t for _, t in named_parameters(obj)]


def count_parameters(obj) -> int:
    return sum(t.size for t in parameters(obj))


class ParamFactory:
    """Deterministic parameter construction.

    Conv weights are drawn from ``U(-b, b)`` with ``b = 1/sqrt(fan_in)``,
    biases start at zero, GN gamma at one and beta at zero. ``gn_groups`` is
    reduced to ``gcd(gn_groups, channels)`` so any width stays normalisable.
    """

    def __init__(self, seed: int, dtype=np.float32, gn_groups: int = 2, slope: float = 0.2):
        self.rng = np.random.default_rng(seed)
        self.dtype = np.dtype(dtype)
        self.gn_groups = gn_groups
        self.slope = slope

    def _param(self, arr) -> Tensor:
        return Tensor(np.asarray(arr, dtype=self.dtype), requires_grad=True)

    def conv(self, cin: int, cout: int, k: int, stride: int = 1, padding: int | None = None,
             groups: int = 1, transposed: bool = False, output_padding: int = 0) -> Conv:
        if padding is None:
            padding = k // 2
        shape = (cin, cout // groups, k, k) if transposed else (cout, cin // groups, k, k)
        bound = 1.0 / math.sqrt(shape[1] * k * k)
        weight = self._param(self.rng.uniform(-bound, bound, size=shape))
        bias = self._param(np.zeros(cout))
        return Conv(weight, bias, stride, padding, groups, transposed, output_padding)

    def norm(self, channels: int) -> GroupNorm:
        return GroupNorm(self._param(np.ones(channels)), self._param(np.zeros(channels)),
                         math.gcd(self.gn_groups, channels))

    def block(self, cin: int, cout: int, k: int, **conv_kw) -> ConvBlock:
        return ConvBlock(self.conv(cin, cout, k, **conv_kw), self.norm(cout), self.slope)
