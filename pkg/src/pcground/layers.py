"""Small parameter-holding layers over the functional primitives."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor
from . import functional as F


class Module:
    """Collects ``Tensor`` leaves and child modules found in attributes."""

    def parameters(self, prefix: str = "") -> dict[str, Tensor]:
        out: dict[str, Tensor] = {}
        for name, value in vars(self).items():
            key = f"{prefix}{name}"
            if isinstance(value, Tensor) and value.requires_grad:
                out[key] = value
            elif isinstance(value, Module):
                out.update(value.parameters(key + "."))
            elif isinstance(value, (list, tuple)):
                for i, item in enumerate(value):
                    if isinstance(item, Module):
                        out.update(item.parameters(f"{key}.{i}."))
        return out

    def __call__(self, *args, **kwargs):
        return self.forward(*args, **kwargs)

    def forward(self, *args, **kwargs):  # pragma: no cover - abstract
        raise NotImplementedError


class Linear(Module):
    """Channel-axis linear map ``W x + b``."""

    def __init__(self, c_in: int, c_out: int, rng: np.random.Generator, bias: bool = True,
                 channel_axis: int = 0):
        self.weight = F.init_uniform(rng, (c_out, c_in), c_in)
        self.bias = F.init_uniform(rng, (c_out,), c_in) if bias else None
        self.channel_axis = channel_axis

    def forward(self, x: Tensor, channel_axis: int | None = None) -> Tensor:
        ax = self.channel_axis if channel_axis is None else channel_axis
        return F.linear(x, self.weight, self.bias, channel_axis=ax)


class Conv2d(Module):
    def __init__(self, c_in: int, c_out: int, k: int, rng: np.random.Generator,
                 stride: int = 1, padding: int | None = None, depthwise: bool = False,
                 zero_init: bool = False):
        if k % 2 == 0:
            raise ValueError("kernel size must be odd")
        c_per = 1 if depthwise else c_in
        fan_in = c_per * k * k
        shape = (c_out, c_per, k, k)
        if zero_init:
            self.weight = Tensor(np.zeros(shape), requires_grad=True)
            self.bias = Tensor(np.zeros(c_out), requires_grad=True)
        else:
            self.weight = F.init_uniform(rng, shape, fan_in)
            self.bias = F.init_uniform(rng, (c_out,), fan_in)
        self.stride = stride
        self.padding = (k - 1) // 2 if padding is None else padding
        self.groups = c_in if depthwise else 1

    def forward(self, x: Tensor) -> Tensor:
        return F.conv2d(x, self.weight, self.bias, self.stride, self.padding, self.groups)


class GroupNorm(Module):
    def __init__(self, channels: int):
        self.gamma = Tensor(np.ones(channels), requires_grad=True)
        self.beta = Tensor(np.zeros(channels), requires_grad=True)

    def forward(self, x: Tensor) -> Tensor:
        return F.group_norm(x, self.gamma, self.beta)


def zero_biases(module: Module) -> None:
    """Set every parameter whose name ends in ``bias`` or ``beta`` to zero (in place)."""
    for name, p in module.parameters().items():
        if name.endswith("bias") or name.endswith("beta"):
            p.data[...] = 0.0
