"""Bidirectional agent cross attention between LiDAR and radar BEV maps.

Each direction pools its own queries into ``l = h*w`` agent tokens, lets the
agents attend over the other sensor's keys/values (first hop), then lets every
query attend over the agents (second hop). Cost is linear in ``L = H*W``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, as_tensor, concat, softmax
from . import functional as F
from .layers import Conv2d, Linear, Module


def sinusoidal_pe(c: int, h: int, w: int) -> np.ndarray:
    """Fixed 2-D sine/cosine encoding; first ``c//2`` channels encode rows, the rest columns."""
    pe = np.zeros((c, h, w))
    ch = c // 2
    for offset, d, n, axis in ((0, ch, h, 0), (ch, c - ch, w, 1)):
        pos = np.arange(n, dtype=np.float64)
        for i in range(d):
            div = 10000.0 ** (2 * (i // 2) / max(d, 1))
            v = np.sin(pos / div) if i % 2 == 0 else np.cos(pos / div)
            pe[offset + i] = v[:, None] if axis == 0 else v[None, :]
    return pe


@dataclass
class AgentTriple:
    Q: Tensor  # (..., C, H, W)
    K: Tensor  # (..., C, L)
    V: Tensor  # (..., C, L)
    A: Tensor  # (..., C, l)


class SensorProjections(Module):
    def __init__(self, c: int, rng: np.random.Generator):
        self.q = Linear(c, c, rng)
        self.k = Linear(c, c, rng)
        self.v = Linear(c, c, rng)


class BacaParams(Module):
    """Six C x C projections plus agent size and switches.

    ``merge`` is ``"sum"`` (``lr = f_lg + f_rm``) or ``"concat"`` (1x1 conv
    over the channel concatenation).
    """

    def __init__(self, c: int, rng: np.random.Generator, agent_size=(12, 12),
                 use_pe: bool = True, merge: str = "sum"):
        self.channels = c
        self.lidar = SensorProjections(c, rng)
        self.radar = SensorProjections(c, rng)
        self.agent_size = tuple(agent_size)
        self.use_pe = use_pe
        if merge not in ("sum", "concat"):
            raise ValueError(f"unknown merge {merge!r}")
        self.merge = merge
        self.merge_conv = Conv2d(2 * c, c, 1, rng) if merge == "concat" else None

    def swapped(self) -> "BacaParams":
        """Same weights with the sensor roles exchanged."""
        other = object.__new__(BacaParams)
        other.__dict__.update(self.__dict__)
        other.lidar, other.radar = self.radar, self.lidar
        return other


def make_qkv(fmap: Tensor, proj: SensorProjections, agent_size, use_pe: bool = True) -> AgentTriple:
    fmap = as_tensor(fmap)
    c, h, w = fmap.shape[-3:]
    if proj.q.weight.shape != (c, c):
        raise ValueError(f"projection width {proj.q.weight.shape} does not match map channels {c}")
    ah, aw = agent_size
    if ah * aw >= h * w or ah > h or aw > w:
        raise ValueError(f"agent size {agent_size} must be smaller than the map {h}x{w}")
    x = fmap + Tensor(sinusoidal_pe(c, h, w)) if use_pe else fmap
    ax = x.ndim - 3
    Q = proj.q(x, channel_axis=ax)
    lead = x.shape[:-3]
    K = proj.k(x, channel_axis=ax).reshape(lead + (c, h * w))
    V = proj.v(x, channel_axis=ax).reshape(lead + (c, h * w))
    A = F.adaptive_avg_pool(Q, (ah, aw)).reshape(lead + (c, ah * aw))
    return AgentTriple(Q, K, V, A)


def agent_attend(Q: Tensor, A: Tensor, K: Tensor, V: Tensor, return_context: bool = False):
    """Two-hop attention of ``Q`` through agents ``A`` over ``(K, V)``.

    Returns the ``(..., C, H, W)`` output, and the ``(..., C, l)`` agent
    context when ``return_context`` is set.
    """
    c, h, w = Q.shape[-3:]
    if A.shape[-2] != c or K.shape[-2] != c or V.shape != K.shape:
        raise ValueError(f"agent_attend: inconsistent shapes Q{Q.shape} A{A.shape} K{K.shape} V{V.shape}")
    scale = 1.0 / math.sqrt(c)
    lead = Q.shape[:-3]
    At = A.swapaxes(-1, -2)  # l x C
    ctx = softmax((At @ K) * scale, axis=-1) @ V.swapaxes(-1, -2)  # l x C
    Qt = Q.reshape(lead + (c, h * w)).swapaxes(-1, -2)  # L x C
    out = softmax((Qt @ A) * scale, axis=-1) @ ctx  # L x C
    out = out.swapaxes(-1, -2).reshape(lead + (c, h, w))
    if return_context:
        return out, ctx.swapaxes(-1, -2)
    return out


def baca_forward(f_l: Tensor, f_r: Tensor, params: BacaParams, return_parts: bool = False):
    """Fused map ``lr`` from same-shaped LiDAR and radar maps."""
    f_l, f_r = as_tensor(f_l), as_tensor(f_r)
    if f_l.shape != f_r.shape:
        raise ValueError(f"sensor maps differ in shape: {f_l.shape} vs {f_r.shape}")
    tl = make_qkv(f_l, params.lidar, params.agent_size, params.use_pe)
    tr = make_qkv(f_r, params.radar, params.agent_size, params.use_pe)
    f_lg, f_lc = agent_attend(tl.Q, tl.A, tr.K, tr.V, return_context=True)
    f_rm, f_rc = agent_attend(tr.Q, tr.A, tl.K, tl.V, return_context=True)
    if params.merge == "sum":
        lr = f_lg + f_rm
    else:
        lr = params.merge_conv(concat([f_lg, f_rm], axis=-3))
    if return_parts:
        return lr, {"f_lg": f_lg, "f_rm": f_rm, "f_lc": f_lc, "f_rc": f_rc}
    return lr
