"""Dynamic gated graph fusion of text and fused point-cloud features.

The text feature gates the fused map channelwise; a graph convolution then
connects each cell to cells ``m*K`` rows below / columns right (circularly)
only when their feature distance falls below ``mu - sigma``, where the
distance statistics are estimated from the two diagonal quadrant pairings.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, _node, as_tensor, concat, gelu, sigmoid
from . import functional as F
from . import kernels
from .layers import Conv2d, Linear, Module


@dataclass(frozen=True)
class GraphStats:
    """Per-sample distance statistics; ``mu``/``sigma`` have the batch shape."""

    mu: np.ndarray
    sigma: np.ndarray
    n_pairs: int

    @property
    def threshold(self) -> np.ndarray:
        return self.mu - self.sigma


def _as_batch(x: np.ndarray) -> np.ndarray:
    return x[None] if x.ndim == 3 else x


def quadrant_distances(X) -> np.ndarray:
    """Channelwise Euclidean distances between TL<->BR and TR<->BL at equal in-quadrant index.

    Returns ``(N, H*W/2)`` distances (odd extents are edge-padded first).
    """
    x = _as_batch(np.asarray(X.data if isinstance(X, Tensor) else X, dtype=np.float64))
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        x = np.pad(x, ((0, 0), (0, 0), (0, h % 2), (0, w % 2)), mode="edge")
        h, w = x.shape[-2:]
    hh, hw = h // 2, w // 2
    tl, tr = x[..., :hh, :hw], x[..., :hh, hw:]
    bl, br = x[..., hh:, :hw], x[..., hh:, hw:]
    d1 = np.sqrt(((tl - br) ** 2).sum(axis=1)).reshape(n, -1)
    d2 = np.sqrt(((tr - bl) ** 2).sum(axis=1)).reshape(n, -1)
    return np.concatenate([d1, d2], axis=1)


def estimate_stats(X) -> GraphStats:
    """Mean and population std of the diagonal-quadrant distance sample."""
    single = (X.ndim if isinstance(X, Tensor) else np.ndim(X)) == 3
    d = quadrant_distances(X)
    mu, sigma = d.mean(axis=1), d.std(axis=1)
    if single:
        mu, sigma = mu[0], sigma[0]
    return GraphStats(np.asarray(mu), np.asarray(sigma), d.shape[1])


def max_relative(X: Tensor, threshold, step: int) -> tuple[Tensor, np.ndarray]:
    """Masked max-relative aggregation over axial rolls (differentiable in ``X``).

    Returns ``(X_final, masks)`` with masks shaped ``(N, R, H, W)`` for the
    roll schedule of :func:`pcground.kernels.roll_schedule`.
    """
    X = as_tensor(X)
    single = X.ndim == 3
    xd = X.data[None] if single else X.data
    n, c, h, w = xd.shape
    if not 1 <= step < min(h, w):
        raise ValueError(f"step {step} must satisfy 1 <= K < min(H, W) = {min(h, w)}")
    tau = np.broadcast_to(np.asarray(threshold, dtype=np.float64), (n,)).copy()
    final, arg, masks = kernels.axial_max_relative(np.ascontiguousarray(xd), tau, step)
    rolls = kernels.roll_schedule(h, w, step)

    def back(g):
        g = g[None] if single else g
        gx = -np.where(arg >= 0, g, 0.0)
        for r, (axis, shift) in enumerate(rolls):
            hit = arg == r
            if hit.any():
                gx += np.roll(np.where(hit, g, 0.0), -shift, axis=2 + axis)
        return (gx[0] if single else gx,)

    out = _node(final[0] if single else final, (X,), back, "max_relative")
    return out, (masks[0] if single else masks)


class TextGate(Module):
    """Sigmoid channel gate from pooled text, applied to ``lr + CPE(lr)``."""

    def __init__(self, c_text: int, c: int, rng: np.random.Generator, pool: str = "max"):
        if pool not in ("max", "avg"):
            raise ValueError(f"unknown gate pooling {pool!r}")
        self.pool = pool
        self.proj = Linear(c_text, c, rng)
        self.cpe = Conv2d(c, c, 3, rng, depthwise=True, zero_init=True)

    def pooled(self, f_t: Tensor) -> Tensor:
        return f_t.max(axis=-1) if self.pool == "max" else f_t.mean(axis=-1)

    def gate(self, f_t: Tensor) -> Tensor:
        s = self.pooled(as_tensor(f_t))
        return sigmoid(self.proj(s, channel_axis=s.ndim - 1))


def text_gate(f_t: Tensor, lr: Tensor, gate: TextGate) -> Tensor:
    lr = as_tensor(lr)
    W_G = gate.gate(f_t)
    c = lr.shape[-3]
    if W_G.shape[-1] != c:
        raise ValueError(f"gate width {W_G.shape[-1]} does not match map channels {c}")
    W_G = W_G.reshape(W_G.shape + (1, 1))
    return W_G * (lr + gate.cpe(lr))


class DynGraphConv(Module):
    """Axial dynamic graph aggregation followed by a 1x1 conv over concat(X, X_final)."""

    def __init__(self, c: int, c_out: int, step: int, rng: np.random.Generator,
                 mode: str = "dynamic"):
        if mode not in ("dynamic", "static"):
            raise ValueError(f"unknown graph mode {mode!r}")
        self.step = step
        self.mode = mode
        self.fuse = Conv2d(2 * c, c_out, 1, rng)

    def aggregate(self, X: Tensor) -> tuple[Tensor, np.ndarray, GraphStats]:
        stats = estimate_stats(X)
        tau = np.inf if self.mode == "static" else stats.threshold
        xf, masks = max_relative(X, tau, self.step)
        return xf, masks, stats

    def forward(self, X: Tensor) -> Tensor:
        X = as_tensor(X)
        xf, _, _ = self.aggregate(X)
        return self.fuse(concat([X, xf], axis=-3))


def dyn_conv(X: Tensor, stats: GraphStats, step: int, fuse: Conv2d,
             static: bool = False) -> Tensor:
    """Functional form with externally supplied statistics."""
    X = as_tensor(X)
    tau = np.inf if static else stats.threshold
    xf, _ = max_relative(X, tau, step)
    return fuse(concat([X, xf], axis=-3))


class DGGFBlock(Module):
    """``lc = GeLU(DynConv(gate(f_t, lr)) W_in) W_out + lr``."""

    def __init__(self, c_text: int, c: int, step: int, rng: np.random.Generator,
                 pool: str = "max", graph_mode: str = "dynamic", hidden: int | None = None):
        hidden = hidden or c
        self.gate = TextGate(c_text, c, rng, pool)
        self.graph = DynGraphConv(c, c, step, rng, graph_mode)
        self.w_in = Linear(c, hidden, rng)
        self.w_out = Linear(hidden, c, rng)

    def forward(self, f_t: Tensor, lr: Tensor) -> Tensor:
        return dggf_forward(f_t, lr, self)


def dggf_forward(f_t: Tensor, lr: Tensor, block: DGGFBlock) -> Tensor:
    lr = as_tensor(lr)
    x = text_gate(f_t, lr, block.gate)
    g = block.graph(x)
    ax = g.ndim - 3
    hidden = gelu(block.w_in(g, channel_axis=ax))
    return block.w_out(hidden, channel_axis=ax) + lr
