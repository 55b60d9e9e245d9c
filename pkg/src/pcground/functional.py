"""Neural-network primitives built on :mod:`pcground.autodiff`.

Feature maps are channel-first: ``(C, H, W)`` for one sample or
``(N, C, H, W)`` for a batch. Token/vector tensors put channels on the axis
given by ``channel_axis``.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .autodiff import (
    Tensor,
    _node,
    as_tensor,
    clamp,
    concat,
    gelu,
    maximum,
    pad2d,
    repeat_nearest,
    sigmoid,
    softmax,
)
from . import kernels

__all__ = [
    "linear",
    "conv2d",
    "adaptive_pool_matrix",
    "adaptive_avg_pool",
    "group_norm",
    "softmax",
    "sigmoid",
    "gelu",
    "clamp",
    "maximum",
    "concat",
    "upsample_nearest",
    "embedding",
    "segment_max",
    "scatter_cells",
    "init_uniform",
]


def init_uniform(rng: np.random.Generator, shape: tuple, fan_in: int) -> Tensor:
    """Leaf initialised uniformly in [-1/sqrt(fan_in), 1/sqrt(fan_in)]."""
    bound = 1.0 / math.sqrt(fan_in)
    return Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True)


def linear(x: Tensor, W: Tensor, b: Tensor | None = None, channel_axis: int = 0) -> Tensor:
    """``y = W x + b`` along ``channel_axis``; other axes broadcast.

    Raises:
        ValueError: if ``W``'s input width disagrees with the channel extent.
    """
    x = as_tensor(x)
    ax = channel_axis % x.ndim
    c_in = x.shape[ax]
    if W.ndim != 2 or W.shape[1] != c_in:
        raise ValueError(
            f"linear: weight {W.shape} cannot map channel axis {ax} of input {x.shape} "
            f"(expected weight (*, {c_in}))"
        )
    if b is not None and b.shape != (W.shape[0],):
        raise ValueError(f"linear: bias {b.shape} does not match output width {W.shape[0]}")
    lead, trail = x.shape[:ax], x.shape[ax + 1:]
    if lead and not trail:
        y = x @ W.T
        return y + b if b is not None else y
    n_trail = int(np.prod(trail)) if trail else 1
    y = W @ x.reshape(lead + (c_in, n_trail))
    if b is not None:
        y = y + b.reshape((W.shape[0], 1))
    return y.reshape(lead + (W.shape[0],) + trail)


def conv2d(x: Tensor, weight: Tensor, bias: Tensor | None = None,
           stride: int = 1, padding: int = 0, groups: int = 1) -> Tensor:
    """2-D cross-correlation of a ``(C,H,W)`` or ``(N,C,H,W)`` map.

    ``groups`` may be 1 (dense) or equal to the channel count (depthwise).
    """
    x = as_tensor(x)
    single = x.ndim == 3
    if single:
        x = x.reshape((1,) + x.shape)
    n, c, h, w = x.shape
    c_out, c_per, k, k2 = weight.shape
    if k != k2:
        raise ValueError("conv2d: only square kernels are supported")
    if groups == 1:
        if c_per != c:
            raise ValueError(f"conv2d: kernel expects {c_per} input channels, input has {c}")
    elif groups == c and c_per == 1 and c_out == c:
        pass
    else:
        raise ValueError(f"conv2d: unsupported grouping groups={groups} for kernel {weight.shape}")
    if h + 2 * padding < k or w + 2 * padding < k:
        raise ValueError("conv2d: kernel larger than padded input")

    xp = pad2d(x, padding)
    out = _conv_core(xp, weight, stride, depthwise=groups != 1)
    if bias is not None:
        out = out + bias.reshape((c_out, 1, 1))
    return out.reshape(out.shape[1:]) if single else out


def _conv_core(xp: Tensor, weight: Tensor, s: int, depthwise: bool) -> Tensor:
    xd, wd = xp.data, weight.data
    n, c, hp, wp = xd.shape
    c_out, k = wd.shape[0], wd.shape[-1]
    ho = (hp - k) // s + 1
    wo = (wp - k) // s + 1
    if depthwise:
        win = sliding_window_view(xd, (k, k), axis=(2, 3))[:, :, ::s, ::s]  # N,C,Ho,Wo,k,k
        out = np.einsum("nchwij,cij->nchw", win, wd[:, 0], optimize=True)

        def back(g):
            gx = np.zeros_like(xd)
            gw = np.einsum("nchw,nchwij->cij", g, win, optimize=True)[:, None]
            for i in range(k):
                for j in range(k):
                    gx[:, :, i:i + s * ho:s, j:j + s * wo:s] += g * wd[None, :, 0, i, j, None, None]
            return gx, gw

        return _node(out, (xp, weight), back, "conv2d")

    # im2col, channel-first: cols[n] is (C*k*k, Ho*Wo)
    if k == 1:
        cols = np.ascontiguousarray(xd[:, :, ::s, ::s]).reshape(n, c, ho * wo)
    else:
        win = sliding_window_view(xd, (k, k), axis=(2, 3))[:, :, ::s, ::s]
        cols = np.ascontiguousarray(win.transpose(0, 1, 4, 5, 2, 3)).reshape(n, c * k * k, ho * wo)
    w2 = wd.reshape(c_out, -1)
    out = np.matmul(w2, cols).reshape(n, c_out, ho, wo)

    def back(g):
        g3 = g.reshape(n, c_out, ho * wo)
        gw = sum(g3[i] @ cols[i].T for i in range(n)).reshape(wd.shape)
        dcols = np.matmul(w2.T, g3).reshape(n, c, k, k, ho, wo)
        if k == 1 and s == 1:
            return dcols.reshape(xd.shape), gw
        gx = np.zeros_like(xd)
        for i in range(k):
            for j in range(k):
                gx[:, :, i:i + s * ho:s, j:j + s * wo:s] += dcols[:, :, i, j]
        return gx, gw

    return _node(out, (xp, weight), back, "conv2d")


def adaptive_pool_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row i averages inputs ``[floor(i*n/m), ceil((i+1)*n/m))``."""
    if not 1 <= n_out <= n_in:
        raise ValueError(f"adaptive pool: output extent {n_out} must lie in [1, {n_in}]")
    P = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo = (i * n_in) // n_out
        hi = -((-(i + 1) * n_in) // n_out)
        P[i, lo:hi] = 1.0 / (hi - lo)
    return P


def adaptive_avg_pool(x: Tensor, out: tuple[int, int]) -> Tensor:
    """Adaptive average pooling of the last two axes to ``out``."""
    h, w = x.shape[-2:]
    Ph = Tensor(adaptive_pool_matrix(h, out[0]))
    PwT = Tensor(adaptive_pool_matrix(w, out[1]).T)
    return Ph @ x @ PwT


def group_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    """Single-group normalisation over (C,H,W) of each sample, then per-channel affine."""
    axes = (-3, -2, -1)
    mu = x.mean(axis=axes, keepdims=True)
    xc = x - mu
    var = (xc * xc).mean(axis=axes, keepdims=True)
    xn = xc / (var + eps).sqrt()
    c = x.shape[-3]
    return xn * gamma.reshape((c, 1, 1)) + beta.reshape((c, 1, 1))


def upsample_nearest(x: Tensor, factor: int) -> Tensor:
    return x if factor == 1 else repeat_nearest(x, factor)


def embedding(table: Tensor, ids: np.ndarray) -> Tensor:
    """Rows of ``table`` selected by integer ``ids``."""
    ids = np.asarray(ids)
    if ids.size and (ids.min() < 0 or ids.max() >= table.shape[0]):
        raise ValueError(f"embedding: id out of range [0, {table.shape[0]})")
    return table[ids]


def segment_max(values: Tensor, segment: np.ndarray, n_segments: int) -> Tensor:
    """Per-segment channelwise max of ``values`` (P, C); empty segments give 0.

    The adjoint of each output goes to the row that attained the max.
    """
    vd = values.data
    seg = np.ascontiguousarray(segment, dtype=np.int64)
    out, arg = kernels.segment_max(np.ascontiguousarray(vd), seg, n_segments)
    c = vd.shape[1]

    def back(g):
        gv = np.zeros_like(vd)
        rows, cols = np.nonzero(arg >= 0)
        np.add.at(gv, (arg[rows, cols], cols), g[rows, cols])
        return (gv,)

    return _node(out, (values,), back, "segment_max")


def scatter_cells(values: Tensor, flat_index: np.ndarray, shape: tuple) -> Tensor:
    """Write rows of ``values`` (M, C) into an (N, C, H, W) zero map.

    ``flat_index`` holds ``n*H*W + row*W + col`` per row and must be unique.
    """
    n, c, h, w = shape
    flat_index = np.asarray(flat_index, dtype=np.int64)
    if len(np.unique(flat_index)) != len(flat_index):
        raise ValueError("scatter_cells: duplicate cell index")
    if values.shape != (len(flat_index), c):
        raise ValueError(f"scatter_cells: values {values.shape} vs {len(flat_index)} cells x {c}")
    bi, cell = np.divmod(flat_index, h * w)
    out = np.zeros((n, h * w, c))
    out[bi, cell] = values.data
    out = np.ascontiguousarray(out.transpose(0, 2, 1).reshape(n, c, h, w))

    def back(g):
        gg = g.reshape(n, c, h * w).transpose(0, 2, 1)
        return (gg[bi, cell],)

    return _node(out, (values,), back, "scatter")
