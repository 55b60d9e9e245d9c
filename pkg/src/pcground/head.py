"""Nearest-edge anchored grounding head: targets, network branches, decoding.

Regression channel layout at a peak cell::

    0-1  sub-cell offset of the anchor (row/x, col/y), in cells
    2-3  box center minus anchor, meters (x, y)
    4    center z
    5-7  log l, log w, log h
    8-9  sin yaw, cos yaw
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, clamp, gelu, sigmoid
from .geometry import Box3D, anchor_point
from .layers import Conv2d, Module
from .pillars import GridSpec

log = logging.getLogger(__name__)

N_REG = 10
HEAT_CLAMP = 1e-4


@dataclass
class HeadOutput:
    heatmap: Tensor  # (..., 1, H, W)
    regression: Tensor  # (..., 10, H, W)


@dataclass
class Targets:
    heatmap: np.ndarray  # (1, H, W)
    regression: np.ndarray  # (10, H, W)
    peaks: list = field(default_factory=list)  # (row, col) per written box
    skipped: list = field(default_factory=list)

    @property
    def peak_values(self) -> np.ndarray:
        if not self.peaks:
            return np.zeros((0, N_REG))
        r, c = np.array(self.peaks).T
        return self.regression[:, r, c].T


def gaussian_radius(height: float, width: float, min_overlap: float = 0.1) -> float:
    """Size-adaptive radius (CornerNet/CenterPoint rule), in cells."""
    a1 = 1
    b1 = height + width
    c1 = width * height * (1 - min_overlap) / (1 + min_overlap)
    r1 = (b1 + math.sqrt(b1 ** 2 - 4 * a1 * c1)) / 2
    a2 = 4
    b2 = 2 * (height + width)
    c2 = (1 - min_overlap) * width * height
    r2 = (b2 + math.sqrt(b2 ** 2 - 4 * a2 * c2)) / 2
    a3 = 4 * min_overlap
    b3 = -2 * min_overlap * (height + width)
    c3 = (min_overlap - 1) * width * height
    r3 = (b3 + math.sqrt(b3 ** 2 - 4 * a3 * c3)) / 2
    return min(r1, r2, r3)


def draw_gaussian(heatmap: np.ndarray, r: int, c: int, radius: int) -> None:
    """Max-merge a Gaussian peak of value exactly 1 at (r, c)."""
    sigma = (2 * radius + 1) / 6.0
    h, w = heatmap.shape
    ys = np.arange(max(0, r - radius), min(h, r + radius + 1))
    xs = np.arange(max(0, c - radius), min(w, c + radius + 1))
    g = np.exp(-((ys[:, None] - r) ** 2 + (xs[None, :] - c) ** 2) / (2 * sigma * sigma))
    region = heatmap[ys[0]:ys[-1] + 1, xs[0]:xs[-1] + 1]
    np.maximum(region, g, out=region)


def anchor_cell(anchor, grid: GridSpec) -> tuple[int, int, float, float]:
    hc = grid.head_cell
    u = (anchor[0] - grid.x_range[0]) / hc
    v = (anchor[1] - grid.y_range[0]) / hc
    r, c = math.floor(u), math.floor(v)
    return r, c, u - r, v - c


def encode_box(box: Box3D, anchor, off_r: float, off_c: float) -> np.ndarray:
    return np.array([
        off_r, off_c,
        box.x - anchor[0], box.y - anchor[1],
        box.z,
        math.log(box.l), math.log(box.w), math.log(box.h),
        math.sin(box.yaw), math.cos(box.yaw),
    ])


def build_targets(boxes: list[Box3D], grid: GridSpec, anchor_mode: str = "edge",
                  min_radius: int = 2) -> Targets:
    h, w = grid.head_shape
    hm = np.zeros((h, w))
    reg = np.zeros((N_REG, h, w))
    t = Targets(hm[None], reg)
    for i, box in enumerate(boxes):
        a = anchor_point(box, anchor_mode)
        r, c, off_r, off_c = anchor_cell(a, grid)
        if not (0 <= r < h and 0 <= c < w):
            log.warning("box %d anchor %s outside the grid; skipped", i, a)
            t.skipped.append(i)
            continue
        radius = max(min_radius, int(gaussian_radius(box.l / grid.head_cell, box.w / grid.head_cell)))
        draw_gaussian(hm, r, c, radius)
        reg[:, r, c] = encode_box(box, a, off_r, off_c)
        t.peaks.append((r, c))
    return t


class HeadNet(Module):
    """Two conv branches (3x3 conv - GeLU - 1x1 conv): heatmap and regression."""

    def __init__(self, c_in: int, hidden: int, rng: np.random.Generator, heat_bias: float = -2.19):
        self.heat1 = Conv2d(c_in, hidden, 3, rng)
        self.heat2 = Conv2d(hidden, 1, 1, rng)
        self.reg1 = Conv2d(c_in, hidden, 3, rng)
        self.reg2 = Conv2d(hidden, N_REG, 1, rng)
        self.heat2.bias.data[...] = heat_bias

    def forward(self, f: Tensor) -> HeadOutput:
        return head_forward(f, self)


def head_forward(f: Tensor, head: HeadNet) -> HeadOutput:
    logits = head.heat2(gelu(head.heat1(f)))
    heat = clamp(sigmoid(logits), HEAT_CLAMP, 1.0 - HEAT_CLAMP)
    reg = head.reg2(gelu(head.reg1(f)))
    return HeadOutput(heat, reg)


def _local_max(hm: np.ndarray) -> np.ndarray:
    p = np.pad(hm, 1, constant_values=-np.inf)
    h, w = hm.shape
    m = np.max(np.stack([p[i:i + h, j:j + w] for i in range(3) for j in range(3)]), axis=0)
    return hm == m


def decode(heatmap, regression, grid: GridSpec, score_threshold: float = 0.3,
           max_boxes: int = 10) -> list[tuple[Box3D, float]]:
    """Boxes and scores from peak cells of a single-sample head output."""
    hm = np.asarray(getattr(heatmap, "data", heatmap)).reshape(grid.head_shape)
    reg = np.asarray(getattr(regression, "data", regression)).reshape((N_REG,) + grid.head_shape)
    peaks = _local_max(hm) & (hm >= score_threshold)
    rows, cols = np.nonzero(peaks)
    scores = hm[rows, cols]
    order = np.argsort(-scores, kind="stable")[:max_boxes]
    hc = grid.head_cell
    out = []
    for k in order:
        r, c = rows[k], cols[k]
        v = reg[:, r, c].copy()
        v[5:8] = np.clip(v[5:8], -6.0, 6.0)  # untrained heads can emit huge log-dims
        ax = grid.x_range[0] + (r + v[0]) * hc
        ay = grid.y_range[0] + (c + v[1]) * hc
        box = Box3D(ax + v[2], ay + v[3], v[4],
                    math.exp(v[5]), math.exp(v[6]), math.exp(v[7]),
                    math.atan2(v[8], v[9]))
        out.append((box, float(scores[k])))
    return out
