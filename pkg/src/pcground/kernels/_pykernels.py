"""Pure numpy/Python implementations of the hot kernels.

These define the reference semantics; the compiled module must match them.
"""

from __future__ import annotations

import math

import numpy as np


def segment_max(values: np.ndarray, segment: np.ndarray, n_segments: int):
    p, c = values.shape
    out = np.zeros((n_segments, c))
    arg = np.full((n_segments, c), -1, dtype=np.int64)
    if p == 0:
        return out, arg
    order = np.lexsort((np.arange(p), segment))
    seg_sorted = segment[order]
    starts = np.flatnonzero(np.r_[True, seg_sorted[1:] != seg_sorted[:-1]])
    ids = seg_sorted[starts]
    vals = values[order]
    out[ids] = np.maximum.reduceat(vals, starts, axis=0)
    # first row in original order attaining the max
    counts = np.diff(np.r_[starts, p])
    owner = np.repeat(np.arange(len(starts)), counts)
    hit = vals == out[ids][owner]
    big = np.where(hit, order[:, None], p)
    first = np.minimum.reduceat(big, starts, axis=0)
    arg[ids] = first
    return out, arg


def roll_schedule(h: int, w: int, step: int) -> list[tuple[int, int]]:
    """``(axis, shift)`` pairs: downward rolls then rightward rolls, m = 1, 2, ..."""
    rolls = []
    m = 1
    while m * step < h:
        rolls.append((0, m * step))
        m += 1
    m = 1
    while m * step < w:
        rolls.append((1, m * step))
        m += 1
    return rolls


def axial_max_relative(x: np.ndarray, threshold: np.ndarray, step: int):
    """Masked max-relative aggregation along circular row/column rolls.

    Args:
        x: (N, C, H, W) features.
        threshold: (N,) per-sample distance threshold; a roll connects a cell
            when the channel-wise Euclidean distance is strictly below it.
        step: roll stride.

    Returns:
        (final, arg, masks): aggregated map, index of the roll that set each
        value (-1 where the zero initialisation survived), and the
        (N, R, H, W) uint8 mask stack.
    """
    n, c, h, w = x.shape
    rolls = roll_schedule(h, w, step)
    final = np.zeros_like(x)
    arg = np.full(x.shape, -1, dtype=np.int32)
    masks = np.zeros((n, len(rolls), h, w), dtype=np.uint8)
    tau = threshold.reshape(n, 1, 1)
    for r, (axis, shift) in enumerate(rolls):
        rolled = np.roll(x, shift, axis=2 + axis)
        diff = rolled - x
        dist = np.sqrt((diff * diff).sum(axis=1))
        mask = dist < tau
        masks[:, r] = mask
        masked = np.where(mask[:, None], diff, 0.0)
        better = masked > final
        final = np.where(better, masked, final)
        arg[better] = r
    return final, arg, masks


def _clip(poly: list, a: tuple, b: tuple) -> list:
    out = []
    ax, ay = a
    ex, ey = b[0] - ax, b[1] - ay
    n = len(poly)
    for i in range(n):
        px, py = poly[i]
        qx, qy = poly[(i + 1) % n]
        sp = ex * (py - ay) - ey * (px - ax)
        sq = ex * (qy - ay) - ey * (qx - ax)
        if sp >= 0:
            out.append((px, py))
        if (sp >= 0) != (sq >= 0):
            t = sp / (sp - sq)
            out.append((px + t * (qx - px), py + t * (qy - py)))
    return out


def _area(poly: list) -> float:
    s = 0.0
    n = len(poly)
    for i in range(n):
        x0, y0 = poly[i]
        x1, y1 = poly[(i + 1) % n]
        s += x0 * y1 - x1 * y0
    return 0.5 * abs(s)


def _footprint(box) -> list:
    x, y, l, w, yaw = box
    c, s = math.cos(yaw), math.sin(yaw)
    hl, hw = 0.5 * l, 0.5 * w
    pts = []
    for dx, dy in ((hl, hw), (-hl, hw), (-hl, -hw), (hl, -hw)):  # counter-clockwise
        pts.append((x + c * dx - s * dy, y + s * dx + c * dy))
    return pts


def rect_iou(a, b) -> float:
    """IoU of two rotated rectangles given as (x, y, l, w, yaw)."""
    area_a = a[2] * a[3]
    area_b = b[2] * b[3]
    if area_a <= 0 or area_b <= 0:
        return 0.0
    poly = _footprint(a)
    fb = _footprint(b)
    for i in range(4):
        if not poly:
            break
        poly = _clip(poly, fb[i], fb[(i + 1) % 4])
    inter = _area(poly) if len(poly) >= 3 else 0.0
    union = area_a + area_b - inter
    return min(max(inter / union, 0.0), 1.0)


def rect_iou_matrix(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    out = np.zeros((len(A), len(B)))
    for i in range(len(A)):
        for j in range(len(B)):
            out[i, j] = rect_iou(tuple(A[i]), tuple(B[j]))
    return out
