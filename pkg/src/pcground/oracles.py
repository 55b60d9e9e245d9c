"""Slow, loop-based reference implementations used to cross-check the fast paths.

Nothing here is used by the model itself.
"""

from __future__ import annotations

import math

import numpy as np


def brute_quadrant_stats(x: np.ndarray) -> tuple[float, float, int]:
    """(mu, population sigma, pair count) over the two diagonal quadrant pairings."""
    c, h, w = x.shape
    if h % 2 or w % 2:
        rows = [min(i, h - 1) for i in range(h + h % 2)]
        cols = [min(j, w - 1) for j in range(w + w % 2)]
        x = x[:, rows][:, :, cols]
        c, h, w = x.shape
    hh, hw = h // 2, w // 2
    dists = []
    for (r0, c0), (r1, c1) in (((0, 0), (hh, hw)), ((0, hw), (hh, 0))):
        for i in range(hh):
            for j in range(hw):
                s = 0.0
                for k in range(c):
                    d = x[k, r0 + i, c0 + j] - x[k, r1 + i, c1 + j]
                    s += d * d
                dists.append(math.sqrt(s))
    mu = math.fsum(dists) / len(dists)
    var = math.fsum((d - mu) ** 2 for d in dists) / len(dists)
    return mu, math.sqrt(var), len(dists)


def brute_max_relative(x: np.ndarray, tau: float, step: int) -> tuple[np.ndarray, np.ndarray]:
    """Mask stack (R, H, W) and aggregated map (C, H, W) by explicit loops over rolls and cells."""
    c, h, w = x.shape
    shifts = []
    m = 1
    while m * step < h:
        shifts.append((m * step, 0))
        m += 1
    m = 1
    while m * step < w:
        shifts.append((0, m * step))
        m += 1
    masks = np.zeros((len(shifts), h, w), dtype=np.uint8)
    final = np.zeros((c, h, w))
    for r, (dr, dc) in enumerate(shifts):
        for i in range(h):
            for j in range(w):
                # circular shift down/right: the cell at (i, j) sees (i - dr, j - dc)
                si, sj = (i - dr) % h, (j - dc) % w
                s = 0.0
                diff = [x[k, si, sj] - x[k, i, j] for k in range(c)]
                for d in diff:
                    s += d * d
                on = math.sqrt(s) < tau
                masks[r, i, j] = on
                for k in range(c):
                    v = diff[k] if on else 0.0
                    if v > final[k, i, j]:
                        final[k, i, j] = v
    return masks, final


def _corners_2d(x, y, l, w, yaw):
    c, s = math.cos(yaw), math.sin(yaw)
    out = []
    for dx, dy in ((l / 2, w / 2), (-l / 2, w / 2), (-l / 2, -w / 2), (l / 2, -w / 2)):
        out.append((x + dx * c - dy * s, y + dx * s + dy * c))
    return out


def _seg_dist(p, a, b) -> float:
    ax, ay = a
    bx, by = b
    px, py = p
    vx, vy = bx - ax, by - ay
    t = ((px - ax) * vx + (py - ay) * vy) / (vx * vx + vy * vy)
    t = min(1.0, max(0.0, t))
    return math.hypot(px - (ax + t * vx), py - (ay + t * vy))


def brute_edge_distances(box, sensor=(0.0, 0.0)) -> list[tuple[float, tuple, tuple]]:
    """Distance from ``sensor`` to each of the four footprint edges, with endpoints."""
    pts = _corners_2d(box.x, box.y, box.l, box.w, box.yaw)
    return [(_seg_dist(sensor, pts[i], pts[(i + 1) % 4]), pts[i], pts[(i + 1) % 4]) for i in range(4)]


def brute_iou_axis_aligned(a, b) -> float:
    """IoU of two BEV rectangles whose yaw is a multiple of pi/2."""
    def extent(box):
        quarter = round(box.yaw / (math.pi / 2))
        if abs(box.yaw - quarter * math.pi / 2) > 1e-12:
            raise ValueError("box is not axis aligned")
        l, w = (box.l, box.w) if quarter % 2 == 0 else (box.w, box.l)
        return box.x - l / 2, box.x + l / 2, box.y - w / 2, box.y + w / 2

    ax0, ax1, ay0, ay1 = extent(a)
    bx0, bx1, by0, by1 = extent(b)
    iw = max(0.0, min(ax1, bx1) - max(ax0, bx0))
    ih = max(0.0, min(ay1, by1) - max(ay0, by0))
    inter = iw * ih
    return inter / ((ax1 - ax0) * (ay1 - ay0) + (bx1 - bx0) * (by1 - by0) - inter)


def brute_ap_aos(predictions, ground_truth, iou_threshold: float, iou=brute_iou_axis_aligned):
    """AP / AOS by sweeping every score cutoff and integrating the precision envelope.

    Scores are assumed distinct. Returns ``(None, None)`` with no ground truth.
    """
    n_gt = sum(len(g) for g in ground_truth)
    if n_gt == 0:
        return None, None
    # greedy matching, scene by scene
    flagged = []  # (score, is_tp, similarity)
    for preds, gts in zip(predictions, ground_truth):
        used = set()
        for box, score in sorted(preds, key=lambda p: -p[1]):
            best, best_iou = None, -1.0
            for j, g in enumerate(gts):
                if j in used:
                    continue
                v = iou(box, g)
                if v >= iou_threshold and v > best_iou:
                    best, best_iou = j, v
            if best is None:
                flagged.append((score, False, 0.0))
            else:
                used.add(best)
                flagged.append((score, True, (1 + math.cos(box.yaw - gts[best].yaw)) / 2))
    cutoffs = sorted({f[0] for f in flagged}, reverse=True)
    curve = []  # (recall, precision, orientation precision) per cutoff
    for t in cutoffs:
        kept = [f for f in flagged if f[0] >= t]
        tp = sum(1 for f in kept if f[1])
        curve.append((tp / n_gt, tp / len(kept), math.fsum(f[2] for f in kept) / len(kept)))
    levels = sorted({r for r, _, _ in curve})
    ap_terms, aos_terms = [], []
    prev = 0.0
    for r in levels:
        if r == 0.0:
            continue
        ap_terms.append((r - prev) * max(p for rr, p, _ in curve if rr >= r))
        aos_terms.append((r - prev) * max(o for rr, _, o in curve if rr >= r))
        prev = r
    return math.fsum(ap_terms), math.fsum(aos_terms)
