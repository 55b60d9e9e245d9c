"""Grounding metrics: rotated BEV / 3D IoU, greedy matching, AP and AOS, depth buckets."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .geometry import Box3D, nearest_edge
from . import kernels

DEPTH_EDGES = (0.0, 10.0, 20.0, 30.0, 40.0, 50.0)
IOU_THRESHOLDS = {"AP_A": 0.5, "AP_B": 0.25}


def bev_iou(a: Box3D, b: Box3D) -> float:
    return float(kernels.rect_iou(np.array(a.bev()), np.array(b.bev())))


def iou_3d(a: Box3D, b: Box3D) -> float:
    """BEV IoU scaled by the vertical overlap ratio (upright boxes only)."""
    lo = max(a.z - a.h / 2, b.z - b.h / 2)
    hi = min(a.z + a.h / 2, b.z + b.h / 2)
    inter_h = max(0.0, hi - lo)
    if inter_h == 0.0:
        return 0.0
    union_h = max(a.z + a.h / 2, b.z + b.h / 2) - min(a.z - a.h / 2, b.z - b.h / 2)
    return bev_iou(a, b) * inter_h / union_h


def orientation_similarity(pred_yaw: float, gt_yaw: float) -> float:
    return 0.5 * (1.0 + math.cos(pred_yaw - gt_yaw))


@dataclass
class MatchEntry:
    scene: int
    pred: int
    gt: int  # -1 when unmatched
    score: float
    iou: float
    similarity: float

    @property
    def matched(self) -> bool:
        return self.gt >= 0


@dataclass
class MatchResult:
    entries: list[MatchEntry] = field(default_factory=list)
    gt_matched: list[list[bool]] = field(default_factory=list)

    @property
    def n_gt(self) -> int:
        return sum(len(m) for m in self.gt_matched)


def match(predictions: Sequence[Sequence[tuple[Box3D, float]]],
          ground_truth: Sequence[Sequence[Box3D]], iou_threshold: float) -> MatchResult:
    """One-to-one greedy matching per scene, predictions in descending score order.

    Each prediction takes the unmatched ground truth with the highest IoU at or
    above the threshold.
    """
    res = MatchResult()
    for s, (preds, gts) in enumerate(zip(predictions, ground_truth)):
        taken = [False] * len(gts)
        order = sorted(range(len(preds)), key=lambda i: -preds[i][1])
        if preds and gts:
            ious = kernels.rect_iou_matrix(np.array([p[0].bev() for p in preds]),
                                           np.array([g.bev() for g in gts]))
        for i in order:
            box, score = preds[i]
            best, best_iou = -1, -1.0
            for j in range(len(gts)):
                if not taken[j] and ious[i, j] >= iou_threshold and ious[i, j] > best_iou:
                    best, best_iou = j, ious[i, j]
            if best >= 0:
                taken[best] = True
                res.entries.append(MatchEntry(s, i, best, score, best_iou,
                                              orientation_similarity(box.yaw, gts[best].yaw)))
            else:
                res.entries.append(MatchEntry(s, i, -1, score, max(ious[i].max(), 0.0) if gts else 0.0, 0.0))
        res.gt_matched.append(taken)
    return res


def _envelope(p: np.ndarray) -> np.ndarray:
    return np.maximum.accumulate(p[::-1])[::-1]


def ap_aos(predictions, ground_truth, iou_threshold: float = 0.5) -> tuple[float | None, float | None]:
    """All-point interpolated AP and AOS; ``(None, None)`` when there is no ground truth."""
    m = match(predictions, ground_truth, iou_threshold)
    n_gt = m.n_gt
    if n_gt == 0:
        return None, None
    if not m.entries:
        return 0.0, 0.0
    ent = sorted(m.entries, key=lambda e: -e.score)
    tp = np.array([1.0 if e.matched else 0.0 for e in ent])
    sim = np.array([e.similarity if e.matched else 0.0 for e in ent])
    rank = np.arange(1, len(ent) + 1)
    recall = np.cumsum(tp) / n_gt
    precision = np.cumsum(tp) / rank
    # correctly rounded prefix sums keep the result independent of summation order
    os_precision = np.array([math.fsum(sim[:k]) for k in rank]) / rank
    dr = np.diff(np.r_[0.0, recall])
    return math.fsum(dr * _envelope(precision)), math.fsum(dr * _envelope(os_precision))


def bucket_label(distance: float) -> str:
    for lo, hi in zip(DEPTH_EDGES[:-1], DEPTH_EDGES[1:]):
        if lo <= distance < hi:
            return f"{lo:g}-{hi:g}"
    return f"{DEPTH_EDGES[-1]:g}+"


def depth_buckets(result: MatchResult, ground_truth: Sequence[Sequence[Box3D]],
                  classes: Sequence[Sequence[str]] | None = None) -> dict[tuple[str, str], float]:
    """Per (class, depth bucket) fraction of ground truth matched; empty buckets are absent.

    Depth is the distance from the sensor to the ground truth's nearest edge.
    """
    counts: dict[tuple[str, str], list[int]] = {}
    for s, gts in enumerate(ground_truth):
        for j, g in enumerate(gts):
            cls = classes[s][j] if classes is not None else "all"
            key = (cls, bucket_label(nearest_edge(g).distance))
            c = counts.setdefault(key, [0, 0])
            c[0] += int(result.gt_matched[s][j])
            c[1] += 1
    return {k: v[0] / v[1] for k, v in counts.items()}


def grounding_accuracy(predictions, referred: Sequence[Sequence[Box3D]], iou_threshold: float = 0.5) -> float:
    """Fraction of referred boxes matched by the predictions at ``iou_threshold``."""
    m = match(predictions, referred, iou_threshold)
    return sum(sum(t) for t in m.gt_matched) / max(m.n_gt, 1)


def localization_errors(predictions, referred: Sequence[Sequence[Box3D]]) -> list[float]:
    """BEV center distance from each referred box to the top-scoring prediction."""
    out = []
    for preds, gts in zip(predictions, referred):
        if not preds:
            continue
        top = max(preds, key=lambda p: p[1])[0]
        for g in gts:
            out.append(math.hypot(top.x - g.x, top.y - g.y))
    return out


def metrics_rows(predictions, ground_truth, classes=None) -> list[tuple[str, str, str, float | None, float | None]]:
    """(class, bucket, metric, AP, AOS) rows for both IoU thresholds, per class and overall."""
    rows = []
    cls_names = sorted({c for cs in classes for c in cs}) if classes is not None else []
    for label, thr in IOU_THRESHOLDS.items():
        ap, aos = ap_aos(predictions, ground_truth, thr)
        rows.append(("all", "all", f"{label}@{thr:g}", ap, aos))
        for cname in cls_names:
            gt_c = [[g for g, c in zip(gs, cs) if c == cname] for gs, cs in zip(ground_truth, classes)]
            ap, aos = ap_aos(predictions, gt_c, thr)
            rows.append((cname, "all", f"{label}@{thr:g}", ap, aos))
    return rows


def format_rows(rows, header=("class", "bucket", "metric", "AP", "AOS")) -> tuple[str, str]:
    """(csv text, plain-text table) for metric rows; undefined values print as 'undefined'."""
    def fmt(v):
        if v is None:
            return "undefined"
        return f"{v:.6f}" if isinstance(v, float) else str(v)

    csv = ",".join(header) + "\n" + "".join(",".join(fmt(v) for v in r) + "\n" for r in rows)
    table_rows = [list(header)] + [[fmt(v) for v in r] for r in rows]
    widths = [max(len(r[i]) for r in table_rows) for i in range(len(header))]
    lines = ["  ".join(c.ljust(w) for c, w in zip(r, widths)).rstrip() for r in table_rows]
    return csv, "\n".join(lines) + "\n"
