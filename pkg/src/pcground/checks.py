"""Oracle suites and gradient checks shared by the command line and the test suite."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, tsum
from .baca import BacaParams, baca_forward
from .dggf import DGGFBlock, dggf_forward, estimate_stats, max_relative
from .eval import ap_aos, bev_iou
from .geometry import Box3D, anchor_point, nearest_edge
from .gradcheck import grad_check
from .head import N_REG, HeadNet, Targets, build_targets, decode, draw_gaussian, head_forward
from .oracles import brute_ap_aos, brute_edge_distances, brute_max_relative, brute_quadrant_stats
from .pillars import GridSpec
from .training import LossConfig, total_loss
from .head import HeadOutput


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str
    seconds: float

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'}  {self.name}: {self.detail} ({self.seconds:.1f}s)"


def _timed(name, fn) -> CheckResult:
    t0 = time.perf_counter()
    passed, detail = fn()
    return CheckResult(name, passed, detail, time.perf_counter() - t0)


# ---------------------------------------------------------------------------
# oracle suites
# ---------------------------------------------------------------------------

def graph_oracle(seed: int = 0, cases: int = 200) -> tuple[bool, str]:
    """Masks bitwise and aggregated values to 1e-12 against the loop oracle."""
    rng = np.random.default_rng(seed)
    worst, mask_bad, stat_bad = 0.0, 0, 0
    for _ in range(cases):
        c = int(rng.choice([1, 2, 4]))
        hw = int(rng.choice([8, 12, 16]))
        k = int(rng.choice([2, 4]))
        x = rng.standard_normal((c, hw, hw))
        stats = estimate_stats(x)
        mu, sigma, n_pairs = brute_quadrant_stats(x)
        if abs(float(stats.mu) - mu) > 1e-12 or abs(float(stats.sigma) - sigma) > 1e-12 or stats.n_pairs != n_pairs:
            stat_bad += 1
        tau = float(stats.threshold)
        out, masks = max_relative(Tensor(x), tau, k)
        ref_masks, ref_final = brute_max_relative(x, tau, k)
        if masks.shape != ref_masks.shape or not np.array_equal(masks, ref_masks):
            mask_bad += 1
        worst = max(worst, float(np.abs(out.data - ref_final).max()))
    ok = mask_bad == 0 and stat_bad == 0 and worst <= 1e-12
    return ok, f"{cases} maps, mask mismatches {mask_bad}, stats mismatches {stat_bad}, max value error {worst:.2e}"


def random_box(rng, yaw=None) -> Box3D:
    return Box3D(float(rng.uniform(-40, 40)), float(rng.uniform(-40, 40)), float(rng.uniform(-2, 2)),
                 float(rng.uniform(0.3, 6.0)), float(rng.uniform(0.3, 3.0)), float(rng.uniform(0.5, 3.0)),
                 float(rng.uniform(-math.pi, math.pi)) if yaw is None else yaw)


def symmetric_boxes(rng, n: int) -> list[Box3D]:
    """Boxes whose nearest edge is seen head-on from the sensor (both endpoints equidistant)."""
    out = []
    for i in range(n):
        r = float(rng.uniform(5, 40))
        phi = float(rng.uniform(-math.pi, math.pi))
        l, w = float(rng.uniform(1, 5)), float(rng.uniform(0.5, 2.5))
        # the box's back edge (local -x face) faces the sensor squarely
        cx, cy = (r + l / 2) * math.cos(phi), (r + l / 2) * math.sin(phi)
        out.append(Box3D(cx, cy, 0.0, l, w, 1.5, phi))
    return out


def edge_oracle(seed: int = 0, cases: int = 10000, symmetric: int = 128) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(cases):
        box = random_box(rng)
        ne = nearest_edge(box)
        ref = brute_edge_distances(box)
        best = min(d for d, _, _ in ref)
        if ne.sensor_inside:
            continue
        if abs(ne.distance - best) > 1e-9:
            bad += 1
            continue
        # the chosen edge must be one of the minimal ones
        a, b = np.asarray(ne.edge[0]), np.asarray(ne.edge[1])
        same = [d for d, p, q in ref
                if (np.allclose(a, p, atol=1e-9) and np.allclose(b, q, atol=1e-9))
                or (np.allclose(a, q, atol=1e-9) and np.allclose(b, p, atol=1e-9))]
        if len(same) != 1 or same[0] - best > 1e-12:
            bad += 1
    tie_bad = 0
    for box in symmetric_boxes(rng, symmetric):
        ne = nearest_edge(box)
        a, b = ne.edge
        mid = (np.asarray(a) + np.asarray(b)) / 2
        if not np.allclose(anchor_point(box), mid, atol=1e-9):
            tie_bad += 1
    ok = bad == 0 and tie_bad == 0
    return ok, f"{cases} boxes, {bad} disagreements; {symmetric} symmetric ties, {tie_bad} wrong anchors"


def roundtrip_oracle(seed: int = 0, cases: int = 1000, grid: GridSpec | None = None) -> tuple[bool, str]:
    """build_targets -> decode recovers each box (one box per map)."""
    grid = grid or GridSpec()
    rng = np.random.default_rng(seed)
    worst, missing = 0.0, 0
    x0, x1 = grid.x_range
    y0, y1 = grid.y_range
    for _ in range(cases):
        box = Box3D(float(rng.uniform(x0 + 4, x1 - 4)), float(rng.uniform(y0 + 4, y1 - 4)),
                    float(rng.uniform(-2, 2)), float(rng.uniform(0.5, 5)), float(rng.uniform(0.5, 2.5)),
                    float(rng.uniform(0.5, 2.5)), float(rng.uniform(-math.pi, math.pi)))
        t = build_targets([box], grid)
        got = decode(t.heatmap, t.regression, grid, score_threshold=0.5, max_boxes=1)
        if len(got) != 1:
            missing += 1
            continue
        b = got[0][0]
        err = np.abs(b.as_array() - box.as_array())
        err[6] = abs(math.remainder(b.yaw - box.yaw, 2 * math.pi))
        worst = max(worst, float(err.max()))
    ok = missing == 0 and worst < 1e-6
    return ok, f"{cases} boxes, {missing} lost, max field error {worst:.2e}"


def _axis_box(rng) -> Box3D:
    # continuous sizes and positions: an IoU exactly on a threshold has probability zero
    return Box3D(float(rng.uniform(0, 5)), float(rng.uniform(0, 5)), 0.0,
                 float(rng.uniform(1, 4)), float(rng.uniform(1, 4)), 1.0,
                 float(rng.choice([0.0, math.pi / 2, -math.pi / 2, -math.pi])))


def metric_oracle(seed: int = 0, cases: int = 50) -> tuple[bool, str]:
    rng = np.random.default_rng(seed)
    bad = 0
    for _ in range(cases):
        n_scenes = int(rng.integers(1, 4))
        gts, preds = [], []
        scores = iter(rng.permutation(1000)[:200] / 1000.0 + 1e-3)
        for _ in range(n_scenes):
            gts.append([_axis_box(rng) for _ in range(int(rng.integers(0, 4)))])
            preds.append([(_axis_box(rng), float(next(scores))) for _ in range(int(rng.integers(0, 5)))])
        for thr in (0.25, 0.5):
            if ap_aos(preds, gts, thr) != brute_ap_aos(preds, gts, thr):
                bad += 1
    analytic = [
        abs(bev_iou(Box3D(0, 0, 0, 2, 1, 1, 0.3), Box3D(0, 0, 0, 2, 1, 1, 0.3)) - 1.0),
        abs(bev_iou(Box3D(0, 0, 0, 1, 1, 1, 0), Box3D(5, 5, 0, 1, 1, 1, 0)) - 0.0),
        abs(bev_iou(Box3D(0, 0, 0, 1, 1, 1, 0), Box3D(0.5, 0, 0, 1, 1, 1, 0)) - 1.0 / 3.0),
    ]
    ok = bad == 0 and max(analytic) <= 1e-12
    return ok, f"{cases} random cases, {bad} disagreements; analytic IoU max error {max(analytic):.1e}"


def oracle_suites(seed: int = 0) -> list[CheckResult]:
    return [
        _timed("dynamic-graph oracle", lambda: graph_oracle(seed)),
        _timed("nearest-edge oracle", lambda: edge_oracle(seed)),
        _timed("round-trip decoding", lambda: roundtrip_oracle(seed)),
        _timed("metric oracle", lambda: metric_oracle(seed)),
    ]


# ---------------------------------------------------------------------------
# gradient checks at reduced shapes
# ---------------------------------------------------------------------------

def _weighted_sum(t: Tensor, w: np.ndarray) -> Tensor:
    return tsum(t * Tensor(w))


def _randomize(module, rng, scale=0.5):
    for p in module.parameters().values():
        p.data[...] = rng.uniform(-scale, scale, p.shape)


def grad_baca(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    params = BacaParams(2, rng, agent_size=(2, 2))
    fl, fr = Tensor(rng.standard_normal((2, 4, 4))), Tensor(rng.standard_normal((2, 4, 4)))
    w = rng.standard_normal((2, 4, 4))
    return grad_check(lambda: _weighted_sum(baca_forward(fl, fr, params), w),
                      [fl, fr] + list(params.parameters().values()))


def grad_dggf(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    block = DGGFBlock(2, 2, 2, rng)
    _randomize(block, rng)
    f_t = Tensor(rng.standard_normal((2, 30)))
    lr = Tensor(rng.standard_normal((2, 8, 8)))
    w = rng.standard_normal((2, 8, 8))
    return grad_check(lambda: _weighted_sum(dggf_forward(f_t, lr, block), w),
                      [f_t, lr] + list(block.parameters().values()))


def grad_head(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    head = HeadNet(3, 3, rng)
    f = Tensor(rng.standard_normal((3, 6, 6)))
    w1, w2 = rng.standard_normal((1, 6, 6)), rng.standard_normal((N_REG, 6, 6))

    def fn():
        out = head_forward(f, head)
        return _weighted_sum(out.heatmap, w1) + _weighted_sum(out.regression, w2)

    return grad_check(fn, [f] + list(head.parameters().values()))


def small_targets(rng, h: int = 8, w: int = 8, peaks=((2, 3), (5, 5))) -> Targets:
    hm = np.zeros((h, w))
    reg = np.zeros((N_REG, h, w))
    for r, c in peaks:
        draw_gaussian(hm, r, c, 2)
        reg[:, r, c] = rng.standard_normal(N_REG) * 2.0
    return Targets(hm[None], reg, list(peaks))


def grad_loss(seed: int = 0) -> float:
    rng = np.random.default_rng(seed)
    t = small_targets(rng)
    hm = Tensor(rng.uniform(0.05, 0.95, (1, 8, 8)))
    reg = Tensor(rng.standard_normal((N_REG, 8, 8)) * 2.0)
    return grad_check(lambda: total_loss(HeadOutput(hm, reg), [t], LossConfig()), [hm, reg])


GRADIENT_CHECKS = {"baca": grad_baca, "dggf": grad_dggf, "head": grad_head, "total loss": grad_loss}


def gradient_checks(seed: int = 0, tol: float = 1e-4) -> list[CheckResult]:
    out = []
    for name, fn in GRADIENT_CHECKS.items():
        def run(fn=fn):
            err = fn(seed)
            return err < tol, f"max rel. err {err:.2e}"
        out.append(_timed(f"gradient check {name}", run))
    return out
