"""Acceptance criteria, one PASS/FAIL line each (collected in the pytest summary).

Run alone with ``pytest tests/test_acceptance.py -v -s``. The training
criteria take several minutes on one core.
"""

import time
from dataclasses import replace

import numpy as np
import pytest

from pcground.checks import edge_oracle, gradient_checks, graph_oracle, metric_oracle, roundtrip_oracle
from pcground.complexity import STAGES, count_baca, count_mhca
from pcground.eval import grounding_accuracy, localization_errors
from pcground.model import Batch, GroundingNet, ModelConfig, default_vocabulary, prepare_batch
from pcground.scenes import make_scenes
from pcground.training import LossConfig, predict, train_overfit

SEED = 0


def test_criterion_1_dynamic_graph_oracle(report):
    t0 = time.perf_counter()
    ok, detail = graph_oracle(SEED, 200)
    dt = time.perf_counter() - t0
    report(1, ok and dt < 60, f"{detail}; {dt:.1f}s (limit 60s)")
    assert ok and dt < 60


def test_criterion_2_nearest_edge_oracle(report):
    t0 = time.perf_counter()
    ok, detail = edge_oracle(SEED, 10_000, symmetric=128)
    dt = time.perf_counter() - t0
    report(2, ok and dt < 10, f"{detail}; {dt:.1f}s (limit 10s)")
    assert ok and dt < 10


def test_criterion_3_gradient_checks(report):
    t0 = time.perf_counter()
    results = gradient_checks(SEED, 1e-4)
    dt = time.perf_counter() - t0
    ok = all(r.passed for r in results) and dt < 300
    report(3, ok, "; ".join(f"{r.name.replace('gradient check ', '')} {r.detail}" for r in results)
           + f"; {dt:.1f}s (limit 300s)")
    assert ok


def test_criterion_4_complexity(report):
    c, h, w, n_heads = STAGES[3]
    baca, full = count_baca(c, h, w, 64), count_mhca(c, h, w, n_heads)
    ratio = full.macs / baca.macs
    sides = (40, 60, 80)
    macs = [count_baca(c, s, s, 64).macs for s in sides]
    Ls = [s * s for s in sides]
    affine = macs[0] + (macs[1] - macs[0]) * (Ls[2] - Ls[0]) // (Ls[1] - Ls[0]) == macs[2]
    growth = count_baca(c, h, w, 256).macs / baca.macs
    ok = ratio >= 100 and affine and 3.0 <= growth <= 4.2
    notes = [f"{r.method} {r.macs / 1e6:.2f}M vs reference {r.ref_macs / 1e6:.2f}M"
             for r in (baca, full) if r.deviates]
    report(4, ok, f"MHCA/BACA ratio {ratio:.2f} (need >= 100); affine in L: {affine}; "
                  f"l=256 vs l=64 growth {growth:.3f} (need 3-4.2)"
                  + (f"; beyond 2x of reference: {', '.join(notes)}" if notes else ""))
    assert ok


def test_criterion_5_round_trip(report):
    t0 = time.perf_counter()
    ok, detail = roundtrip_oracle(SEED, 1000)
    dt = time.perf_counter() - t0
    report(5, ok and dt < 30, f"{detail}; {dt:.1f}s (limit 30s)")
    assert ok and dt < 30


# reduced-model training shared by criteria 6 and 7
OVERFIT = dict(lr=3e-3, optimizer="adam", minibatch=4, eval_every=50)


def _predict_all(model, batch, chunk=8):
    out = []
    for i in range(0, len(batch), chunk):
        out += predict(model, Batch(batch.lidar[i:i + chunk], batch.radar[i:i + chunk],
                                    batch.tokens[i:i + chunk]), max_boxes=1)
    return out


def test_criterion_6_overfit(report):
    cfg = ModelConfig.reduced(seed=SEED)
    vocab = default_vocabulary()
    scenes = make_scenes(20, seed=SEED)
    batch = prepare_batch(scenes, cfg, vocab)
    model = GroundingNet(cfg, vocab)
    referred = [s.referred_boxes() for s in scenes]
    res = train_overfit(model, batch, LossConfig(lr=OVERFIT["lr"], optimizer=OVERFIT["optimizer"]),
                        steps=2000, eval_every=OVERFIT["eval_every"], referred=referred,
                        target_accuracy=0.9, minibatch=OVERFIT["minibatch"], seed=SEED)
    steps = len(res.losses)
    acc = grounding_accuracy(_predict_all(model, batch), referred)
    ok = acc >= 0.9 and steps <= 2000 and res.seconds < 600
    report(6, ok, f"accuracy {acc:.3f} at IoU 0.5 after {steps} steps, {res.seconds:.0f}s "
                  f"({OVERFIT['optimizer']}, lr {OVERFIT['lr']}, minibatch {OVERFIT['minibatch']}, seed {SEED})")
    assert ok


ABLATION_SCENES, ABLATION_SCENE_SEED, ABLATION_STEPS = 200, 11, 600


def _train_variant(scenes, **switches):
    cfg = replace(ModelConfig.reduced(seed=SEED), **switches)
    vocab = default_vocabulary()
    batch = prepare_batch(scenes, cfg, vocab)
    model = GroundingNet(cfg, vocab)
    train_overfit(model, batch, LossConfig(lr=OVERFIT["lr"], optimizer=OVERFIT["optimizer"]),
                  steps=ABLATION_STEPS, minibatch=OVERFIT["minibatch"], seed=SEED)
    return _predict_all(model, batch)


def test_criterion_7_ablations(report):
    scenes = make_scenes(ABLATION_SCENES, seed=ABLATION_SCENE_SEED)
    referred = [s.referred_boxes() for s in scenes]
    depth = [i for i, s in enumerate(scenes) if s.kind == "depth"]
    preds = {name: _train_variant(scenes, **sw) for name, sw in
             [("edge", {}), ("center", {"anchor_mode": "center"}), ("static", {"graph_mode": "static"})]}

    def depth_error(p):
        return float(np.mean(localization_errors([p[i] for i in depth], [referred[i] for i in depth])))

    err_edge, err_center = depth_error(preds["edge"]), depth_error(preds["center"])
    acc_dyn = grounding_accuracy(preds["edge"], referred)
    acc_static = grounding_accuracy(preds["static"], referred)
    ok = err_edge <= err_center and acc_dyn >= acc_static
    report(7, ok, f"depth-prompt localization error edge {err_edge:.3f} m vs center {err_center:.3f} m; "
                  f"accuracy dynamic {acc_dyn:.3f} vs static {acc_static:.3f} "
                  f"({ABLATION_SCENES} scenes seed {ABLATION_SCENE_SEED}, {len(depth)} depth prompts, "
                  f"{ABLATION_STEPS} steps, model seed {SEED})")
    assert ok


def test_criterion_8_metrics(report):
    ok, detail = metric_oracle(SEED, 50)
    report(8, ok, detail)
    assert ok
