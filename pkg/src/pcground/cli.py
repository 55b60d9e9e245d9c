"""Command-line entry point: ``pcground <command> [flags]``."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

log = logging.getLogger("pcground")

COMMANDS = ("gen-data", "oracle-check", "gradcheck", "bench", "train", "eval")


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--seed", type=int, default=0, help="random seed (default 0)")
    p.add_argument("--out", type=Path, default=None,
                   help="directory for machine-readable outputs (default: print only)")
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")


def _model_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--scale", choices=("reduced", "full"), default="reduced",
                   help="model size: reduced (C3=16, 40x40 stage 3) or full (default reduced)")
    p.add_argument("--agent", type=int, default=None,
                   help="agent grid side, l = side^2 (default 6 reduced, 12 full)")
    p.add_argument("--k", type=int, nargs=3, default=(8, 4, 2), metavar=("K3", "K4", "K5"),
                   help="graph roll step per stage (default 8 4 2)")
    p.add_argument("--gate-pool", choices=("max", "avg"), default="max", help="text pooling for the gate (default max)")
    p.add_argument("--graph-mode", choices=("dynamic", "static"), default="dynamic",
                   help="dynamic threshold or always-connected graph (default dynamic)")
    p.add_argument("--anchor-mode", choices=("edge", "center"), default="edge",
                   help="heatmap anchor: nearest edge or box center (default edge)")


def _data_flags(p: argparse.ArgumentParser, n_default: int) -> None:
    p.add_argument("--data", type=Path, default=None, help="dataset file (default: generate from --seed)")
    p.add_argument("--n", type=int, default=n_default, help=f"scenes to generate without --data (default {n_default})")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pcground", description="Text-prompted LiDAR/radar 3D grounding toolkit.")
    sub = ap.add_subparsers(dest="command", metavar="command")

    p = sub.add_parser("gen-data", help="generate a synthetic scene dataset")
    _common(p)
    p.add_argument("--n", type=int, default=20, help="number of scenes (default 20)")
    p.add_argument("--objects", type=int, nargs=2, default=(3, 5), metavar=("MIN", "MAX"),
                   help="objects per scene (default 3 5)")
    p.add_argument("--kinds", nargs="+", default=["motion", "depth", "velocity", "mixed"],
                   choices=("motion", "depth", "velocity", "mixed"), help="prompt kinds, cycled (default all)")

    p = sub.add_parser("oracle-check", help="run the brute-force oracle suites")
    _common(p)

    p = sub.add_parser("gradcheck", help="finite-difference checks of the fusion blocks, head and loss")
    _common(p)
    p.add_argument("--tol", type=float, default=1e-4, help="max relative error (default 1e-4)")

    p = sub.add_parser("bench", help="analytic cost counts and optional wall-clock timings")
    _common(p)
    p.add_argument("--stage", type=int, choices=(3, 4, 5), nargs="+", default=[3], help="stages (default 3)")
    p.add_argument("--agent", type=int, default=8, help="agent grid side (default 8)")
    p.add_argument("--wallclock", action="store_true", help="also time in-process forwards")
    p.add_argument("--repeats", type=int, default=20, help="timed runs per method (default 20, minimum 20)")

    p = sub.add_parser("train", help="overfit a small synthetic set")
    _common(p)
    _model_flags(p)
    _data_flags(p, 20)
    p.add_argument("--steps", type=int, default=2000, help="optimizer steps (default 2000)")
    p.add_argument("--lr", type=float, default=3e-3, help="peak step size (default 3e-3)")
    p.add_argument("--optimizer", choices=("gd", "adam"), default="adam",
                   help="update rule, both with cosine step-size decay (default adam)")
    p.add_argument("--weight-decay", type=float, default=0.0,
                   help="decoupled weight decay; with adam this is AdamW (default 0)")
    p.add_argument("--minibatch", type=int, default=4, help="scenes per step (default 4)")
    p.add_argument("--eval-every", type=int, default=50, help="accuracy check interval (default 50)")
    p.add_argument("--target-accuracy", type=float, default=None, help="stop once training accuracy reaches this")
    p.add_argument("--beta", type=float, default=0.25, help="regression loss weight (default 0.25)")

    p = sub.add_parser("eval", help="evaluate a trained model on a dataset")
    _common(p)
    _data_flags(p, 20)
    p.add_argument("--model", type=Path, required=True, help="directory written by 'train --out'")
    p.add_argument("--score-threshold", type=float, default=0.1, help="minimum peak score (default 0.1)")
    p.add_argument("--max-boxes", type=int, default=5, help="boxes kept per scene (default 5)")
    p.add_argument("--iou", type=float, default=0.5, help="IoU threshold for grounding accuracy (default 0.5)")
    return ap


def _write(out: Path | None, name: str, text: str) -> None:
    if out is None:
        return
    out.mkdir(parents=True, exist_ok=True)
    (out / name).write_text(text)


def _checks_csv(results) -> str:
    return "check,passed,detail\n" + "".join(f"{r.name},{int(r.passed)},\"{r.detail}\"\n" for r in results)


def cmd_gen_data(a) -> int:
    from .scenes import make_scenes, write_dataset
    scenes = make_scenes(a.n, seed=a.seed, n_objects=tuple(a.objects), kinds=a.kinds)
    out = a.out or Path(".")
    out.mkdir(parents=True, exist_ok=True)
    write_dataset(scenes, out / "scenes.jsonl")
    print(f"wrote {len(scenes)} scenes to {out / 'scenes.jsonl'}")
    return 0


def cmd_oracle_check(a) -> int:
    from .checks import oracle_suites
    results = oracle_suites(a.seed)
    for r in results:
        print(r.line())
    _write(a.out, "oracles.csv", _checks_csv(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_gradcheck(a) -> int:
    from .checks import gradient_checks
    results = gradient_checks(a.seed, a.tol)
    for r in results:
        print(r.line())
    _write(a.out, "gradcheck.csv", _checks_csv(results))
    return 0 if all(r.passed for r in results) else 1


def cmd_bench(a) -> int:
    from .complexity import STAGES, bench_wallclock, count_baca, count_mhca, count_mhlca, reports_csv, reports_table
    l = a.agent * a.agent
    reports = []
    for st in a.stage:
        c, h, w, nh = STAGES[st]
        if a.wallclock:
            reports += [bench_wallclock("baca", (c, h, w), l, a.repeats, a.seed),
                        bench_wallclock("mhca", (c, h, w), nh, a.repeats, a.seed),
                        bench_wallclock("mhlca", (c, h, w), nh, a.repeats, a.seed)]
        else:
            reports += [count_baca(c, h, w, l), count_mhca(c, h, w, nh), count_mhlca(c, h, w, nh)]
    print(reports_table(reports), end="")
    for st in a.stage:
        c, h, w, nh = STAGES[st]
        ratio = count_mhca(c, h, w, nh).macs / count_baca(c, h, w, l).macs
        print(f"stage {st}: MHCA/BACA MAC ratio {ratio:.2f}")
    _write(a.out, "bench.csv", reports_csv(reports))
    return 0


def _config(a):
    from .model import ModelConfig
    base = ModelConfig.reduced() if a.scale == "reduced" else ModelConfig()
    kw = dict(graph_steps=tuple(a.k), gate_pool=a.gate_pool, graph_mode=a.graph_mode,
              anchor_mode=a.anchor_mode, seed=a.seed)
    if a.agent is not None:
        kw["agent_size"] = (a.agent, a.agent)
    return replace(base, **kw)


def _scenes(a):
    from .scenes import make_scenes, read_dataset
    return read_dataset(a.data) if a.data else make_scenes(a.n, seed=a.seed)


def cmd_train(a) -> int:
    from .model import GroundingNet, default_vocabulary, prepare_batch
    from .training import DivergenceError, LossConfig, train_overfit
    cfg = _config(a)
    scenes = _scenes(a)
    if len(scenes) > 64:
        print("error: training set is limited to 64 scenes", file=sys.stderr)
        return 2
    vocab = default_vocabulary()
    batch = prepare_batch(scenes, cfg, vocab)
    model = GroundingNet(cfg, vocab)
    loss_cfg = LossConfig(beta=a.beta, lr=a.lr, steps=a.steps, optimizer=a.optimizer,
                          weight_decay=a.weight_decay)
    referred = [s.referred_boxes() for s in scenes]
    try:
        res = train_overfit(model, batch, loss_cfg, eval_every=a.eval_every, referred=referred,
                            target_accuracy=a.target_accuracy, minibatch=a.minibatch, seed=a.seed)
    except DivergenceError as e:
        print(f"training diverged: {e}", file=sys.stderr)
        return 1
    final = res.accuracy[-1][1] if res.accuracy else float("nan")
    print(f"steps {len(res.losses)}  final loss {res.losses[-1][3]:.6f}  training accuracy {final:.3f}"
          if res.losses else "steps 0")
    if a.out is not None:
        _write(a.out, "loss.csv", res.csv())
        _write(a.out, "accuracy.csv", "step,accuracy\n" + "".join(f"{s},{v:.6f}\n" for s, v in res.accuracy))
        run = {"scale": a.scale, "agent": list(cfg.agent_size), "k": list(cfg.graph_steps),
               "gate_pool": cfg.gate_pool, "graph_mode": cfg.graph_mode, "anchor_mode": cfg.anchor_mode,
               "seed": a.seed}
        _write(a.out, "run.json", json.dumps(run, indent=2, sort_keys=True) + "\n")
        np.savez(a.out / "params.npz", **{k: p.data for k, p in model.parameters().items()})
    return 0


def load_model(model_dir: Path):
    from .model import GroundingNet, ModelConfig, default_vocabulary
    run = json.loads((model_dir / "run.json").read_text())
    base = ModelConfig.reduced() if run["scale"] == "reduced" else ModelConfig()
    cfg = replace(base, agent_size=tuple(run["agent"]), graph_steps=tuple(run["k"]), gate_pool=run["gate_pool"],
                  graph_mode=run["graph_mode"], anchor_mode=run["anchor_mode"], seed=run["seed"])
    model = GroundingNet(cfg, default_vocabulary())
    saved = np.load(model_dir / "params.npz")
    params = model.parameters()
    if set(saved.files) != set(params):
        raise ValueError(f"{model_dir}: parameter names do not match the configured model")
    for k, p in params.items():
        if saved[k].shape != p.shape:
            raise ValueError(f"{model_dir}: parameter {k} has shape {saved[k].shape}, expected {p.shape}")
        p.data[...] = saved[k]
    return model


def cmd_eval(a) -> int:
    from .eval import depth_buckets, format_rows, grounding_accuracy, match, metrics_rows
    from .model import default_vocabulary, prepare_batch
    from .training import predict
    try:
        model = load_model(a.model)
    except (OSError, KeyError, ValueError) as e:
        print(f"error: cannot load model: {e}", file=sys.stderr)
        return 1
    scenes = _scenes(a)
    batch = prepare_batch(scenes, model.config, default_vocabulary(), with_targets=False)
    preds = []
    for i in range(0, len(scenes), 8):
        sub = type(batch)(batch.lidar[i:i + 8], batch.radar[i:i + 8], batch.tokens[i:i + 8])
        preds += predict(model, sub, a.max_boxes, a.score_threshold)
    gts = [s.referred_boxes() for s in scenes]
    classes = [[s.objects[j].cls for j in s.referred] for s in scenes]
    rows = metrics_rows(preds, gts, classes)
    buckets = depth_buckets(match(preds, gts, a.iou), gts, classes)
    rows += [(cls, b, f"accuracy@{a.iou:g}", v, None) for (cls, b), v in sorted(buckets.items())]
    csv, table = format_rows(rows)
    acc = grounding_accuracy(preds, gts, a.iou)
    print(table, end="")
    print(f"grounding accuracy @ IoU {a.iou:g}: {acc:.4f}")
    _write(a.out, "metrics.csv", csv)
    _write(a.out, "summary.txt", table + f"grounding accuracy @ IoU {a.iou:g}: {acc:.6f}\n")
    return 0


HANDLERS = {"gen-data": cmd_gen_data, "oracle-check": cmd_oracle_check, "gradcheck": cmd_gradcheck,
            "bench": cmd_bench, "train": cmd_train, "eval": cmd_eval}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else argv
    if not argv:
        parser.print_usage(sys.stderr)
        return 2
    try:
        a = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    if a.command is None:
        parser.print_usage(sys.stderr)
        return 2
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING, format="%(message)s")
    return HANDLERS[a.command](a)


if __name__ == "__main__":
    sys.exit(main())
