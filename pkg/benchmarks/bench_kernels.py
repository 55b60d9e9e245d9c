"""Compare the compiled kernels against the numpy fallback.

    python benchmarks/bench_kernels.py [--repeats N]

Prints median seconds per call for each kernel and backend, the speed-up,
and whether both backends returned identical results.
"""

import argparse
import math
import statistics
import time

import numpy as np

from pcground import kernels


def median_time(fn, repeats):
    fn()
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return statistics.median(times)


def cases(rng):
    # stage-3 graph aggregation at the full and reduced widths
    x64 = rng.standard_normal((1, 64, 80, 80))
    x16 = rng.standard_normal((4, 16, 40, 40))
    # pillar max over ~12k points into a 160x160 grid
    pts = rng.standard_normal((12000, 32))
    seg = np.sort(rng.integers(0, 25600, 12000)).astype(np.int64)
    boxes_a = np.column_stack([rng.uniform(0, 50, 60), rng.uniform(-25, 25, 60), rng.uniform(1, 5, 60),
                               rng.uniform(0.5, 2.5, 60), rng.uniform(-math.pi, math.pi, 60)])
    boxes_b = boxes_a[::-1].copy() + rng.normal(0, 0.5, boxes_a.shape)
    return {
        "axial_max_relative 64x80x80 K=8": lambda k: k.axial_max_relative(x64, np.array([11.0]), 8),
        "axial_max_relative 4x16x40x40 K=8": lambda k: k.axial_max_relative(x16, np.full(4, 5.5), 8),
        "segment_max 12k points": lambda k: k.segment_max(pts, seg, 25600),
        "rect_iou_matrix 60x60": lambda k: k.rect_iou_matrix(boxes_a, boxes_b),
    }


def same(a, b):
    if isinstance(a, tuple):
        return all(same(x, y) for x, y in zip(a, b))
    return np.allclose(np.asarray(a), np.asarray(b), atol=1e-12, rtol=0)


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeats", type=int, default=10, help="timed calls per kernel (default 10)")
    args = ap.parse_args()
    if "compiled" not in kernels.BACKENDS:
        print("compiled extension not built; reinstall with Cython available to compare")
        return
    py, cy = kernels.BACKENDS["python"], kernels.BACKENDS["compiled"]
    rng = np.random.default_rng(0)
    print(f"{'kernel':36s} {'python s':>10s} {'compiled s':>11s} {'speed-up':>9s}  match")
    for name, call in cases(rng).items():
        tp = median_time(lambda: call(py), args.repeats)
        tc = median_time(lambda: call(cy), args.repeats)
        print(f"{name:36s} {tp:10.5f} {tc:11.5f} {tp / tc:8.1f}x  {same(call(py), call(cy))}")


if __name__ == "__main__":
    main()
