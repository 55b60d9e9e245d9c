"""Closed-form MAC / parameter counts and wall-clock benchmarks for the fusion blocks.

One multiply-accumulate counts as one unit. Softmax, normalisation and bias
adds are not counted.

    agent attention (both directions)   6 C^2 L + 8 L l C + 2 L C
    full cross attention                8 C^2 L + 4 L^2 C
    linear cross attention              8 C^2 L + 4 L C^2 / N_h + 4 L C

``L = H*W`` tokens, ``l`` agents, ``N_h`` heads.
"""

from __future__ import annotations

import io
import math
import statistics
import time
from dataclasses import dataclass, fields

import numpy as np

# Published reference figures, keyed by (method, C, H, W, agents-or-heads).
REFERENCE = {
    ("baca", 64, 80, 80, 64): (640, 46.61e6),
    ("baca", 128, 40, 40, 64): (1280, 23.33e6),
    ("baca", 256, 20, 20, 64): (2560, 6.81e6),
    ("baca", 64, 80, 80, 256): (640, 164.62e6),
    ("baca", 128, 40, 40, 256): (1280, 82.40e6),
    ("baca", 256, 20, 20, 256): (2560, 21.75e6),
    ("baca", 64, 80, 80, 324): (640, 206.41e6),
    ("baca", 128, 40, 40, 324): (1280, 103.32e6),
    ("baca", 256, 20, 20, 324): (2560, 27.04e6),
    ("mhca", 64, 80, 80, 4): (0.33e6, 10.70e9),
    ("mhca", 128, 40, 40, 8): (0.13e6, 1520.44e6),
    ("mhca", 256, 20, 20, 8): (0.52e6, 373.56e6),
    ("mhlca", 64, 80, 80, 4): (131.14e3, 1.68e9),
    ("mhlca", 128, 40, 40, 8): (262.27e3, 838.86e6),
    ("mhlca", 256, 20, 20, 8): (524.54e3, 419.43e6),
}

STAGES = {3: (64, 80, 80, 4), 4: (128, 40, 40, 8), 5: (256, 20, 20, 8)}


@dataclass
class CostReport:
    method: str
    c: int
    h: int
    w: int
    size: int  # agent count for baca, head count otherwise
    macs: int
    params: int
    attention_macs: int
    ref_macs: float | None = None
    ref_params: float | None = None
    wall_median: float | None = None
    wall_iqr: float | None = None
    repeats: int = 0

    @property
    def tokens(self) -> int:
        return self.h * self.w

    @property
    def deviates(self) -> bool:
        """True when the reference MAC figure is more than 2x away from ours."""
        if self.ref_macs is None:
            return False
        r = self.macs / self.ref_macs
        return r > 2.0 or r < 0.5

    def row(self) -> list:
        return [getattr(self, f.name) for f in fields(self)]


def _ref(method, c, h, w, size):
    p = REFERENCE.get((method, c, h, w, size))
    return (p[1], p[0]) if p else (None, None)


def count_baca(c: int, h: int, w: int, l: int) -> CostReport:
    L = h * w
    if not 0 < l <= L:
        raise ValueError(f"agent count {l} must lie in (0, {L}]")
    attn = 8 * L * l * c
    macs = 6 * c * c * L + attn + 2 * L * c
    return CostReport("baca", c, h, w, l, macs, 6 * (c * c + c), attn, *_ref("baca", c, h, w, l))


def count_mhca(c: int, h: int, w: int, n_heads: int) -> CostReport:
    if c % n_heads:
        raise ValueError(f"{c} channels not divisible by {n_heads} heads")
    L = h * w
    attn = 4 * L * L * c
    return CostReport("mhca", c, h, w, n_heads, 8 * c * c * L + attn, 8 * (c * c + c), attn,
                      *_ref("mhca", c, h, w, n_heads))


def count_mhlca(c: int, h: int, w: int, n_heads: int) -> CostReport:
    if c % n_heads:
        raise ValueError(f"{c} channels not divisible by {n_heads} heads")
    L = h * w
    attn = 4 * L * c * c // n_heads + 4 * L * c
    return CostReport("mhlca", c, h, w, n_heads, 8 * c * c * L + attn, 8 * (c * c + c), attn,
                      *_ref("mhlca", c, h, w, n_heads))


# Reference numpy forwards used only for timing.

def _proj(rng, c):
    return rng.standard_normal((c, c)) / math.sqrt(c), np.zeros(c)


def _softmax(x):
    x = x - x.max(axis=-1, keepdims=True)
    np.exp(x, out=x)
    x /= x.sum(axis=-1, keepdims=True)
    return x


class _Weights:
    def __init__(self, c, rng, n=8):
        self.mats = [_proj(rng, c) for _ in range(n)]

    def __getitem__(self, i):
        return self.mats[i]


def _lin(x, wb):
    return x @ wb[0].T + wb[1]


def baca_np(fl, fr, wts, agent_hw):
    """Agent attention both ways on (L, C) token matrices."""
    c = fl.shape[1]
    h, w = agent_hw[2], agent_hw[3]
    ah, aw = agent_hw[0], agent_hw[1]
    s = 1.0 / math.sqrt(c)
    out = None
    # projections: lidar q, k, v = 0, 1, 2; radar q, k, v = 3, 4, 5
    for a, b, iq, ik in ((fl, fr, 0, 4), (fr, fl, 3, 1)):
        q = _lin(a, wts[iq])
        k, v = _lin(b, wts[ik]), _lin(b, wts[ik + 1])
        agents = q.reshape(ah, h // ah, aw, w // aw, c).mean(axis=(1, 3)).reshape(ah * aw, c)
        ctx = _softmax(agents @ k.T * s) @ v
        y = _softmax(q @ agents.T * s) @ ctx
        out = y if out is None else out + y
    return out


def mhca_np(fl, fr, wts, n_heads, chunk=1024):
    """Full multi-head cross attention both ways, query rows processed in chunks."""
    L, c = fl.shape
    d = c // n_heads
    s = 1.0 / math.sqrt(d)
    out = np.zeros_like(fl)
    for a, b, o in ((fl, fr, 0), (fr, fl, 4)):
        q, k, v = _lin(a, wts[o]), _lin(b, wts[o + 1]), _lin(b, wts[o + 2])
        y = np.empty_like(q)
        for hd in range(n_heads):
            sl = slice(hd * d, (hd + 1) * d)
            kh, vh = k[:, sl], v[:, sl]
            for i in range(0, L, chunk):
                y[i:i + chunk, sl] = _softmax(q[i:i + chunk, sl] @ kh.T * s) @ vh
        out += _lin(y, wts[o + 3])
    return out


def mhlca_np(fl, fr, wts, n_heads):
    """Kernelised (elu+1) linear cross attention both ways."""
    L, c = fl.shape
    d = c // n_heads
    out = np.zeros_like(fl)
    phi = lambda x: np.where(x > 0, x + 1.0, np.exp(np.minimum(x, 0.0)))
    for a, b, o in ((fl, fr, 0), (fr, fl, 4)):
        q, k, v = phi(_lin(a, wts[o])), phi(_lin(b, wts[o + 1])), _lin(b, wts[o + 2])
        y = np.empty_like(q)
        for hd in range(n_heads):
            sl = slice(hd * d, (hd + 1) * d)
            kv = k[:, sl].T @ v[:, sl]
            z = q[:, sl] @ k[:, sl].sum(axis=0)
            y[:, sl] = (q[:, sl] @ kv) / z[:, None]
        out += _lin(y, wts[o + 3])
    return out


MIN_SAMPLE_SECONDS = 0.01  # shorter samples are dominated by scheduler jitter


def _timed(fn, repeats: int, warmup: int = 2) -> tuple[float, float, int]:
    for _ in range(warmup):
        fn()
    inner = 1
    while True:
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        if time.perf_counter() - t0 >= MIN_SAMPLE_SECONDS or inner >= 1 << 16:
            break
        inner *= 2  # too fast for the timer; batch calls
    times = []
    for _ in range(repeats):
        t0 = time.perf_counter()
        for _ in range(inner):
            fn()
        times.append((time.perf_counter() - t0) / inner)
    q = statistics.quantiles(times, n=4)
    return statistics.median(times), q[2] - q[0], inner


def bench_wallclock(method: str, shape: tuple[int, int, int], size: int, repeats: int = 20,
                    seed: int = 0) -> CostReport:
    """Analytic counts plus median / IQR seconds per forward (warm-up excluded)."""
    if repeats < 20:
        raise ValueError("at least 20 timed runs are required")
    c, h, w = shape
    rng = np.random.default_rng(seed)
    fl = rng.standard_normal((h * w, c))
    fr = rng.standard_normal((h * w, c))
    wts = _Weights(c, rng)
    if method == "baca":
        side = int(round(math.sqrt(size)))
        if side * side != size or h % side or w % side:
            raise ValueError(f"agent count {size} must be a square dividing the map")
        rep = count_baca(c, h, w, size)
        fn = lambda: baca_np(fl, fr, wts, (side, side, h, w))
    elif method == "mhca":
        rep = count_mhca(c, h, w, size)
        fn = lambda: mhca_np(fl, fr, wts, size)
    elif method == "mhlca":
        rep = count_mhlca(c, h, w, size)
        fn = lambda: mhlca_np(fl, fr, wts, size)
    else:
        raise ValueError(f"unknown method {method!r}")
    rep.wall_median, rep.wall_iqr, _ = _timed(fn, repeats)
    rep.repeats = repeats
    return rep


def reports_csv(reports: list[CostReport]) -> str:
    buf = io.StringIO()
    buf.write(",".join(f.name for f in fields(CostReport)) + "\n")
    for r in reports:
        buf.write(",".join("" if v is None else (f"{v:.6g}" if isinstance(v, float) else str(v))
                           for v in r.row()) + "\n")
    return buf.getvalue()


def _human(n: float | None) -> str:
    if n is None:
        return "-"
    for unit, div in (("G", 1e9), ("M", 1e6), ("K", 1e3)):
        if abs(n) >= div:
            return f"{n / div:.2f}{unit}"
    return f"{n:g}"


def reports_table(reports: list[CostReport]) -> str:
    head = ["method", "C", "HxW", "l/N_h", "MACs", "ref MACs", "params", "ref params", "median s", "note"]
    rows = [head]
    for r in reports:
        rows.append([r.method, str(r.c), f"{r.h}x{r.w}", str(r.size), _human(r.macs), _human(r.ref_macs),
                     _human(r.params), _human(r.ref_params),
                     "-" if r.wall_median is None else f"{r.wall_median:.4g}",
                     ">2x off reference" if r.deviates else ""])
    widths = [max(len(row[i]) for row in rows) for i in range(len(head))]
    return "\n".join("  ".join(x.ljust(wd) for x, wd in zip(row, widths)).rstrip() for row in rows) + "\n"


def stage_reports(stage: int, agent_side: int = 8) -> list[CostReport]:
    c, h, w, nh = STAGES[stage]
    return [count_baca(c, h, w, agent_side * agent_side), count_mhca(c, h, w, nh), count_mhlca(c, h, w, nh)]
