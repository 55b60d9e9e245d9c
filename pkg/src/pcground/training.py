"""Multi-task grounding loss and a small full-batch training loop."""

from __future__ import annotations

import io
import logging
import math
import time
from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, as_tensor, log, no_grad, where
from .eval import grounding_accuracy
from .head import N_REG, HeadOutput, Targets, decode
from .model import Batch, GroundingNet

logger = logging.getLogger(__name__)


class DivergenceError(RuntimeError):
    pass


@dataclass(frozen=True)
class LossConfig:
    beta: float = 0.25
    alpha: float = 2.0  # focal exponent on the prediction
    gamma: float = 4.0  # penalty-reduction exponent on (1 - target)
    lr: float = 1e-2
    steps: int = 2000
    optimizer: str = "gd"  # "gd" or "adam" (decoupled weight decay makes it AdamW)
    weight_decay: float = 0.0
    divergence_limit: float = 1e6

    def __post_init__(self):
        if self.beta < 0:
            raise ValueError("beta must be non-negative")
        if self.optimizer not in ("gd", "adam"):
            raise ValueError(f"unknown optimizer {self.optimizer!r}")


def focal_heatmap_loss(pred: Tensor, target, alpha: float = 2.0, gamma: float = 4.0) -> Tensor:
    """Penalty-reduced pixelwise focal loss normalised by the number of peaks."""
    pred = as_tensor(pred)
    t = np.asarray(getattr(target, "data", target), dtype=np.float64)
    if pred.shape != t.shape:
        raise ValueError(f"heatmap shapes differ: {pred.shape} vs {t.shape}")
    p = pred.data
    if p.min() <= 0.0 or p.max() >= 1.0:
        raise ValueError("heatmap predictions must lie strictly inside (0, 1)")
    pos = t == 1.0
    n_pos = max(int(pos.sum()), 1)
    one_minus = 1.0 - pred
    pos_term = (one_minus ** alpha) * log(pred)
    neg_term = (pred ** alpha) * log(one_minus) * ((1.0 - t) ** gamma)
    per_pixel = where(pos, pos_term, neg_term)
    return -per_pixel.sum() * (1.0 / n_pos)


def smooth_l1(pred: Tensor, target) -> Tensor:
    """Mean of ``0.5 r^2`` for ``|r| <= 1`` else ``|r| - 0.5``."""
    pred = as_tensor(pred)
    t = np.asarray(getattr(target, "data", target), dtype=np.float64)
    if pred.shape != t.shape:
        raise ValueError(f"shapes differ: {pred.shape} vs {t.shape}")
    if pred.size == 0:
        return Tensor(0.0)
    r = pred - t
    quad = np.abs(r.data) <= 1.0
    elem = where(quad, 0.5 * r * r, r.abs() - 0.5)
    return elem.mean()


def _regression_at_peaks(reg: Tensor, targets: list[Targets]) -> tuple[Tensor, np.ndarray]:
    b, r, c = [], [], []
    for i, t in enumerate(targets):
        for pr, pc in t.peaks:
            b.append(i), r.append(pr), c.append(pc)
    b, r, c = np.array(b, dtype=np.int64), np.array(r, dtype=np.int64), np.array(c, dtype=np.int64)
    if reg.ndim == 3:
        pred = reg[:, r, c].swapaxes(0, 1)
    else:
        pred = reg[b, :, r, c]
    want = np.vstack([t.peak_values for t in targets]) if len(b) else np.zeros((0, N_REG))
    return pred, want


def loss_terms(out: HeadOutput, targets: list[Targets], config: LossConfig) -> tuple[Tensor, Tensor]:
    """(heatmap loss over all peaks of the batch, summed per-channel regression loss)."""
    hm = out.heatmap
    target = targets[0].heatmap if hm.ndim == 3 else np.stack([t.heatmap for t in targets])
    hm_loss = focal_heatmap_loss(hm, target, config.alpha, config.gamma)
    pred, want = _regression_at_peaks(out.regression, targets)
    reg_loss = Tensor(0.0)
    for ch in range(N_REG):
        if len(want):
            reg_loss = reg_loss + smooth_l1(pred[:, ch], want[:, ch])
    return hm_loss, reg_loss


def total_loss(out: HeadOutput, targets: list[Targets], config: LossConfig = LossConfig()) -> Tensor:
    hm_loss, reg_loss = loss_terms(out, targets, config)
    return hm_loss + config.beta * reg_loss


class Optimizer:
    """Gradient descent or Adam with a cosine-annealed step size."""

    def __init__(self, params: dict[str, Tensor], config: LossConfig, total_steps: int):
        self.params = params
        self.config = config
        self.total = max(total_steps, 1)
        self.t = 0
        self.m = {k: np.zeros_like(p.data) for k, p in params.items()}
        self.v = {k: np.zeros_like(p.data) for k, p in params.items()}

    def lr(self) -> float:
        return 0.5 * self.config.lr * (1.0 + math.cos(math.pi * min(self.t, self.total) / self.total))

    def step(self) -> None:
        lr = self.lr()
        self.t += 1
        b1, b2, eps = 0.9, 0.999, 1e-8
        for k, p in self.params.items():
            g = p.grad
            if g is None:
                continue
            if self.config.weight_decay:
                p.data *= 1.0 - lr * self.config.weight_decay
            if self.config.optimizer == "gd":
                p.data -= lr * g
            else:
                self.m[k] = b1 * self.m[k] + (1 - b1) * g
                self.v[k] = b2 * self.v[k] + (1 - b2) * g * g
                mh = self.m[k] / (1 - b1 ** self.t)
                vh = self.v[k] / (1 - b2 ** self.t)
                p.data -= lr * mh / (np.sqrt(vh) + eps)

    def zero_grad(self) -> None:
        for p in self.params.values():
            p.grad = None


@dataclass
class TrainResult:
    losses: list[tuple[int, float, float, float]] = field(default_factory=list)
    accuracy: list[tuple[int, float]] = field(default_factory=list)
    seconds: float = 0.0

    def csv(self) -> str:
        buf = io.StringIO()
        buf.write("step,L_hm,L_reg,L_total\n")
        for s, a, b, c in self.losses:
            buf.write(f"{s},{a:.10g},{b:.10g},{c:.10g}\n")
        return buf.getvalue()


def predict(model: GroundingNet, batch: Batch, max_boxes: int = 1, score_threshold: float = 0.0):
    with no_grad():
        out = model(batch)
    hm, reg = out.heatmap.data, out.regression.data
    return [decode(hm[i], reg[i], model.config.grid, score_threshold, max_boxes) for i in range(len(batch))]


def train_overfit(model: GroundingNet, batch: Batch, config: LossConfig = LossConfig(),
                  steps: int | None = None, eval_every: int = 0, referred=None,
                  target_accuracy: float | None = None, minibatch: int | None = None,
                  seed: int = 0) -> TrainResult:
    """Train ``model`` in place on one small batch; returns the loss curve.

    With ``eval_every`` and ``referred`` (per-sample ground-truth box lists),
    grounding accuracy is recorded and training stops early once it reaches
    ``target_accuracy``.
    """
    steps = config.steps if steps is None else steps
    params = model.parameters()
    opt = Optimizer(params, config, steps)
    result = TrainResult()
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    n = len(batch)
    for step in range(steps):
        if minibatch and minibatch < n:
            idx = np.sort(rng.choice(n, minibatch, replace=False))
            sub = Batch([batch.lidar[i] for i in idx], [batch.radar[i] for i in idx],
                        batch.tokens[idx], [batch.targets[i] for i in idx])
        else:
            sub = batch
        opt.zero_grad()
        out = model(sub)
        hm_loss, reg_loss = loss_terms(out, sub.targets, config)
        loss = hm_loss + config.beta * reg_loss
        lv = float(loss.data)
        if not math.isfinite(lv) or lv > config.divergence_limit:
            raise DivergenceError(f"loss {lv} at step {step}")
        result.losses.append((step, float(hm_loss.data), float(reg_loss.data), lv))
        loss.backward()
        opt.step()
        if eval_every and referred is not None and ((step + 1) % eval_every == 0 or step + 1 == steps):
            preds = predict(model, batch, max_boxes=max(len(r) for r in referred))
            acc = grounding_accuracy(preds, referred)
            result.accuracy.append((step + 1, acc))
            logger.info("step %d loss %.4f accuracy %.3f", step + 1, lv, acc)
            if target_accuracy is not None and acc >= target_accuracy:
                break
    result.seconds = time.perf_counter() - t0
    return result
