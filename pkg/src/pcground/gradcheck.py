"""Central finite-difference verification of tape adjoints."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .autodiff import NonFiniteError, Tensor


def numerical_grad(f: Callable[[], Tensor], x: Tensor, eps: float) -> np.ndarray:
    grad = np.zeros_like(x.data)
    flat = x.data.reshape(-1)
    g = grad.reshape(-1)
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(f().data)
        flat[i] = orig - eps
        fm = float(f().data)
        flat[i] = orig
        if not (np.isfinite(fp) and np.isfinite(fm)):
            raise NonFiniteError(f"f is not finite near coordinate {i}")
        g[i] = (fp - fm) / (2.0 * eps)
    return grad


def grad_check(f: Callable[..., Tensor], x: Tensor | Sequence[Tensor], eps: float = 1e-6) -> float:
    """Max over coordinates of ``|adjoint - central difference| / max(1, |central difference|)``.

    ``f`` is called with no arguments and must close over ``x`` (a leaf or a
    list of leaves), returning a scalar tensor.
    """
    xs = [x] if isinstance(x, Tensor) else list(x)
    for t in xs:
        t.requires_grad = True
        t.grad = None
    out = f()
    if out.size != 1:
        raise ValueError("grad_check needs a scalar-valued function")
    out.backward()
    worst = 0.0
    for t in xs:
        analytic = t.grad if t.grad is not None else np.zeros_like(t.data)
        numeric = numerical_grad(f, t, eps)
        err = np.abs(analytic - numeric) / np.maximum(1.0, np.abs(numeric))
        worst = max(worst, float(err.max(initial=0.0)))
    return worst
