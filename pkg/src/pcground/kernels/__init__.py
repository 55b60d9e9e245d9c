"""Hot kernels with a compiled (Cython) core and a pure-Python fallback.

The compiled module is used when it was built at install time; otherwise the
numpy fallback is selected at import. :func:`use_backend` switches explicitly,
which the tests and the benchmark use to compare both paths.
"""

from __future__ import annotations

from types import ModuleType

from . import _pykernels

try:
    from . import _ckernels  # type: ignore[attr-defined]
except ImportError:  # extension not built
    _ckernels = None

__all__ = [
    "BACKENDS",
    "backend",
    "use_backend",
    "segment_max",
    "axial_max_relative",
    "roll_schedule",
    "rect_iou",
    "rect_iou_matrix",
]

BACKENDS: dict[str, ModuleType] = {"python": _pykernels}
if _ckernels is not None:
    BACKENDS["compiled"] = _ckernels

_active: ModuleType = _ckernels if _ckernels is not None else _pykernels


def backend() -> str:
    return "compiled" if _active is _ckernels and _ckernels is not None else "python"


def use_backend(name: str) -> str:
    """Select ``"compiled"`` or ``"python"``; returns the previous name."""
    global _active
    if name not in BACKENDS:
        raise ValueError(f"backend {name!r} unavailable; have {sorted(BACKENDS)}")
    prev = backend()
    _active = BACKENDS[name]
    return prev


def segment_max(values, segment, n_segments):
    return _active.segment_max(values, segment, n_segments)


def axial_max_relative(x, threshold, step):
    return _active.axial_max_relative(x, threshold, step)


def roll_schedule(h, w, step):
    return _pykernels.roll_schedule(h, w, step)


def rect_iou(a, b):
    return _active.rect_iou(a, b)


def rect_iou_matrix(A, B):
    return _active.rect_iou_matrix(A, B)
