"""Central finite-difference gradient checking."""
from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from .engine import Tensor


def rel_error(analytic: np.ndarray, numeric: np.ndarray, scale: float = 0.0) -> float:
    """max|a - b| / max(max|a|, max|b|, scale, 1e-8)."""
    a = np.asarray(analytic, dtype=np.float64)
    b = np.asarray(numeric, dtype=np.float64)
    denom = max(np.abs(a).max(initial=0.0), np.abs(b).max(initial=0.0), scale, 1e-8)
    return float(np.abs(a - b).max(initial=0.0) / denom)


def numeric_grad(fn: Callable[[], Tensor], x: Tensor, eps: float = 1e-6,
                 coords: Sequence[int] | None = None) -> np.ndarray:
    """Central differences of scalar ``fn()`` w.r.t. ``x`` (flat coords, in place).

    Coordinates not listed in ``coords`` are left as NaN.
    """
    flat = x.data.reshape(-1)
    out = np.full(flat.shape, np.nan)
    idx = range(flat.size) if coords is None else coords
    for i in idx:
        orig = flat[i]
        flat[i] = orig + eps
        fp = float(fn().data)
        flat[i] = orig - eps
        fm = float(fn().data)
        flat[i] = orig
        out[i] = (fp - fm) / (2 * eps)
    return out.reshape(x.shape)


def grad_check(fn: Callable[[], Tensor], inputs: Sequence[Tensor], eps: float = 1e-6,
               max_coords: int | None = None, rng: np.random.Generator | None = None) -> float:
    """Max relative error between backprop and central differences.

    ``fn`` must rebuild its graph from ``inputs`` on every call and return a
    scalar. Inputs should be float64. With ``max_coords`` only a random
    subset of coordinates per input is probed.

    The error is normalized by the largest gradient entry over all inputs,
    so tensors whose true gradient is structurally zero (e.g. a key bias
    under softmax) are compared against the gradient's scale, not 1e-8.
    """
    for t in inputs:
        t.requires_grad = True
        t.grad = None
    out = fn()
    out.backward()
    analytic = [np.zeros_like(t.data) if t.grad is None else t.grad.copy() for t in inputs]
    scale = max(np.abs(a).max(initial=0.0) for a in analytic)
    worst = 0.0
    for t, a in zip(inputs, analytic):
        coords = None
        if max_coords is not None and t.data.size > max_coords:
            rng = rng or np.random.default_rng(0)
            coords = np.sort(rng.choice(t.data.size, size=max_coords, replace=False))
        n = numeric_grad(fn, t, eps, coords)
        if coords is not None:
            a = a.reshape(-1)[coords]
            n = n.reshape(-1)[coords]
        worst = max(worst, rel_error(a, n, scale))
    return worst
