from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .nn import Params


class TrainingDivergence(FloatingPointError):
    """A gradient contained NaN or inf."""


@dataclass
class AdamState:
    lr: float = 1e-4
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    step: int = 0
    m: dict[str, np.ndarray] = field(default_factory=dict)
    v: dict[str, np.ndarray] = field(default_factory=dict)


def adam_step(params: Params, state: AdamState) -> None:
    """Bias-corrected Adam update using the ``.grad`` buffers of ``params``.

    Parameters without a gradient are treated as having a zero gradient.
    All gradients are screened before any parameter is touched.
    """
    grads = {}
    for name, t in params.items():
        g = t.grad if t.grad is not None else np.zeros_like(t.data)
        if g.shape != t.data.shape:
            raise ValueError(f"gradient for {name!r} has shape {g.shape}, expected {t.data.shape}")
        if not np.all(np.isfinite(g)):
            raise TrainingDivergence(f"non-finite gradient in {name!r} at step {state.step + 1}")
        grads[name] = g

    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for name, t in params.items():
        g = grads[name]
        m = state.m.get(name)
        if m is None:
            m = state.m[name] = np.zeros_like(t.data)
            state.v[name] = np.zeros_like(t.data)
        v = state.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        update = state.lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
        t.data -= update.astype(t.data.dtype, copy=False)
