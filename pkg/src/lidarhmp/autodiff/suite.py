"""Finite-difference checks for every primitive the model uses."""
from __future__ import annotations

from typing import Callable

import numpy as np

from . import engine as E
from .gradcheck import grad_check
from .nn import Params, init_attention, init_transformer_layer, multi_head_attention, transformer_layer


def _t(rng: np.random.Generator, *shape: int) -> E.Tensor:
    return E.Tensor(rng.standard_normal(shape), requires_grad=True)


def _away_from_zero(rng: np.random.Generator, *shape: int) -> E.Tensor:
    x = rng.standard_normal(shape)
    x = np.where(np.abs(x) < 1e-2, np.sign(x + 1e-12) * (0.05 + np.abs(x)), x)
    return E.Tensor(x, requires_grad=True)


def _weights(rng, out: E.Tensor) -> E.Tensor:
    return E.Tensor(rng.standard_normal(out.shape))


def _scalarize(rng, out_fn: Callable[[], E.Tensor]) -> Callable[[], E.Tensor]:
    """Contract the output with fixed random weights to get a scalar."""
    w = None

    def fn():
        nonlocal w
        out = out_fn()
        if w is None:
            w = _weights(rng, out)
        return E.sum_(E.mul(out, w))

    return fn


def _case(name: str, rng: np.random.Generator) -> tuple[Callable[[], E.Tensor], list[E.Tensor]]:
    if name == "matmul":
        a, b = _t(rng, 2, 3, 4), _t(rng, 4, 5)
        return _scalarize(rng, lambda: E.matmul(a, b)), [a, b]
    if name == "batched_matmul":
        a, b = _t(rng, 2, 3, 4), _t(rng, 2, 4, 5)
        return _scalarize(rng, lambda: E.matmul(a, b)), [a, b]
    if name == "add":
        a, b = _t(rng, 3, 4), _t(rng, 4)
        return _scalarize(rng, lambda: E.add(a, b)), [a, b]
    if name == "mul":
        a, b = _t(rng, 2, 3, 4), _t(rng, 3, 4)
        return _scalarize(rng, lambda: E.mul(a, b)), [a, b]
    if name == "concat":
        a, b = _t(rng, 2, 3), _t(rng, 2, 4)
        return _scalarize(rng, lambda: E.concat([a, b], axis=1)), [a, b]
    if name == "slice":
        a = _t(rng, 4, 5)
        return _scalarize(rng, lambda: a[1:3, ::2]), [a]
    if name == "reshape":
        a = _t(rng, 2, 6)
        return _scalarize(rng, lambda: E.reshape(a, (3, 4))), [a]
    if name == "transpose":
        a = _t(rng, 2, 3, 4)
        return _scalarize(rng, lambda: E.transpose(a, (2, 0, 1))), [a]
    if name == "relu":
        a = _away_from_zero(rng, 3, 5)
        return _scalarize(rng, lambda: E.relu(a)), [a]
    if name == "softmax":
        a = _t(rng, 3, 5)
        return _scalarize(rng, lambda: E.softmax(a)), [a]
    if name == "layer_norm":
        a, g, b = _t(rng, 3, 6), _t(rng, 6), _t(rng, 6)
        return _scalarize(rng, lambda: E.layer_norm(a, g, b)), [a, g, b]
    if name == "max":
        a = _t(rng, 4, 6)
        return _scalarize(rng, lambda: E.max_(a, axis=1)), [a]
    if name == "masked_max":
        a = _t(rng, 3, 7, 2)
        mask = rng.random((3, 7, 1)) < 0.5
        mask[0] = False  # one empty slice
        return _scalarize(rng, lambda: E.max_(a, axis=1, mask=mask)), [a]
    if name == "mean":
        a = _t(rng, 3, 4)
        return _scalarize(rng, lambda: E.mean(a, axis=0)), [a]
    if name == "sum":
        a = _t(rng, 3, 4)
        return _scalarize(rng, lambda: E.sum_(a, axis=1)), [a]
    if name == "sq_err_sum":
        a, b = _t(rng, 3, 4), _t(rng, 3, 4)
        return (lambda: E.sq_err_sum(a, b)), [a, b]
    if name == "pairwise_sqdist":
        a, b = _t(rng, 2, 5, 3), _t(rng, 2, 4, 3)
        return _scalarize(rng, lambda: E.pairwise_sqdist(a, b)), [a, b]
    if name == "attention":
        p = Params(np.float64)
        init_attention(p, "a", 8, 2, rng)
        q, kv = _t(rng, 3, 8), _t(rng, 5, 8)
        fn = _scalarize(rng, lambda: multi_head_attention(q, kv, kv, 2, p, "a"))
        return fn, [q, kv] + [p[n] for n in p]
    if name == "transformer_layer":
        p = Params(np.float64)
        init_transformer_layer(p, "t", 8, 2, rng)
        x = _t(rng, 2, 4, 8)
        fn = _scalarize(rng, lambda: transformer_layer(x, 2, p, "t"))
        return fn, [x] + [p[n] for n in p]
    raise KeyError(name)


PRIMITIVES = (
    "matmul", "batched_matmul", "add", "mul", "concat", "slice", "reshape", "transpose",
    "relu", "softmax", "layer_norm", "max", "masked_max", "mean", "sum", "sq_err_sum",
    "pairwise_sqdist", "attention", "transformer_layer",
)


def primitive_suite(instances: int = 20, seed: int = 0, eps: float = 1e-6) -> dict[str, float]:
    """Worst relative error per primitive over ``instances`` random draws."""
    rng = np.random.default_rng(seed)
    report = {}
    for name in PRIMITIVES:
        worst = 0.0
        for _ in range(instances):
            fn, inputs = _case(name, rng)
            worst = max(worst, grad_check(fn, inputs, eps=eps))
        report[name] = worst
    return report
