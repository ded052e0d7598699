"""Parameter store and the layers built from engine primitives."""
from __future__ import annotations

from collections.abc import Iterator

import numpy as np

from .engine import ShapeError, Tensor, concat, layer_norm, matmul, relu, reshape, softmax, swapaxes


class ConfigError(ValueError):
    """Invalid model or layer configuration."""


class Params:
    """Ordered name -> Tensor store; every name registered once."""

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self._store: dict[str, Tensor] = {}

    def add(self, name: str, value: np.ndarray) -> Tensor:
        if name in self._store:
            raise KeyError(f"parameter {name!r} registered twice")
        t = Tensor(np.asarray(value, dtype=self.dtype), requires_grad=True, name=name)
        self._store[name] = t
        return t

    def __getitem__(self, name: str) -> Tensor:
        return self._store[name]

    def __contains__(self, name: str) -> bool:
        return name in self._store

    def __iter__(self) -> Iterator[str]:
        return iter(self._store)

    def __len__(self) -> int:
        return len(self._store)

    def items(self):
        return self._store.items()

    def names(self) -> list[str]:
        return list(self._store)

    def zero_grad(self) -> None:
        for t in self._store.values():
            t.grad = None

    def num_values(self) -> int:
        return sum(t.data.size for t in self._store.values())

    def astype(self, dtype) -> "Params":
        out = Params(dtype)
        for name, t in self._store.items():
            out.add(name, t.data)
        return out

    def copy(self) -> "Params":
        return self.astype(self.dtype)

    def state(self) -> dict[str, np.ndarray]:
        return {k: t.data for k, t in self._store.items()}


# -- initializers ---------------------------------------------------------
def init_linear(params: Params, prefix: str, d_in: int, d_out: int, rng: np.random.Generator,
                zero: bool = False) -> None:
    bound = 1.0 / np.sqrt(d_in)
    w = np.zeros((d_in, d_out)) if zero else rng.uniform(-bound, bound, size=(d_in, d_out))
    params.add(f"{prefix}.w", w)
    params.add(f"{prefix}.b", np.zeros(d_out))


def init_mlp(params: Params, prefix: str, widths: list[int], rng: np.random.Generator) -> None:
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        init_linear(params, f"{prefix}.{i}", a, b, rng)


def init_layer_norm(params: Params, prefix: str, d: int) -> None:
    params.add(f"{prefix}.g", np.ones(d))
    params.add(f"{prefix}.b", np.zeros(d))


def init_attention(params: Params, prefix: str, d: int, heads: int, rng: np.random.Generator) -> None:
    if d % heads:
        raise ConfigError(f"width {d} is not divisible by {heads} heads")
    for p in ("q", "k", "v", "o"):
        init_linear(params, f"{prefix}.{p}", d, d, rng)


def init_transformer_layer(params: Params, prefix: str, d: int, heads: int,
                           rng: np.random.Generator) -> None:
    init_layer_norm(params, f"{prefix}.ln1", d)
    init_attention(params, f"{prefix}.attn", d, heads, rng)
    init_layer_norm(params, f"{prefix}.ln2", d)
    init_linear(params, f"{prefix}.ff1", d, 2 * d, rng)
    init_linear(params, f"{prefix}.ff2", 2 * d, d, rng)


# -- forward --------------------------------------------------------------
def linear(x: Tensor, params: Params, prefix: str) -> Tensor:
    return matmul(x, params[f"{prefix}.w"]) + params[f"{prefix}.b"]


def mlp(x: Tensor, params: Params, prefix: str, n_layers: int) -> Tensor:
    """Linear layers with ReLU between them (none after the last)."""
    for i in range(n_layers):
        x = linear(x, params, f"{prefix}.{i}")
        if i < n_layers - 1:
            x = relu(x)
    return x


def ln(x: Tensor, params: Params, prefix: str) -> Tensor:
    return layer_norm(x, params[f"{prefix}.g"], params[f"{prefix}.b"])


def _split_heads(x: Tensor, heads: int) -> Tensor:
    *lead, length, d = x.shape
    x = reshape(x, (*lead, length, heads, d // heads))
    return swapaxes(x, -2, -3)  # (..., heads, L, dh)


def _merge_heads(x: Tensor) -> Tensor:
    x = swapaxes(x, -2, -3)  # (..., L, heads, dh)
    *lead, length, heads, dh = x.shape
    return reshape(x, (*lead, length, heads * dh))


def multi_head_attention(query_in: Tensor, key_in: Tensor, value_in: Tensor, heads: int,
                         params: Params, prefix: str) -> Tensor:
    """Scaled dot-product attention of (..., Lq, d) queries over (..., Lk, d) keys."""
    d = query_in.shape[-1]
    if d % heads:
        raise ConfigError(f"width {d} is not divisible by {heads} heads")
    if key_in.shape[-1] != d or value_in.shape[-1] != d or key_in.shape[:-1] != value_in.shape[:-1]:
        raise ShapeError(
            f"attention: query {query_in.shape}, key {key_in.shape}, value {value_in.shape}"
        )
    q = _split_heads(linear(query_in, params, f"{prefix}.q"), heads)
    k = _split_heads(linear(key_in, params, f"{prefix}.k"), heads)
    v = _split_heads(linear(value_in, params, f"{prefix}.v"), heads)
    scale = 1.0 / np.sqrt(d // heads)
    logits = matmul(q, swapaxes(k, -1, -2)) * scale
    attn = softmax(logits)
    out = _merge_heads(matmul(attn, v))
    return linear(out, params, f"{prefix}.o")


def transformer_layer(x: Tensor, heads: int, params: Params, prefix: str) -> Tensor:
    """Pre-norm block over the second-to-last axis of (..., L, d)."""
    h = ln(x, params, f"{prefix}.ln1")
    x = x + multi_head_attention(h, h, h, heads, params, f"{prefix}.attn")
    h = ln(x, params, f"{prefix}.ln2")
    h = linear(relu(linear(h, params, f"{prefix}.ff1")), params, f"{prefix}.ff2")
    return x + h


def transformer_over_axis(x: Tensor, axis: int, heads: int, params: Params, prefix: str) -> Tensor:
    """Run ``transformer_layer`` with ``axis`` as the token axis."""
    last = x.ndim - 2
    axis = axis % x.ndim
    if axis == last:
        return transformer_layer(x, heads, params, prefix)
    x = swapaxes(x, axis, last)
    x = transformer_layer(x, heads, params, prefix)
    return swapaxes(x, axis, last)


__all__ = [
    "ConfigError", "Params", "concat", "init_attention", "init_layer_norm", "init_linear",
    "init_mlp", "init_transformer_layer", "linear", "ln", "mlp", "multi_head_attention",
    "transformer_layer", "transformer_over_axis",
]
