"""Reverse-mode differentiation over numpy arrays.

Each op computes its forward value eagerly and, when any input requires a
gradient, records a closure that pushes the upstream gradient into its
parents. ``Tensor.backward`` walks the graph in reverse topological order.

Broadcasting follows numpy; gradients are summed back to the input shape.
In practice the model only relies on leading-batch broadcasting (biases,
positional encodings) plus the keep-dims pattern used by ``max``.
"""
from __future__ import annotations

import contextlib
from typing import Callable, Sequence

import numpy as np


class ShapeError(ValueError):
    """Operands have incompatible shapes."""


_GRAD_ENABLED = True


@contextlib.contextmanager
def no_grad():
    global _GRAD_ENABLED
    prev = _GRAD_ENABLED
    _GRAD_ENABLED = False
    try:
        yield
    finally:
        _GRAD_ENABLED = prev


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_backward", "name")

    def __init__(self, data, requires_grad: bool = False, name: str | None = None):
        if isinstance(data, Tensor):
            data = data.data
        arr = np.asarray(data)
        if arr.dtype.kind != "f":
            arr = arr.astype(np.float32)
        self.data = arr
        self.grad: np.ndarray | None = None
        self.requires_grad = requires_grad
        self._parents: tuple[Tensor, ...] = ()
        self._backward: Callable[[np.ndarray], None] | None = None
        self.name = name

    # -- basic properties -------------------------------------------------
    @property
    def shape(self) -> tuple[int, ...]:
        return self.data.shape

    @property
    def ndim(self) -> int:
        return self.data.ndim

    @property
    def dtype(self):
        return self.data.dtype

    def numpy(self) -> np.ndarray:
        return self.data

    def __repr__(self) -> str:
        tag = f" name={self.name!r}" if self.name else ""
        return f"Tensor(shape={self.shape}, dtype={self.dtype}{tag})"

    def zero_grad(self) -> None:
        self.grad = None

    def _accum(self, g: np.ndarray) -> None:
        if self.grad is None:
            self.grad = np.array(g, dtype=self.data.dtype, copy=True)
        else:
            self.grad += g

    # -- graph traversal --------------------------------------------------
    def backward(self, grad: np.ndarray | None = None) -> None:
        if grad is None:
            if self.data.size != 1:
                raise ShapeError(f"backward() without a seed needs a scalar, got shape {self.shape}")
            grad = np.ones_like(self.data)
        order = _topo_order(self)
        grads: dict[int, np.ndarray] = {id(self): np.asarray(grad, dtype=self.data.dtype)}
        for node in order:
            g = grads.pop(id(node), None)
            if g is None:
                continue
            if node._backward is None:
                node._accum(g)
                continue
            for parent, pg in node._backward(g):
                if pg is None or not parent.requires_grad:
                    continue
                key = id(parent)
                if key in grads:
                    grads[key] = grads[key] + pg
                else:
                    grads[key] = pg
        # leaves reached through the dict are handled in the loop above

    # -- operator sugar ---------------------------------------------------
    def __add__(self, other):
        return add(self, other)

    def __radd__(self, other):
        return add(other, self)

    def __sub__(self, other):
        return sub(self, other)

    def __rsub__(self, other):
        return sub(other, self)

    def __mul__(self, other):
        return mul(self, other)

    def __rmul__(self, other):
        return mul(other, self)

    def __neg__(self):
        return mul(self, -1.0)

    def __matmul__(self, other):
        return matmul(self, other)

    def __getitem__(self, idx):
        return getitem(self, idx)

    def reshape(self, *shape):
        if len(shape) == 1 and isinstance(shape[0], (tuple, list)):
            shape = tuple(shape[0])
        return reshape(self, shape)

    def transpose(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (tuple, list)):
            axes = tuple(axes[0])
        return transpose(self, axes)

    def sum(self, axis=None):
        return sum_(self, axis)

    def mean(self, axis=None):
        return mean(self, axis)


def _topo_order(root: Tensor) -> list[Tensor]:
    # iterative DFS; parents visited in recorded order so traversal is fixed
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(root, False)]
    while stack:
        node, done = stack.pop()
        if done:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in reversed(node._parents):
            if p.requires_grad and id(p) not in seen:
                stack.append((p, False))
    order.reverse()
    return order


def as_tensor(x, like: Tensor | None = None) -> Tensor:
    if isinstance(x, Tensor):
        return x
    dtype = like.dtype if like is not None else None
    return Tensor(np.asarray(x, dtype=dtype))


def _make(data: np.ndarray, parents: Sequence[Tensor], backward) -> Tensor:
    out = Tensor(data)
    if _GRAD_ENABLED and any(p.requires_grad for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._backward = backward
    return out


def unbroadcast(g: np.ndarray, shape: tuple[int, ...]) -> np.ndarray:
    """Sum ``g`` down to ``shape`` after numpy broadcasting."""
    if g.shape == shape:
        return g
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, n in enumerate(shape) if n == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def _check_broadcast(a: Tensor, b: Tensor, op: str) -> None:
    try:
        np.broadcast_shapes(a.shape, b.shape)
    except ValueError:
        raise ShapeError(f"{op}: cannot broadcast shapes {a.shape} and {b.shape}") from None


# -- elementwise ----------------------------------------------------------
def add(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _check_broadcast(a, b, "add")

    def backward(g):
        return ((a, unbroadcast(g, a.shape)), (b, unbroadcast(g, b.shape)))

    return _make(a.data + b.data, (a, b), backward)


def sub(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _check_broadcast(a, b, "sub")

    def backward(g):
        return ((a, unbroadcast(g, a.shape)), (b, unbroadcast(-g, b.shape)))

    return _make(a.data - b.data, (a, b), backward)


def mul(a, b) -> Tensor:
    a = as_tensor(a, b if isinstance(b, Tensor) else None)
    b = as_tensor(b, a)
    _check_broadcast(a, b, "mul")

    def backward(g):
        ga = unbroadcast(g * b.data, a.shape) if a.requires_grad else None
        gb = unbroadcast(g * a.data, b.shape) if b.requires_grad else None
        return ((a, ga), (b, gb))

    return _make(a.data * b.data, (a, b), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0

    def backward(g):
        return ((x, g * mask),)

    return _make(np.where(mask, x.data, 0).astype(x.dtype, copy=False), (x,), backward)


# -- linear algebra -------------------------------------------------------
def matmul(a, b) -> Tensor:
    a = as_tensor(a)
    b = as_tensor(b, a)
    if a.ndim < 2 or b.ndim < 2 or a.shape[-1] != b.shape[-2]:
        raise ShapeError(f"matmul: incompatible shapes {a.shape} and {b.shape}")
    try:
        np.broadcast_shapes(a.shape[:-2], b.shape[:-2])
    except ValueError:
        raise ShapeError(f"matmul: batch dims of {a.shape} and {b.shape} do not broadcast") from None

    if b.ndim == 2:
        # (..., m, k) @ (k, n): one flat GEMM each way
        k, n = b.shape
        a2 = a.data.reshape(-1, k)

        def backward(g):
            g2 = g.reshape(-1, n)
            ga = (g2 @ b.data.T).reshape(a.shape) if a.requires_grad else None
            gb = a2.T @ g2 if b.requires_grad else None
            return ((a, ga), (b, gb))

        return _make((a2 @ b.data).reshape(*a.shape[:-1], n), (a, b), backward)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = unbroadcast(g @ np.swapaxes(b.data, -1, -2), a.shape)
        if b.requires_grad:
            gb = unbroadcast(np.swapaxes(a.data, -1, -2) @ g, b.shape)
        return ((a, ga), (b, gb))

    return _make(a.data @ b.data, (a, b), backward)


# -- shape manipulation ---------------------------------------------------
def reshape(x: Tensor, shape) -> Tensor:
    try:
        out = x.data.reshape(shape)
    except ValueError:
        raise ShapeError(f"reshape: cannot reshape {x.shape} into {tuple(shape)}") from None

    def backward(g):
        return ((x, g.reshape(x.shape)),)

    return _make(out, (x,), backward)


def transpose(x: Tensor, axes) -> Tensor:
    axes = tuple(axes)
    if sorted(a % x.ndim for a in axes) != list(range(x.ndim)):
        raise ShapeError(f"transpose: axes {axes} invalid for shape {x.shape}")
    inv = np.argsort([a % x.ndim for a in axes])

    def backward(g):
        return ((x, np.transpose(g, inv)),)

    return _make(np.transpose(x.data, axes), (x,), backward)


def swapaxes(x: Tensor, a: int, b: int) -> Tensor:
    axes = list(range(x.ndim))
    axes[a], axes[b] = axes[b], axes[a]
    return transpose(x, axes)


def getitem(x: Tensor, idx) -> Tensor:
    out = x.data[idx]

    def backward(g):
        full = np.zeros_like(x.data)
        np.add.at(full, idx, g)
        return ((x, full),)

    return _make(np.array(out, copy=True), (x,), backward)


def concat(tensors: Sequence[Tensor], axis: int = 0) -> Tensor:
    tensors = [as_tensor(t) for t in tensors]
    ax = axis % tensors[0].ndim
    for t in tensors[1:]:
        if t.ndim != tensors[0].ndim or any(
            t.shape[i] != tensors[0].shape[i] for i in range(t.ndim) if i != ax
        ):
            raise ShapeError(
                f"concat: shapes {[u.shape for u in tensors]} disagree off axis {axis}"
            )
    sizes = np.cumsum([t.shape[ax] for t in tensors])[:-1]

    def backward(g):
        return tuple(zip(tensors, np.split(g, sizes, axis=ax)))

    return _make(np.concatenate([t.data for t in tensors], axis=ax), tensors, backward)


# -- reductions -----------------------------------------------------------
def sum_(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    out = x.data.sum(axis=axis, keepdims=keepdims)

    def backward(g):
        if axis is not None and not keepdims:
            g = np.expand_dims(g, axis)
        return ((x, np.broadcast_to(g, x.shape).copy()),)

    return _make(np.asarray(out), (x,), backward)


def mean(x: Tensor, axis=None, keepdims: bool = False) -> Tensor:
    if axis is None:
        n = x.data.size
    else:
        axes = (axis,) if isinstance(axis, int) else tuple(axis)
        n = int(np.prod([x.shape[a] for a in axes]))
    return mul(sum_(x, axis, keepdims), 1.0 / n)


def max_(x: Tensor, axis: int, mask: np.ndarray | None = None, keepdims: bool = False) -> Tensor:
    """Max over ``axis``; the gradient goes to the first maximal entry.

    ``mask`` (broadcastable to ``x``) excludes entries. Slices with no
    admissible entry yield 0 and receive no gradient.
    """
    ax = axis % x.ndim
    data = x.data
    if mask is not None:
        mask = np.broadcast_to(mask, data.shape)
        data = np.where(mask, data, -np.inf)
    idx = np.argmax(data, axis=ax)  # first index on ties
    idx_k = np.expand_dims(idx, ax)
    out = np.take_along_axis(data, idx_k, axis=ax)
    if mask is not None:
        valid = np.take_along_axis(mask, idx_k, axis=ax)
        out = np.where(valid, out, 0).astype(x.dtype, copy=False)
    else:
        valid = None
    if not keepdims:
        out = np.squeeze(out, axis=ax)

    def backward(g):
        if not keepdims:
            g = np.expand_dims(g, ax)
        if valid is not None:
            g = np.where(valid, g, 0)
        full = np.zeros_like(x.data)
        np.put_along_axis(full, idx_k, g, axis=ax)
        return ((x, full),)

    return _make(np.ascontiguousarray(out), (x,), backward)


def min_(x: Tensor, axis: int, mask: np.ndarray | None = None, keepdims: bool = False) -> Tensor:
    return mul(max_(mul(x, -1.0), axis, mask, keepdims), -1.0)


def sq_err_sum(a: Tensor, b, axis=None) -> Tensor:
    """sum((a - b)^2) over ``axis`` (all axes when None)."""
    b = as_tensor(b, a)
    if a.shape != b.shape:
        raise ShapeError(f"sq_err_sum: shapes {a.shape} and {b.shape} differ")
    diff = a.data - b.data
    out = np.asarray((diff * diff).sum(axis=axis))

    def backward(g):
        if axis is not None:
            g = np.expand_dims(g, axis)
        g2 = 2.0 * g * diff
        return ((a, g2), (b, -g2))

    return _make(out.astype(a.dtype, copy=False), (a, b), backward)


# -- normalization / attention pieces ------------------------------------
def softmax(x: Tensor) -> Tensor:
    z = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(z)
    s = e / e.sum(axis=-1, keepdims=True)

    def backward(g):
        return ((x, s * (g - (g * s).sum(axis=-1, keepdims=True))),)

    return _make(s, (x,), backward)


def layer_norm(x: Tensor, gamma: Tensor, beta: Tensor, eps: float = 1e-5) -> Tensor:
    d = x.shape[-1]
    if gamma.shape != (d,) or beta.shape != (d,):
        raise ShapeError(
            f"layer_norm: gamma {gamma.shape} / beta {beta.shape} must be ({d},) for input {x.shape}"
        )
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gamma.data + beta.data

    def backward(g):
        gx = None
        if x.requires_grad:
            gh = g * gamma.data
            gx = inv * (gh - gh.mean(axis=-1, keepdims=True)
                        - xhat * (gh * xhat).mean(axis=-1, keepdims=True))
        lead = tuple(range(g.ndim - 1))
        ggamma = (g * xhat).sum(axis=lead) if gamma.requires_grad else None
        gbeta = g.sum(axis=lead) if beta.requires_grad else None
        return ((x, gx), (gamma, ggamma), (beta, gbeta))

    return _make(out.astype(x.dtype, copy=False), (x, gamma, beta), backward)


def pairwise_sqdist(a: Tensor, b) -> Tensor:
    """(..., n, c) x (..., m, c) -> (..., n, m) squared Euclidean distances.

    Uses |a|^2 + |b|^2 - 2 a.b; negative round-off is clamped to zero.
    """
    b = as_tensor(b, a)
    if a.shape[:-2] != b.shape[:-2] or a.shape[-1] != b.shape[-1]:
        raise ShapeError(f"pairwise_sqdist: shapes {a.shape} and {b.shape} incompatible")
    aa = (a.data * a.data).sum(axis=-1)[..., :, None]
    bb = (b.data * b.data).sum(axis=-1)[..., None, :]
    out = np.maximum(aa + bb - 2.0 * (a.data @ np.swapaxes(b.data, -1, -2)), 0)

    def backward(g):
        ga = gb = None
        if a.requires_grad:
            ga = 2.0 * (g.sum(axis=-1)[..., None] * a.data - g @ b.data)
        if b.requires_grad:
            gb = 2.0 * (g.sum(axis=-2)[..., None] * b.data - np.swapaxes(g, -1, -2) @ a.data)
        return ((a, ga), (b, gb))

    return _make(out.astype(a.dtype, copy=False), (a, b), backward)
