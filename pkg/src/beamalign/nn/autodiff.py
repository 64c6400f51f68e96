"""Eager reverse-mode autodiff over float64 numpy arrays.

Every op computes its value immediately and, while gradients are enabled,
records a vector-Jacobian closure.  :func:`backward` walks the recorded
graph in reverse topological order and accumulates gradients into every
reachable :class:`Tensor` with ``requires_grad``.

The op set is deliberately small: elementwise arithmetic with numpy
broadcasting, 2-D matmul, reductions, slicing/concat, the activations used
by the sensing networks, and one fused primitive for applying a constant
complex matrix to a batch of real-stacked complex vectors.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Tensor",
    "GradientError",
    "no_grad",
    "grad_enabled",
    "constant",
    "add",
    "sub",
    "mul",
    "div",
    "neg",
    "matmul",
    "sum_",
    "mean_",
    "concat",
    "narrow",
    "tile_rows",
    "sigmoid",
    "tanh_",
    "relu",
    "sqrt_",
    "square",
    "cplx_matvec",
    "backward",
]

_GRAD_ENABLED = True


class GradientError(RuntimeError):
    """Raised on malformed backward passes (non-scalar loss, missing grads)."""


class no_grad:
    """Context manager that disables graph recording (forward-only mode)."""

    def __enter__(self):
        global _GRAD_ENABLED
        self._prev = _GRAD_ENABLED
        _GRAD_ENABLED = False
        return self

    def __exit__(self, *exc):
        global _GRAD_ENABLED
        _GRAD_ENABLED = self._prev
        return False


def grad_enabled() -> bool:
    return _GRAD_ENABLED


class Tensor:
    """A float64 array plus an optional gradient slot of identical shape."""

    __slots__ = ("value", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, value, requires_grad: bool = False):
        self.value = np.asarray(value, dtype=np.float64)
        self.grad: np.ndarray | None = None
        self.requires_grad = bool(requires_grad)
        self._parents: tuple[Tensor, ...] = ()
        self._vjp = None

    @property
    def shape(self):
        return self.value.shape

    def zero_grad(self) -> None:
        self.grad = None

    def __repr__(self):
        return f"Tensor(shape={self.value.shape}, requires_grad={self.requires_grad})"

    # Arithmetic sugar; the free functions do the real work.
    def __add__(self, other):
        return add(self, other)

    def __sub__(self, other):
        return sub(self, other)

    def __mul__(self, other):
        return mul(self, other)

    def __truediv__(self, other):
        return div(self, other)

    def __neg__(self):
        return neg(self)

    def __matmul__(self, other):
        return matmul(self, other)


def constant(x) -> Tensor:
    return Tensor(x, requires_grad=False)


def _as_tensor(x) -> Tensor:
    return x if isinstance(x, Tensor) else Tensor(x)


def _make(value, parents, vjp) -> Tensor:
    out = Tensor(value)
    if _GRAD_ENABLED and any(p.requires_grad or p._vjp is not None for p in parents):
        out.requires_grad = True
        out._parents = tuple(parents)
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape: tuple) -> np.ndarray:
    """Sum a broadcast gradient back down to ``shape``."""
    extra = g.ndim - len(shape)
    if extra > 0:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, (gs, ss) in enumerate(zip(g.shape, shape)) if ss == 1 and gs != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


def add(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.value + b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(g, b.value.shape)),
    )


def sub(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.value - b.value,
        (a, b),
        lambda g: (_unbroadcast(g, a.value.shape), _unbroadcast(-g, b.value.shape)),
    )


def mul(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.value * b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.value, a.value.shape),
            _unbroadcast(g * a.value, b.value.shape),
        ),
    )


def div(a, b) -> Tensor:
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(
        a.value / b.value,
        (a, b),
        lambda g: (
            _unbroadcast(g / b.value, a.value.shape),
            _unbroadcast(-g * a.value / (b.value * b.value), b.value.shape),
        ),
    )


def neg(a) -> Tensor:
    a = _as_tensor(a)
    return _make(-a.value, (a,), lambda g: (-g,))


def matmul(a, b) -> Tensor:
    """2-D matrix product (batch rows x features on the left)."""
    a, b = _as_tensor(a), _as_tensor(b)
    if a.value.ndim != 2 or b.value.ndim != 2:
        raise GradientError(
            f"matmul expects 2-D operands, got {a.value.shape} @ {b.value.shape}"
        )
    return _make(
        a.value @ b.value,
        (a, b),
        lambda g: (g @ b.value.T, a.value.T @ g),
    )


def sum_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g, a.value.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg, a.value.shape).copy(),)

    return _make(a.value.sum(axis=axis, keepdims=keepdims), (a,), vjp)


def mean_(a, axis=None, keepdims: bool = False) -> Tensor:
    a = _as_tensor(a)
    count = a.value.size if axis is None else a.value.shape[axis]

    def vjp(g):
        if axis is None:
            return (np.broadcast_to(g / count, a.value.shape).copy(),)
        gg = g if keepdims else np.expand_dims(g, axis)
        return (np.broadcast_to(gg / count, a.value.shape).copy(),)

    return _make(a.value.mean(axis=axis, keepdims=keepdims), (a,), vjp)


def concat(parts, axis: int = -1) -> Tensor:
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.value.shape[axis] for p in parts]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate([p.value for p in parts], axis=axis), parts, vjp)


def narrow(a, axis: int, start: int, length: int) -> Tensor:
    """Contiguous slice [start, start+length) along ``axis``."""
    a = _as_tensor(a)
    index = [slice(None)] * a.value.ndim
    index[axis] = slice(start, start + length)
    index = tuple(index)

    def vjp(g):
        full = np.zeros_like(a.value)
        full[index] = g
        return (full,)

    return _make(a.value[index].copy(), (a,), vjp)


def tile_rows(a, n: int) -> Tensor:
    """Broadcast a (F,) or (1, F) tensor to (n, F); backward sums over rows."""
    a = _as_tensor(a)
    row = a.value.reshape(1, -1)

    def vjp(g):
        return (g.sum(axis=0).reshape(a.value.shape),)

    return _make(np.repeat(row, n, axis=0), (a,), vjp)


def sigmoid(a) -> Tensor:
    a = _as_tensor(a)
    # Stable logistic: exp on the negative branch only.
    x = a.value
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return _make(out, (a,), lambda g: (g * out * (1.0 - out),))


def tanh_(a) -> Tensor:
    a = _as_tensor(a)
    out = np.tanh(a.value)
    return _make(out, (a,), lambda g: (g * (1.0 - out * out),))


def relu(a) -> Tensor:
    a = _as_tensor(a)
    mask = a.value > 0.0
    return _make(a.value * mask, (a,), lambda g: (g * mask,))


def sqrt_(a) -> Tensor:
    a = _as_tensor(a)
    out = np.sqrt(a.value)
    return _make(out, (a,), lambda g: (g / (2.0 * out),))


def square(a) -> Tensor:
    a = _as_tensor(a)
    return _make(a.value * a.value, (a,), lambda g: (2.0 * g * a.value,))


def cplx_matvec(h: np.ndarray, x) -> Tensor:
    """Apply a constant complex matrix to real-stacked complex vectors.

    ``h`` is (m, k) or batched (b, m, k) complex; ``x`` is a Tensor (b, 2k)
    holding [Re | Im] halves.  Returns (b, 2m) real-stacked ``h @ x``.
    """
    x = _as_tensor(x)
    hr = np.ascontiguousarray(h.real)
    hi = np.ascontiguousarray(h.imag)
    k = hr.shape[-1]
    if x.value.ndim != 2 or x.value.shape[1] != 2 * k:
        raise GradientError(f"cplx_matvec: x shape {x.value.shape} incompatible with k={k}")
    xr = x.value[:, :k]
    xi = x.value[:, k:]
    if hr.ndim == 2:
        ur = xr @ hr.T - xi @ hi.T
        ui = xi @ hr.T + xr @ hi.T

        def vjp(g):
            m = hr.shape[0]
            gr, gi = g[:, :m], g[:, m:]
            dxr = gr @ hr + gi @ hi
            dxi = -gr @ hi + gi @ hr
            return (np.concatenate([dxr, dxi], axis=1),)

    elif hr.ndim == 3:
        ur = np.einsum("bmk,bk->bm", hr, xr) - np.einsum("bmk,bk->bm", hi, xi)
        ui = np.einsum("bmk,bk->bm", hr, xi) + np.einsum("bmk,bk->bm", hi, xr)

        def vjp(g):
            m = hr.shape[1]
            gr, gi = g[:, :m], g[:, m:]
            dxr = np.einsum("bmk,bm->bk", hr, gr) + np.einsum("bmk,bm->bk", hi, gi)
            dxi = -np.einsum("bmk,bm->bk", hi, gr) + np.einsum("bmk,bm->bk", hr, gi)
            return (np.concatenate([dxr, dxi], axis=1),)

    else:
        raise GradientError(f"cplx_matvec: h must be 2-D or 3-D, got ndim {hr.ndim}")
    return _make(np.concatenate([ur, ui], axis=1), (x,), vjp)


def backward(loss: Tensor) -> None:
    """Accumulate d(loss)/d(tensor) into ``.grad`` of every reachable tensor."""
    if loss.value.size != 1:
        raise GradientError(f"loss must be scalar, got shape {loss.value.shape}")

    # Iterative topological order over the recorded graph.
    order: list[Tensor] = []
    seen: set[int] = set()
    stack: list[tuple[Tensor, bool]] = [(loss, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in seen:
            continue
        seen.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if id(p) not in seen:
                stack.append((p, False))

    grads: dict[int, np.ndarray] = {id(loss): np.ones_like(loss.value)}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        if node.requires_grad and node._vjp is None:
            # Leaf parameter: accumulate into the public gradient slot.
            node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        parent_grads = node._vjp(g)
        for p, pg in zip(node._parents, parent_grads):
            if pg is None or not (p.requires_grad or p._vjp is not None):
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg
