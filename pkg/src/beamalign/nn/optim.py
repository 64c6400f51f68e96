"""Named parameter storage and the Adam update."""

from __future__ import annotations

import numpy as np

from .autodiff import Tensor

__all__ = ["ParameterStore", "OptimError", "adam_step"]


class OptimError(RuntimeError):
    pass


class ParameterStore:
    """Flat named map of trainable tensors plus Adam moments and buffers.

    ``params`` hold trainables with gradient slots; ``buffers`` hold
    non-trainable state (batchnorm running statistics, frozen sensing
    vectors).  Moments are lazily zero-initialized per parameter.
    """

    def __init__(self):
        self.params: dict[str, Tensor] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.m: dict[str, np.ndarray] = {}
        self.v: dict[str, np.ndarray] = {}
        self.step: int = 0

    def create(self, name: str, value) -> Tensor:
        if name in self.params or name in self.buffers:
            raise OptimError(f"duplicate parameter name {name!r}")
        t = Tensor(np.asarray(value, dtype=np.float64).copy(), requires_grad=True)
        self.params[name] = t
        return t

    def create_buffer(self, name: str, value) -> np.ndarray:
        if name in self.params or name in self.buffers:
            raise OptimError(f"duplicate buffer name {name!r}")
        arr = np.asarray(value, dtype=np.float64).copy()
        self.buffers[name] = arr
        return arr

    def zero_grads(self) -> None:
        for t in self.params.values():
            t.grad = None

    def ensure_grads(self) -> None:
        """Give parameters the loss never touched an explicit zero gradient."""
        for t in self.params.values():
            if t.grad is None:
                t.grad = np.zeros_like(t.value)

    def snapshot(self) -> dict[str, np.ndarray]:
        """Copies of parameter and buffer values (not moments)."""
        out = {name: t.value.copy() for name, t in self.params.items()}
        out.update({name: b.copy() for name, b in self.buffers.items()})
        return out

    def restore(self, snap: dict[str, np.ndarray]) -> None:
        for name, t in self.params.items():
            t.value[...] = snap[name]
        for name, b in self.buffers.items():
            b[...] = snap[name]

    def l2_gradient_norm(self) -> float:
        total = 0.0
        for t in self.params.values():
            if t.grad is not None:
                total += float(np.sum(t.grad * t.grad))
        return float(np.sqrt(total))


def adam_step(
    store: ParameterStore,
    lr: float,
    betas: tuple[float, float] = (0.9, 0.999),
    eps: float = 1e-8,
) -> ParameterStore:
    """One Adam update with bias correction; increments the step counter.

    Every parameter must carry a populated gradient (a zero gradient is
    fine, a missing one is a bug in the caller's backward pass).
    """
    missing = [name for name, t in store.params.items() if t.grad is None]
    if missing:
        raise OptimError(f"missing gradients for: {', '.join(sorted(missing)[:5])}")
    b1, b2 = betas
    store.step += 1
    t = store.step
    corr1 = 1.0 - b1**t
    corr2 = 1.0 - b2**t
    for name, p in store.params.items():
        g = p.grad
        if name not in store.m:
            store.m[name] = np.zeros_like(p.value)
            store.v[name] = np.zeros_like(p.value)
        m = store.m[name]
        v = store.v[name]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * (g * g)
        p.value -= lr * (m / corr1) / (np.sqrt(v / corr2) + eps)
    return store
