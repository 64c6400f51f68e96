"""Finite-difference verification of the end-to-end episode gradients.

The loss is the negative mean episode gain of a full unrolled ping-pong
episode batch.  Central differences (default step 1e-5) are compared
against the reverse-mode gradients parameter tensor by parameter tensor.
Noise is drawn from a fixed seed, so repeated forwards see identical
episodes and the loss is a deterministic function of the parameters.
"""

from __future__ import annotations

import numpy as np

from .numerics import Rng
from .nn.autodiff import backward, mean_, neg
from .protocol import ProtocolConfig, run_episodes

__all__ = ["episode_loss", "gradient_check", "max_relative_error"]


def episode_loss(cfg: ProtocolConfig, chans, policy, seed: int = 0, noiseless: bool = False) -> float:
    res = run_episodes(cfg, chans, policy, Rng(seed), noiseless=noiseless, training=True, record_trace=False)
    return float(neg(mean_(res.gain)).value)


def max_relative_error(a: np.ndarray, b: np.ndarray, floor: float = 1e-6) -> float:
    """Elementwise |a-b| / max(|a|, |b|, floor), maximized over the tensor."""
    denom = np.maximum(np.maximum(np.abs(a), np.abs(b)), floor)
    return float(np.max(np.abs(a - b) / denom))


def gradient_check(
    cfg: ProtocolConfig,
    chans,
    policy,
    seed: int = 0,
    step: float = 1e-5,
    noiseless: bool = False,
    names: list[str] | None = None,
) -> dict[str, float]:
    """Per-tensor max relative error between analytic and central FD gradients."""
    store = policy.store
    store.zero_grads()
    res = run_episodes(cfg, chans, policy, Rng(seed), noiseless=noiseless, training=True, record_trace=False)
    backward(neg(mean_(res.gain)))
    analytic = {
        name: (t.grad.copy() if t.grad is not None else np.zeros_like(t.value))
        for name, t in store.params.items()
    }
    store.zero_grads()

    errors: dict[str, float] = {}
    for name in names if names is not None else store.params:
        t = store.params[name]
        flat = t.value.ravel()
        fd = np.zeros_like(flat)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + step
            hi = episode_loss(cfg, chans, policy, seed, noiseless)
            flat[i] = orig - step
            lo = episode_loss(cfg, chans, policy, seed, noiseless)
            flat[i] = orig
            fd[i] = (hi - lo) / (2.0 * step)
        errors[name] = max_relative_error(analytic[name].ravel(), fd)
    return errors
