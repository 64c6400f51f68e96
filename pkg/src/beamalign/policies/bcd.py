"""Block coordinate descent for the RIS link, given perfect CSI.

Alternates two exact blocks: with the reflection vector fixed, the
beamformers come from the top singular pair of the cascade; with the
beamformers fixed, the gain is |sum_n c_n v_n|^2 for per-element cascade
terms c_n, maximized by phase matching v_n = exp(-j arg c_n) so every
term lands real-positive (which also pins the global phase).  Each half
step is an exact argmax, so the objective never decreases.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ChannelRealization
from ..numerics import Rng, top_singular_pair

__all__ = ["BcdResult", "phase_match", "bcd_perfect_csi", "random_ris_baseline"]


@dataclass
class BcdResult:
    w_t: np.ndarray
    w_r: np.ndarray
    v: np.ndarray
    gain: float
    history: np.ndarray  # objective after every half step, non-decreasing
    converged: bool


def phase_match(terms: np.ndarray) -> np.ndarray:
    """Unit-modulus v aligning the terms: each c_n * v_n real-positive."""
    terms = np.asarray(terms, dtype=np.complex128)
    v = np.ones_like(terms)
    nz = np.abs(terms) > 0.0
    v[nz] = np.exp(-1j * np.angle(terms[nz]))
    return v


def _cascade_terms(chan: ChannelRealization, w_t: np.ndarray, w_r: np.ndarray) -> np.ndarray:
    # gain = |sum_n c_n v_n|^2 with c_n = (w_r^H R^H)_n (T^H w_t)_n.
    return (chan.r_mat @ w_r).conj() * (chan.t_mat.conj().T @ w_t)


def _bcd_from(chan, v0, max_iters, tol):
    v = v0.copy()
    history = []
    w_t = w_r = None
    prev = -np.inf
    converged = False
    for _ in range(max_iters):
        h = chan.r_mat.conj().T @ (v[:, None] * chan.t_mat.conj().T)
        sigma, u, rv = top_singular_pair(h)
        w_r, w_t = u, rv  # h maps w_t (m_t) to the Rx side (m_r)
        history.append(sigma**2)
        v = phase_match(_cascade_terms(chan, w_t, w_r))
        obj = float(np.sum(np.abs(_cascade_terms(chan, w_t, w_r))) ** 2)
        history.append(obj)
        if prev > -np.inf and obj - prev <= tol * max(1.0, abs(obj)):
            converged = True
            break
        prev = obj
    return BcdResult(
        w_t=w_t, w_r=w_r, v=v, gain=history[-1], history=np.asarray(history), converged=converged
    )


def bcd_perfect_csi(
    chan: ChannelRealization,
    max_iters: int = 200,
    tol: float = 1e-12,
    v0: np.ndarray | None = None,
    restarts: int = 2,
    rng: Rng | None = None,
) -> BcdResult:
    """Best BCD fixed point over the default start plus random restarts.

    The default start is all-zero phases; ``restarts`` extra runs start
    from random phase vectors drawn from ``rng`` (required when > 0).
    """
    if chan.kind != "ris":
        raise ValueError("bcd_perfect_csi requires an RIS channel")
    n = chan.geometry.n_ris
    starts = [v0 if v0 is not None else np.ones(n, dtype=np.complex128)]
    if restarts > 0:
        if rng is None:
            raise ValueError("restarts > 0 needs an rng")
        starts += [rng.phases(n) for _ in range(restarts)]
    best = None
    for start in starts:
        res = _bcd_from(chan, start, max_iters, tol)
        if best is None or res.gain > best.gain:
            best = res
    return best


def random_ris_baseline(rng: Rng, n: int) -> np.ndarray:
    """Unit-modulus reflections with i.i.d. uniform phases."""
    return rng.phases(n)
