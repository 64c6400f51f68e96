"""Genie-aided baselines that read the channel instead of pilots.

These anchor the gain plots: the direct-channel optimum is the top
singular pair; the RIS optimum is approximated by BCD; the random-RIS
variant keeps perfect-CSI beamformers but draws reflections blindly.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..nn.autodiff import Tensor, constant
from ..nn.cplx import to_pairs
from .bcd import bcd_perfect_csi

__all__ = ["PerfectCsiPolicy", "RandomRisCsiPolicy"]


@dataclass
class _ConstantEpisode:
    """Emits one fixed design for sensing and data transmission alike."""

    w_t: np.ndarray  # (batch, m_t) complex
    w_r: np.ndarray
    v: np.ndarray | None = None

    def __post_init__(self):
        self._wt = constant(to_pairs(self.w_t))
        self._wr = constant(to_pairs(self.w_r))
        self._v = constant(to_pairs(self.v)) if self.v is not None else None

    def initial_a(self):
        return self._wt, self._wt

    def initial_b(self):
        return self._wr

    def initial_v_ab(self):
        return self._v

    def observe_b(self, y: Tensor):
        return self._wr, self._wr

    def observe_a(self, y: Tensor):
        return self._wt, self._wt

    def design_v_ba(self):
        return self._v

    def design_v_ab(self):
        return self._v

    def finalize(self):
        out = {"w_t": self._wt, "w_r": self._wr}
        if self._v is not None:
            out["v"] = self._v
        return out


class PerfectCsiPolicy:
    """Optimal design from full CSI: SVD pair (direct) or BCD (RIS)."""

    needs_csi = True
    trainable = False

    def __init__(self, bcd_iters: int = 200, bcd_tol: float = 1e-12, bcd_restarts: int = 2):
        self.bcd_iters = bcd_iters
        self.bcd_tol = bcd_tol
        self.bcd_restarts = bcd_restarts

    def begin_episode(self, ctx) -> _ConstantEpisode:
        chans = ctx.channels
        if chans is None:
            raise RuntimeError("perfect-CSI policy needs channel access")
        if chans[0].kind == "direct":
            g = np.stack([c.g for c in chans])
            u, _, vh = np.linalg.svd(g)
            return _ConstantEpisode(w_t=u[:, :, 0], w_r=vh[:, 0, :].conj())
        w_t, w_r, v = [], [], []
        for i, chan in enumerate(chans):
            res = bcd_perfect_csi(
                chan,
                max_iters=self.bcd_iters,
                tol=self.bcd_tol,
                restarts=self.bcd_restarts,
                rng=ctx.rng.child(i),
            )
            w_t.append(res.w_t)
            w_r.append(res.w_r)
            v.append(res.v)
        return _ConstantEpisode(w_t=np.stack(w_t), w_r=np.stack(w_r), v=np.stack(v))


class RandomRisCsiPolicy:
    """Random reflections, then perfect-CSI beamformers for that cascade."""

    needs_csi = True
    trainable = False

    def begin_episode(self, ctx) -> _ConstantEpisode:
        chans = ctx.channels
        if chans is None or chans[0].kind != "ris":
            raise RuntimeError("random-RIS CSI policy needs RIS channels")
        v = ctx.rng.phases((len(chans), chans[0].geometry.n_ris))
        h = np.stack(
            [c.r_mat.conj().T @ (v[i][:, None] * c.t_mat.conj().T) for i, c in enumerate(chans)]
        )
        u, _, vh = np.linalg.svd(h)
        return _ConstantEpisode(w_t=vh[:, 0, :].conj(), w_r=u[:, :, 0], v=v)
