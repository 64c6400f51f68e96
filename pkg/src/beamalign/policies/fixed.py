"""Fixed-sensing baselines: random or statistics-learned sensing vectors.

Sensing vectors stay constant across episodes (one per round per role);
only the decoders that map the stacked received pilots to the final
designs adapt to the instantaneous channel.  With ``kind="learned"`` the
sensing vectors are trainable constants (learned from the channel
distribution); with ``kind="random"`` they are frozen random draws.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import Rng
from ..nn.autodiff import Tensor, concat, constant, tile_rows
from ..nn.cplx import to_pairs, unit_modulus, unit_norm
from ..nn.layers import DenseStack
from ..nn.optim import ParameterStore

__all__ = ["FixedNetConfig", "FixedSensingPolicy", "RandomSensingPolicy"]


@dataclass(frozen=True)
class FixedNetConfig:
    m_t: int
    m_r: int
    rounds: int
    n_ris: int = 0
    decoder_hidden: tuple[int, ...] = (64, 64)
    batchnorm: bool = True
    kind: str = "random"  # "random" | "learned"

    def __post_init__(self):
        if self.kind not in ("random", "learned"):
            raise ValueError(f"kind must be 'random' or 'learned', got {self.kind!r}")

    @property
    def ris(self) -> bool:
        return self.n_ris > 0


def _unit_rows(rng: Rng, n: int, dim: int) -> np.ndarray:
    z = rng.cnormal((n, dim))
    return z / np.linalg.norm(z, axis=1, keepdims=True)


class FixedSensingPolicy:
    """Non-adaptive sensing with trained pilot-to-design decoders."""

    needs_csi = False
    trainable = True

    def __init__(self, cfg: FixedNetConfig, seed: int = 0):
        self.cfg = cfg
        self.store = ParameterStore()
        rng = Rng(seed)
        store = self.store
        L = cfg.rounds

        roles = [
            ("sense.a_t", 2 * cfg.m_t),
            ("sense.a_r", 2 * cfg.m_t),
            ("sense.b_t", 2 * cfg.m_r),
            ("sense.b_r", 2 * cfg.m_r),
        ]
        for name, dim in roles:
            for l in range(L):
                if cfg.kind == "learned":
                    store.create(f"{name}.round{l}", rng.standard_normal(dim))
                else:
                    store.create_buffer(f"{name}.round{l}", to_pairs(_unit_rows(rng, 1, dim // 2)[0]))
        if cfg.ris:
            for name in ("sense.v_ab", "sense.v_ba"):
                for l in range(L):
                    if cfg.kind == "learned":
                        store.create(f"{name}.round{l}", rng.standard_normal(2 * cfg.n_ris))
                    else:
                        store.create_buffer(f"{name}.round{l}", to_pairs(rng.phases(cfg.n_ris)))

        self.dec_t = DenseStack(
            store, "dec.t", 2 * L, (*cfg.decoder_hidden, 2 * cfg.m_t), "unit_norm", cfg.batchnorm, rng
        )
        self.dec_r = DenseStack(
            store, "dec.r", 2 * L, (*cfg.decoder_hidden, 2 * cfg.m_r), "unit_norm", cfg.batchnorm, rng
        )
        self.dec_v = None
        if cfg.ris:
            self.dec_v = DenseStack(
                store, "dec.v", 4 * L, (*cfg.decoder_hidden, 2 * cfg.n_ris), "unit_modulus", cfg.batchnorm, rng
            )

    def sensing_vector(self, name: str, round_idx: int, batch: int) -> Tensor:
        """Constraint-normalized constant sensing vector for one role/round."""
        round_idx = min(round_idx, self.cfg.rounds - 1)
        key = f"{name}.round{round_idx}"
        if self.cfg.kind == "learned":
            raw = self.store.params[key]
            norm = unit_modulus if name.startswith("sense.v") else unit_norm
            return norm(tile_rows(raw, batch))
        buf = self.store.buffers[key]
        return constant(np.repeat(buf[None, :], batch, axis=0))

    def begin_episode(self, ctx) -> "_FixedEpisode":
        return _FixedEpisode(self, ctx.batch, ctx.training)


@dataclass
class _FixedEpisode:
    policy: FixedSensingPolicy
    batch: int
    training: bool
    ys_a: list = field(default_factory=list)
    ys_b: list = field(default_factory=list)
    _ba: int = 0
    _ab: int = 1

    def _w(self, name, l):
        return self.policy.sensing_vector(name, l, self.batch)

    def initial_a(self):
        return self._w("sense.a_t", 0), self._w("sense.a_r", 0)

    def initial_b(self):
        return self._w("sense.b_r", 0)

    def initial_v_ab(self):
        return self._w("sense.v_ab", 0)

    def observe_b(self, y: Tensor):
        self.ys_b.append(y)
        l = len(self.ys_b) - 1
        return self._w("sense.b_t", l), self._w("sense.b_r", l + 1)

    def observe_a(self, y: Tensor):
        self.ys_a.append(y)
        l = len(self.ys_a) - 1
        return self._w("sense.a_t", l + 1), self._w("sense.a_r", l + 1)

    def design_v_ba(self):
        l = self._ba
        self._ba += 1
        return self._w("sense.v_ba", l)

    def design_v_ab(self):
        l = self._ab
        self._ab += 1
        return self._w("sense.v_ab", l)

    def finalize(self):
        if not self.ys_a or not self.ys_b:
            raise RuntimeError("finalize called before any observation")
        pilots_a = concat(self.ys_a, axis=-1)
        pilots_b = concat(self.ys_b, axis=-1)
        out = {
            "w_t": self.policy.dec_t(pilots_a, self.training),
            "w_r": self.policy.dec_r(pilots_b, self.training),
        }
        if self.policy.cfg.ris:
            out["v"] = self.policy.dec_v(concat([pilots_a, pilots_b], axis=-1), self.training)
        return out


class RandomSensingPolicy:
    """Random fixed sensing with no decoder; the finalized design is the
    first-round sensing pair (placeholder for estimators that post-process
    the trace, e.g. compressive channel estimation)."""

    needs_csi = False
    trainable = False

    def __init__(self, m_t: int, m_r: int, rounds: int, seed: int = 0, n_ris: int = 0):
        rng = Rng(seed)
        self.rounds = rounds
        self.w_a_t = _unit_rows(rng, rounds, m_t)
        self.w_a_r = _unit_rows(rng, rounds, m_t)
        self.w_b_t = _unit_rows(rng, rounds, m_r)
        self.w_b_r = _unit_rows(rng, rounds, m_r)
        self.v_ab = rng.phases((rounds, n_ris)) if n_ris else None
        self.v_ba = rng.phases((rounds, n_ris)) if n_ris else None

    def begin_episode(self, ctx) -> "_RandomSensingEpisode":
        return _RandomSensingEpisode(self, ctx.batch)


@dataclass
class _RandomSensingEpisode:
    policy: RandomSensingPolicy
    batch: int
    _a: int = 0
    _b: int = 0
    _ba: int = 0
    _ab: int = 1

    def _emit(self, rows: np.ndarray, l: int) -> Tensor:
        l = min(l, self.policy.rounds - 1)
        return constant(np.repeat(to_pairs(rows[l])[None, :], self.batch, axis=0))

    def initial_a(self):
        return self._emit(self.policy.w_a_t, 0), self._emit(self.policy.w_a_r, 0)

    def initial_b(self):
        return self._emit(self.policy.w_b_r, 0)

    def initial_v_ab(self):
        return self._emit(self.policy.v_ab, 0)

    def observe_b(self, y):
        l = self._b
        self._b += 1
        return self._emit(self.policy.w_b_t, l), self._emit(self.policy.w_b_r, l + 1)

    def observe_a(self, y):
        l = self._a
        self._a += 1
        return self._emit(self.policy.w_a_t, l + 1), self._emit(self.policy.w_a_r, l + 1)

    def design_v_ba(self):
        l = self._ba
        self._ba += 1
        return self._emit(self.policy.v_ba, l)

    def design_v_ab(self):
        l = self._ab
        self._ab += 1
        return self._emit(self.policy.v_ab, l)

    def finalize(self):
        out = {
            "w_t": self._emit(self.policy.w_a_t, 0),
            "w_r": self._emit(self.policy.w_b_r, 0),
        }
        if self.policy.v_ab is not None:
            out["v"] = self._emit(self.policy.v_ab, 0)
        return out
