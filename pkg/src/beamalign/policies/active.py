"""LSTM-based active sensing policy for both agents (and the RIS controller).

Each agent runs its own LSTM over the pilots it receives; two dense heads
on the hidden state emit the next transmit/receive sensing beamformers,
and a final head on the cell state emits the data-transmission design.
In RIS mode a controller (which sees both agents' state summaries, never
raw far-side pilots) emits the reflection vector for each pilot direction
and for data transmission.  ``ris_mode`` selects how reflections are
produced: "active" (dense heads on the states), "learned" (trainable
per-round constants), or "random" (fixed random phases).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..numerics import Rng
from ..nn.autodiff import Tensor, concat, constant, tile_rows
from ..nn.cplx import to_pairs, unit_modulus, unit_norm
from ..nn.layers import DenseStack, LstmParams, LstmState, lstm_step
from ..nn.optim import ParameterStore

__all__ = ["ActiveNetConfig", "ActiveSensingPolicy", "active_policy_step", "active_policy_finalize"]

RIS_MODES = ("active", "learned", "random")


@dataclass(frozen=True)
class ActiveNetConfig:
    """Architecture knobs for the active-sensing networks."""

    m_t: int
    m_r: int
    rounds: int
    n_ris: int = 0
    hidden_a: int = 64
    hidden_b: int = 64
    head_hidden: tuple[int, ...] = (64, 64)
    final_hidden: tuple[int, ...] = (64, 64)
    batchnorm: bool = True
    tied: bool = True
    ris_mode: str = "active"
    unit_modulus_beams: bool = False

    def __post_init__(self):
        if self.ris_mode not in RIS_MODES:
            raise ValueError(f"ris_mode must be one of {RIS_MODES}")

    @property
    def ris(self) -> bool:
        return self.n_ris > 0


class ActiveSensingPolicy:
    """Trainable two-sided active sensing (direct or RIS-assisted)."""

    needs_csi = False
    trainable = True

    def __init__(self, cfg: ActiveNetConfig, seed: int = 0):
        self.cfg = cfg
        self.store = ParameterStore()
        rng = Rng(seed)
        store = self.store
        beam_act = "unit_modulus" if cfg.unit_modulus_beams else "unit_norm"

        self.lstm_a = LstmParams.build(store, "a.lstm", 2, cfg.hidden_a, rng)
        self.lstm_b = LstmParams.build(store, "b.lstm", 2, cfg.hidden_b, rng)

        def heads(prefix, input_dim, out_dim):
            sizes = (*cfg.head_hidden, out_dim)
            if cfg.tied:
                return DenseStack(store, prefix, input_dim, sizes, beam_act, cfg.batchnorm, rng)
            return [
                DenseStack(store, f"{prefix}.round{l}", input_dim, sizes, beam_act, cfg.batchnorm, rng)
                for l in range(cfg.rounds)
            ]

        self.f_t_a = heads("a.head_t", cfg.hidden_a, 2 * cfg.m_t)
        self.f_r_a = heads("a.head_r", cfg.hidden_a, 2 * cfg.m_t)
        self.f_t_b = heads("b.head_t", cfg.hidden_b, 2 * cfg.m_r)
        self.f_r_b = heads("b.head_r", cfg.hidden_b, 2 * cfg.m_r)
        self.g_t = DenseStack(
            store, "a.final_t", cfg.hidden_a, (*cfg.final_hidden, 2 * cfg.m_t), beam_act, cfg.batchnorm, rng
        )
        self.g_r = DenseStack(
            store, "b.final_r", cfg.hidden_b, (*cfg.final_hidden, 2 * cfg.m_r), beam_act, cfg.batchnorm, rng
        )

        self.w_a_t0 = store.create("init.w_a_t0", rng.standard_normal(2 * cfg.m_t))
        self.w_a_r0 = store.create("init.w_a_r0", rng.standard_normal(2 * cfg.m_t))
        self.w_b_r0 = store.create("init.w_b_r0", rng.standard_normal(2 * cfg.m_r))

        self.f_v_ab = self.f_v_ba = self.g_v = None
        if cfg.ris:
            both = cfg.hidden_a + cfg.hidden_b
            if cfg.ris_mode == "active":
                self.f_v_ab = DenseStack(
                    store, "ris.head_ab", both, (*cfg.head_hidden, 2 * cfg.n_ris), "unit_modulus", cfg.batchnorm, rng
                )
                self.f_v_ba = DenseStack(
                    store, "ris.head_ba", both, (*cfg.head_hidden, 2 * cfg.n_ris), "unit_modulus", cfg.batchnorm, rng
                )
                self.g_v = DenseStack(
                    store, "ris.final_v", both, (*cfg.final_hidden, 2 * cfg.n_ris), "unit_modulus", cfg.batchnorm, rng
                )
                store.create("init.v_ab0", rng.standard_normal(2 * cfg.n_ris))
            elif cfg.ris_mode == "learned":
                for l in range(cfg.rounds):
                    store.create(f"ris.v_ab.round{l}", rng.standard_normal(2 * cfg.n_ris))
                    store.create(f"ris.v_ba.round{l}", rng.standard_normal(2 * cfg.n_ris))
                store.create("ris.v_final", rng.standard_normal(2 * cfg.n_ris))
            else:  # random: fixed phases, not trainable
                for l in range(cfg.rounds):
                    store.create_buffer(f"ris.v_ab.round{l}", to_pairs(rng.phases(cfg.n_ris)))
                    store.create_buffer(f"ris.v_ba.round{l}", to_pairs(rng.phases(cfg.n_ris)))
                store.create_buffer("ris.v_final", to_pairs(rng.phases(cfg.n_ris)))

    def begin_episode(self, ctx) -> "_ActiveEpisode":
        return _ActiveEpisode(self, ctx.batch, ctx.training)


@dataclass
class _ActiveEpisode:
    policy: ActiveSensingPolicy
    batch: int
    training: bool
    state_a: LstmState = field(init=False)
    state_b: LstmState = field(init=False)

    def __post_init__(self):
        cfg = self.policy.cfg
        self.state_a = LstmState.zeros(self.batch, cfg.hidden_a)
        self.state_b = LstmState.zeros(self.batch, cfg.hidden_b)
        self._obs_a = 0
        self._obs_b = 0
        self._ba_emitted = 0
        self._ab_emitted = 1  # index 0 is the trainable initial vector

    def _head(self, head, round_idx: int):
        return head if self.policy.cfg.tied else head[round_idx]

    # -- initial vectors -------------------------------------------------
    def initial_a(self):
        return (
            unit_norm(tile_rows(self.policy.w_a_t0, self.batch)),
            unit_norm(tile_rows(self.policy.w_a_r0, self.batch)),
        )

    def initial_b(self):
        return unit_norm(tile_rows(self.policy.w_b_r0, self.batch))

    def initial_v_ab(self):
        return self._reflection("ris.v_ab.round0", "init.v_ab0", None)

    # -- per-round callbacks ----------------------------------------------
    def observe_b(self, y: Tensor):
        l = self._obs_b
        self._obs_b += 1
        self.state_b = lstm_step(self.policy.lstm_b, self.state_b, y)
        w_t = self._head(self.policy.f_t_b, l)(self.state_b.s, self.training)
        w_r = self._head(self.policy.f_r_b, l)(self.state_b.s, self.training)
        return w_t, w_r

    def observe_a(self, y: Tensor):
        l = self._obs_a
        self._obs_a += 1
        self.state_a = lstm_step(self.policy.lstm_a, self.state_a, y)
        w_t = self._head(self.policy.f_t_a, l)(self.state_a.s, self.training)
        w_r = self._head(self.policy.f_r_a, l)(self.state_a.s, self.training)
        return w_t, w_r

    def _reflection(self, const_name: str, init_name: str | None, head):
        cfg = self.policy.cfg
        store = self.policy.store
        if cfg.ris_mode == "active":
            if head is not None:
                inp = concat([self.state_a.s, self.state_b.s], axis=-1)
                return head(inp, self.training)
            return unit_modulus(tile_rows(store.params[init_name], self.batch))
        if cfg.ris_mode == "learned":
            return unit_modulus(tile_rows(store.params[const_name], self.batch))
        buf = store.buffers[const_name]
        return constant(np.repeat(buf[None, :], self.batch, axis=0))

    def design_v_ba(self):
        l = self._ba_emitted
        self._ba_emitted += 1
        return self._reflection(f"ris.v_ba.round{l}", None, self.policy.f_v_ba)

    def design_v_ab(self):
        l = self._ab_emitted
        self._ab_emitted += 1
        return self._reflection(f"ris.v_ab.round{l}", None, self.policy.f_v_ab)

    def finalize(self):
        if self._obs_a == 0 and self._obs_b == 0:
            raise RuntimeError("finalize called before any observation")
        out = {
            "w_t": self.policy.g_t(self.state_a.c, self.training),
            "w_r": self.policy.g_r(self.state_b.c, self.training),
        }
        cfg = self.policy.cfg
        if cfg.ris:
            if cfg.ris_mode == "active":
                inp = concat([self.state_a.c, self.state_b.c], axis=-1)
                out["v"] = self.policy.g_v(inp, self.training)
            elif cfg.ris_mode == "learned":
                out["v"] = unit_modulus(tile_rows(self.policy.store.params["ris.v_final"], self.batch))
            else:
                buf = self.policy.store.buffers["ris.v_final"]
                out["v"] = constant(np.repeat(buf[None, :], self.batch, axis=0))
        return out


def active_policy_step(episode: _ActiveEpisode, side: str, y: Tensor):
    """One observe->design step for the given side ('a' or 'b')."""
    if side == "a":
        return episode.observe_a(y)
    if side == "b":
        return episode.observe_b(y)
    raise ValueError(f"side must be 'a' or 'b', got {side!r}")


def active_policy_finalize(episode: _ActiveEpisode):
    """Map the final cell states to the data-transmission design."""
    return episode.finalize()
