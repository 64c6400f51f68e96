"""The ping-pong pilot episode engine.

One round sends a pilot A->B through the current sensing beamformers
(and RIS reflection in RIS mode), lets agent B update its design, then
sends B->A and lets agent A update.  After ``rounds`` rounds the policy
commits its data-transmission design.  The engine is batched: a batch of
independent episodes runs through vectorized tensor ops, and pilots are
computed with the autodiff engine so learned policies can be trained
end-to-end straight through the episode dynamics.

Policies implement ``begin_episode(ctx)`` returning an episode object with
the callbacks used below; each agent's callbacks only ever receive that
agent's own observations.
"""

from __future__ import annotations

import contextlib
from dataclasses import dataclass

import numpy as np

from .channel import ChannelRealization, beamforming_gain
from .numerics import Rng
from .nn.autodiff import Tensor, add, constant, cplx_matvec, mul, no_grad
from .nn.cplx import c_abs2, c_conj, c_inner, c_mul, to_complex, to_pairs

__all__ = [
    "ProtocolConfig",
    "ProtocolViolation",
    "EpisodeContext",
    "EpisodeTrace",
    "ProtocolResult",
    "run_episodes",
    "run_episode",
    "evaluate_design",
    "export_trace",
]

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class ProtocolConfig:
    """Rounds, pilot powers, noise level, and operating mode."""

    rounds: int
    p1: float = 1.0
    p2: float = 1.0
    noise_var: float = 1.0
    mode: str = "direct"  # "direct" | "ris"

    def __post_init__(self):
        if self.rounds < 1:
            raise ValueError("rounds must be >= 1")
        if self.p1 <= 0 or self.p2 <= 0 or self.noise_var <= 0:
            raise ValueError("powers and noise variance must be positive")
        if self.mode not in ("direct", "ris"):
            raise ValueError(f"unknown mode {self.mode!r}")

    @property
    def pilot_overhead(self) -> int:
        """Total pilot symbols spent: two per ping-pong round."""
        return 2 * self.rounds


class ProtocolViolation(RuntimeError):
    """A policy emitted a constraint-violating vector; the episode aborts."""


@dataclass
class EpisodeContext:
    """What a policy gets to see when an episode batch starts.

    ``channels`` is populated only for policies that declare
    ``needs_csi = True`` (perfect-CSI style baselines); every other policy
    works from pilots alone.
    """

    config: ProtocolConfig
    batch: int
    training: bool
    rng: Rng
    channels: tuple[ChannelRealization, ...] | None = None


@dataclass
class EpisodeTrace:
    """Per-round record of everything that went over the air, plus finals.

    Round-indexed arrays have shape (rounds, batch, ...); pilot arrays are
    complex (rounds, batch).
    """

    mode: str
    rounds: int
    batch: int
    w_a_t: np.ndarray
    w_b_r: np.ndarray
    w_b_t: np.ndarray
    w_a_r: np.ndarray
    y_b: np.ndarray
    n_b: np.ndarray
    y_a: np.ndarray
    n_a: np.ndarray
    final_w_t: np.ndarray
    final_w_r: np.ndarray
    v_ab: np.ndarray | None = None
    v_ba: np.ndarray | None = None
    final_v: np.ndarray | None = None


@dataclass
class ProtocolResult:
    """Episode batch output: optional trace, final design tensors, gains."""

    trace: EpisodeTrace | None
    final: dict[str, Tensor]
    gain: Tensor  # (batch, 1), differentiable when training
    episode: object = None  # the policy's episode state, for introspection

    @property
    def gains(self) -> np.ndarray:
        return self.gain.value.ravel()


def _check_unit_rows(t: Tensor, label: str, round_idx: int) -> Tensor:
    norms = np.sqrt(np.sum(t.value * t.value, axis=-1))
    dev = float(np.max(np.abs(norms - 1.0)))
    if dev > _UNIT_TOL:
        raise ProtocolViolation(
            f"{label} violates the unit-norm constraint at round {round_idx}: "
            f"max deviation {dev:.3e}"
        )
    return t


def _check_modulus_rows(t: Tensor, label: str, round_idx: int) -> Tensor:
    z = to_complex(t.value)
    dev = float(np.max(np.abs(np.abs(z) - 1.0)))
    if dev > _UNIT_TOL:
        raise ProtocolViolation(
            f"{label} violates the unit-modulus constraint at round {round_idx}: "
            f"max deviation {dev:.3e}"
        )
    return t


def _stack_channels(cfg: ProtocolConfig, chans) -> dict[str, np.ndarray]:
    kinds = {c.kind for c in chans}
    if kinds != {cfg.mode}:
        raise ValueError(f"channel kinds {kinds} do not match protocol mode {cfg.mode!r}")
    if cfg.mode == "direct":
        g = np.stack([c.g for c in chans])
        return {"up": g, "down": g.conj().transpose(0, 2, 1)}
    t = np.stack([c.t_mat for c in chans])
    r = np.stack([c.r_mat for c in chans])
    return {
        "t": t,
        "r": r,
        "th": t.conj().transpose(0, 2, 1),
        "rh": r.conj().transpose(0, 2, 1),
    }


def _gain_graph(cfg: ProtocolConfig, stacks, final: dict[str, Tensor]) -> Tensor:
    """|w_r^H H w_t|^2 on the effective downlink channel, as a graph node."""
    w_t, w_r = final["w_t"], final["w_r"]
    if cfg.mode == "direct":
        u = cplx_matvec(stacks["down"], w_t)
    else:
        tv = cplx_matvec(stacks["th"], w_t)
        u = cplx_matvec(stacks["rh"], c_mul(final["v"], tv))
    return c_abs2(c_inner(w_r, u))


def run_episodes(
    cfg: ProtocolConfig,
    chans,
    policy,
    rng: Rng,
    noiseless: bool = False,
    training: bool = False,
    record_trace: bool = True,
) -> ProtocolResult:
    """Run a batch of ping-pong episodes, one channel per episode.

    Noise (when enabled) is drawn from ``rng.child(0)``, one CN(0, sigma^2)
    scalar per pilot in a fixed order; policies draw any randomness they
    need from ``rng.child(1)``, so the realized noise depends only on the
    seed, never on the policy.
    """
    chans = tuple(chans)
    batch = len(chans)
    if batch == 0:
        raise ValueError("empty episode batch")
    stacks = _stack_channels(cfg, chans)
    noise_rng = rng.child(0)
    ctx = EpisodeContext(
        config=cfg,
        batch=batch,
        training=training,
        rng=rng.child(1),
        channels=chans if getattr(policy, "needs_csi", False) else None,
    )

    sqrt_p1 = float(np.sqrt(cfg.p1))
    sqrt_p2 = float(np.sqrt(cfg.p2))
    ris = cfg.mode == "ris"

    rec: dict[str, list] = {k: [] for k in ("w_a_t", "w_b_r", "w_b_t", "w_a_r", "y_b", "n_b", "y_a", "n_a", "v_ab", "v_ba")}

    def _noise() -> np.ndarray:
        if noiseless:
            return np.zeros(batch, dtype=np.complex128)
        return noise_rng.cnormal(batch, var=cfg.noise_var)

    guard = contextlib.nullcontext() if training else no_grad()
    with guard:
        ep = policy.begin_episode(ctx)
        w_t_a, w_r_a = ep.initial_a()
        w_r_b = ep.initial_b()
        _check_unit_rows(w_t_a, "initial w_a_t", 0)
        _check_unit_rows(w_r_a, "initial w_a_r", 0)
        _check_unit_rows(w_r_b, "initial w_b_r", 0)
        v_ab = None
        if ris:
            v_ab = _check_modulus_rows(ep.initial_v_ab(), "initial v_ab", 0)

        for l in range(cfg.rounds):
            # A -> B pilot through the effective downlink channel.
            if ris:
                tv = cplx_matvec(stacks["th"], w_t_a)
                u = cplx_matvec(stacks["rh"], c_mul(v_ab, tv))
            else:
                u = cplx_matvec(stacks["down"], w_t_a)
            n_b = _noise()
            y_b = add(mul(c_inner(w_r_b, u), sqrt_p1), constant(to_pairs(n_b[:, None])))

            w_t_b, w_r_b_next = ep.observe_b(y_b)
            _check_unit_rows(w_t_b, "w_b_t", l)
            _check_unit_rows(w_r_b_next, "w_b_r", l + 1)

            v_ba = None
            if ris:
                v_ba = _check_modulus_rows(ep.design_v_ba(), "v_ba", l)

            # B -> A pilot through the effective uplink channel.
            if ris:
                rv = cplx_matvec(stacks["r"], w_t_b)
                u2 = cplx_matvec(stacks["t"], c_mul(c_conj(v_ba), rv))
            else:
                u2 = cplx_matvec(stacks["up"], w_t_b)
            n_a = _noise()
            y_a = add(mul(c_inner(w_r_a, u2), sqrt_p2), constant(to_pairs(n_a[:, None])))

            w_t_a_next, w_r_a_next = ep.observe_a(y_a)
            _check_unit_rows(w_t_a_next, "w_a_t", l + 1)
            _check_unit_rows(w_r_a_next, "w_a_r", l + 1)

            v_ab_next = None
            if ris and l < cfg.rounds - 1:
                v_ab_next = _check_modulus_rows(ep.design_v_ab(), "v_ab", l + 1)

            if record_trace:
                rec["w_a_t"].append(to_complex(w_t_a.value))
                rec["w_b_r"].append(to_complex(w_r_b.value))
                rec["w_b_t"].append(to_complex(w_t_b.value))
                rec["w_a_r"].append(to_complex(w_r_a.value))
                rec["y_b"].append(to_complex(y_b.value).ravel())
                rec["n_b"].append(n_b)
                rec["y_a"].append(to_complex(y_a.value).ravel())
                rec["n_a"].append(n_a)
                if ris:
                    rec["v_ab"].append(to_complex(v_ab.value))
                    rec["v_ba"].append(to_complex(v_ba.value))

            w_t_a, w_r_a, w_r_b = w_t_a_next, w_r_a_next, w_r_b_next
            if ris:
                v_ab = v_ab_next if v_ab_next is not None else v_ab

        final = ep.finalize()
        _check_unit_rows(final["w_t"], "final w_t", cfg.rounds)
        _check_unit_rows(final["w_r"], "final w_r", cfg.rounds)
        if ris:
            _check_modulus_rows(final["v"], "final v", cfg.rounds)
        gain = _gain_graph(cfg, stacks, final)

    trace = None
    if record_trace:
        trace = EpisodeTrace(
            mode=cfg.mode,
            rounds=cfg.rounds,
            batch=batch,
            w_a_t=np.stack(rec["w_a_t"]),
            w_b_r=np.stack(rec["w_b_r"]),
            w_b_t=np.stack(rec["w_b_t"]),
            w_a_r=np.stack(rec["w_a_r"]),
            y_b=np.stack(rec["y_b"]),
            n_b=np.stack(rec["n_b"]),
            y_a=np.stack(rec["y_a"]),
            n_a=np.stack(rec["n_a"]),
            v_ab=np.stack(rec["v_ab"]) if ris else None,
            v_ba=np.stack(rec["v_ba"]) if ris else None,
            final_w_t=to_complex(final["w_t"].value),
            final_w_r=to_complex(final["w_r"].value),
            final_v=to_complex(final["v"].value) if ris else None,
        )
    return ProtocolResult(trace=trace, final=final, gain=gain, episode=ep)


def run_episode(
    cfg: ProtocolConfig,
    chan: ChannelRealization,
    policy,
    rng: Rng,
    noiseless: bool = False,
) -> EpisodeTrace:
    """Single-episode convenience wrapper (batch of one, trace recorded)."""
    return run_episodes(cfg, [chan], policy, rng, noiseless=noiseless).trace


def evaluate_design(chan: ChannelRealization, trace: EpisodeTrace, index: int = 0) -> float:
    """Beamforming gain of the finalized design for episode ``index``.

    This re-evaluates the final design through the plain channel oracle,
    independently of the engine's differentiable gain graph.
    """
    v = trace.final_v[index] if trace.final_v is not None else None
    return beamforming_gain(chan, trace.final_w_t[index], trace.final_w_r[index], v)


def _fmt_cvec(z: np.ndarray) -> str:
    return " ".join(f"{c.real:.17g} {c.imag:.17g}" for c in np.atleast_1d(z))


def export_trace(trace: EpisodeTrace, path) -> None:
    """Line-oriented trace dump: one round per line, re/im pairs.

    Per episode: ``round l`` lines carry, in order, w_a_t, w_b_r, [v_ab,]
    y_b, n_b, w_b_t, w_a_r, [v_ba,] y_a, n_a; a ``final`` line carries
    w_t, w_r[, v].
    """
    lines = [f"beamalign-trace v1 mode={trace.mode} rounds={trace.rounds} batch={trace.batch}"]
    for b in range(trace.batch):
        lines.append(f"episode {b}")
        for l in range(trace.rounds):
            fields = [_fmt_cvec(trace.w_a_t[l, b]), _fmt_cvec(trace.w_b_r[l, b])]
            if trace.v_ab is not None:
                fields.append(_fmt_cvec(trace.v_ab[l, b]))
            fields += [
                _fmt_cvec(trace.y_b[l, b]),
                _fmt_cvec(trace.n_b[l, b]),
                _fmt_cvec(trace.w_b_t[l, b]),
                _fmt_cvec(trace.w_a_r[l, b]),
            ]
            if trace.v_ba is not None:
                fields.append(_fmt_cvec(trace.v_ba[l, b]))
            fields += [_fmt_cvec(trace.y_a[l, b]), _fmt_cvec(trace.n_a[l, b])]
            lines.append(f"round {l} " + " ".join(fields))
        fin = [_fmt_cvec(trace.final_w_t[b]), _fmt_cvec(trace.final_w_r[b])]
        if trace.final_v is not None:
            fin.append(_fmt_cvec(trace.final_v[b]))
        lines.append("final " + " ".join(fin))
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")
