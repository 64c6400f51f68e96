"""Quick built-in oracle and gradient checks (the `selftest` subcommand)."""

from __future__ import annotations

import numpy as np

from .channel import ArrayGeometry, ChannelRealization, DirectPaths, steering_ula
from .gradcheck import gradient_check
from .harness import ExperimentSpec, generate_channels
from .numerics import Rng, svd
from .policies import ActiveNetConfig, ActiveSensingPolicy, bcd_perfect_csi, omp_estimate
from .protocol import run_episodes

__all__ = ["run_selftest"]


def _check_svd_oracle():
    rng = Rng(7)
    a = rng.cnormal((8, 4))
    dec = svd(a)
    resid = np.linalg.norm(a - dec.reconstruct()) / np.linalg.norm(a)
    assert resid < 1e-9, f"svd reconstruction residual {resid:.2e}"
    sigma1 = dec.singular_values[0]
    for _ in range(200):
        w_t = rng.cnormal(8)
        w_r = rng.cnormal(4)
        w_t /= np.linalg.norm(w_t)
        w_r /= np.linalg.norm(w_r)
        val = np.abs(w_r.conj() @ a.conj().T @ w_t) ** 2
        assert val <= sigma1**2 + 1e-9, "random pair beat the top singular pair"


def _check_gradients():
    spec = ExperimentSpec(
        mode="direct", m_t=4, m_r=2, l_p=1, rounds=2,
        hidden_a=4, hidden_b=4, head_hidden=(4,), final_hidden=(4,),
    )
    policy = ActiveSensingPolicy(
        ActiveNetConfig(m_t=4, m_r=2, rounds=2, hidden_a=4, hidden_b=4,
                        head_hidden=(4,), final_hidden=(4,)),
        seed=3,
    )
    chans = generate_channels(spec, Rng(5), 2)
    errors = gradient_check(spec.protocol(), chans, policy, seed=9)
    worst = max(errors.values())
    assert worst < 1e-4, f"gradient mismatch {worst:.2e}"


def _check_omp_recovery():
    geom = ArrayGeometry(m_t=8, m_r=4)
    grid = (16, 8)
    for trial in range(10):
        rng = Rng(100 + trial)
        sin_t = np.linspace(np.sin(-np.pi / 3), np.sin(np.pi / 3), grid[0])
        sin_r = np.linspace(np.sin(-np.pi / 3), np.sin(np.pi / 3), grid[1])
        p = int(rng.integers(0, grid[0]))
        q = int(rng.integers(0, grid[1]))
        alpha = rng.cnormal()
        g = alpha * np.outer(
            steering_ula(geom.m_t, np.arcsin(sin_t[p])),
            steering_ula(geom.m_r, np.arcsin(sin_r[q])).conj(),
        )
        w_t = rng.cnormal((8, geom.m_t))
        w_r = rng.cnormal((8, geom.m_r))
        w_t /= np.linalg.norm(w_t, axis=1, keepdims=True)
        w_r /= np.linalg.norm(w_r, axis=1, keepdims=True)
        h = g.conj().T
        y = np.einsum("im,mn,in->i", w_r.conj(), h, w_t)
        est = omp_estimate(y, w_t, w_r, geom, sparsity=1, grid_sizes=grid)
        assert est.support == [(q, p)], f"trial {trial}: support {est.support} != {[(q, p)]}"


def _check_bcd_monotone():
    spec = ExperimentSpec(mode="ris", m_t=8, m_r=4, n_ris=8, n_h=4, l_pt=2, l_pr=2)
    chans = generate_channels(spec, Rng(11), 10)
    for chan in chans:
        res = bcd_perfect_csi(chan, restarts=0)
        h = res.history
        drops = np.diff(h) < -1e-12 * np.maximum(1.0, h[:-1])
        assert not drops.any(), "BCD objective decreased"


def _check_protocol_determinism():
    spec = ExperimentSpec(mode="direct", m_t=4, m_r=2, l_p=2, rounds=2,
                          hidden_a=4, hidden_b=4, head_hidden=(4,), final_hidden=(4,))
    policy = ActiveSensingPolicy(
        ActiveNetConfig(m_t=4, m_r=2, rounds=2, hidden_a=4, hidden_b=4,
                        head_hidden=(4,), final_hidden=(4,)),
        seed=1,
    )
    chans = generate_channels(spec, Rng(21), 8)
    g1 = run_episodes(spec.protocol(), chans, policy, Rng(33)).gains
    g2 = run_episodes(spec.protocol(), chans, policy, Rng(33)).gains
    assert np.array_equal(g1, g2), "same-seed episode gains differ"


CHECKS = [
    ("svd-oracle", _check_svd_oracle),
    ("gradient-check", _check_gradients),
    ("omp-recovery", _check_omp_recovery),
    ("bcd-monotone", _check_bcd_monotone),
    ("protocol-determinism", _check_protocol_determinism),
]


def run_selftest(echo=print) -> bool:
    ok = True
    for name, fn in CHECKS:
        try:
            fn()
        except Exception as exc:  # report every failure, keep going
            ok = False
            echo(f"FAIL {name}: {exc}")
        else:
            echo(f"PASS {name}")
    return ok
