"""Compressive channel-estimation baseline: OMP over an angular dictionary.

All 2L pilot measurements (both ping-pong directions, centralized via the
feedback such schemes assume) become a linear system in the angular-domain
representation of the downlink channel H = G^H:

    y_i = w_{r,i}^H H w_{t,i},   H ~= sum_{q,p} x_{qp} a_r(s_q) a_t(s_p)^H

on grids uniform in sin(angle).  OMP recovers a K-sparse x; the final
beamformers are the top singular pair of the reconstructed channel.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..channel import ArrayGeometry, ChannelRealization, DEFAULT_ANGLE_RANGE, beamforming_gain
from ..numerics import Rng, top_singular_pair
from ..protocol import EpisodeTrace, ProtocolConfig, run_episodes
from .fixed import RandomSensingPolicy

__all__ = ["OmpEstimate", "angular_grid", "omp_estimate", "measurements_from_trace", "omp_baseline_gains"]


@dataclass
class OmpEstimate:
    g_hat: np.ndarray            # estimated uplink channel (m_t, m_r)
    support: list[tuple[int, int]]  # (rx-grid, tx-grid) indices in pick order
    coefs: np.ndarray
    sin_grid_t: np.ndarray
    sin_grid_r: np.ndarray


def angular_grid(size: int, angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE) -> np.ndarray:
    """Grid of sin(angle) values, uniform in sin over the range."""
    return np.linspace(np.sin(angle_range[0]), np.sin(angle_range[1]), size)


def _steering_table(m: int, sin_grid: np.ndarray) -> np.ndarray:
    return np.exp(1j * np.pi * np.outer(np.arange(m), sin_grid))  # (m, grid)


def omp_estimate(
    pilots: np.ndarray,
    w_t_rows: np.ndarray,
    w_r_rows: np.ndarray,
    geom: ArrayGeometry,
    sparsity: int,
    grid_sizes: tuple[int, int] | None = None,
    angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE,
) -> OmpEstimate:
    """K-sparse angular estimate of G from bilinear pilot measurements.

    ``pilots[i]`` must equal w_r_rows[i]^H G^H w_t_rows[i] (plus noise);
    power scaling is the caller's job.  Column selection is normalized, so
    measurement scale does not affect the recovered support.
    """
    y = np.asarray(pilots, dtype=np.complex128).ravel()
    n_meas = y.shape[0]
    if n_meas == 0:
        raise ValueError("no measurements to estimate from")
    if sparsity > n_meas:
        raise ValueError(f"sparsity {sparsity} exceeds measurement count {n_meas}")
    g_t, g_r = grid_sizes if grid_sizes is not None else (2 * geom.m_t, 2 * geom.m_r)
    sin_t = angular_grid(g_t, angle_range)
    sin_r = angular_grid(g_r, angle_range)
    if sparsity == 0:
        return OmpEstimate(
            g_hat=np.zeros((geom.m_t, geom.m_r), dtype=np.complex128),
            support=[],
            coefs=np.zeros(0, dtype=np.complex128),
            sin_grid_t=sin_t,
            sin_grid_r=sin_r,
        )

    a_t = _steering_table(geom.m_t, sin_t)
    a_r = _steering_table(geom.m_r, sin_r)
    w_t = np.asarray(w_t_rows, dtype=np.complex128)
    w_r = np.asarray(w_r_rows, dtype=np.complex128)
    c_r = w_r.conj() @ a_r          # (n_meas, g_r): w_r^H a_r
    c_t = w_t @ a_t.conj()          # (n_meas, g_t): a_t^H w_t
    phi = (c_r[:, :, None] * c_t[:, None, :]).reshape(n_meas, g_r * g_t)

    col_norms = np.linalg.norm(phi, axis=0)
    col_norms[col_norms == 0.0] = 1.0
    residual = y.copy()
    picked: list[int] = []
    for _ in range(sparsity):
        scores = np.abs(phi.conj().T @ residual) / col_norms
        scores[picked] = -1.0
        picked.append(int(np.argmax(scores)))
        basis = phi[:, picked]
        coefs, *_ = np.linalg.lstsq(basis, y, rcond=None)
        residual = y - basis @ coefs

    support = [(idx // g_t, idx % g_t) for idx in picked]
    h_hat = np.zeros((geom.m_r, geom.m_t), dtype=np.complex128)
    for (q, p), x in zip(support, coefs):
        h_hat += x * np.outer(a_r[:, q], a_t[:, p].conj())
    return OmpEstimate(
        g_hat=h_hat.conj().T,
        support=support,
        coefs=np.asarray(coefs),
        sin_grid_t=sin_t,
        sin_grid_r=sin_r,
    )


def measurements_from_trace(
    trace: EpisodeTrace, cfg: ProtocolConfig, episode: int
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Assemble all 2L measurements of one episode into (pilots, w_t, w_r).

    Pilots received at A measure G directly; their conjugates are
    measurements of H = G^H with the roles of the sensing pair swapped.
    """
    y_b = trace.y_b[:, episode] / np.sqrt(cfg.p1)
    y_a = trace.y_a[:, episode].conj() / np.sqrt(cfg.p2)
    w_t_rows = np.concatenate([trace.w_a_t[:, episode], trace.w_a_r[:, episode]])
    w_r_rows = np.concatenate([trace.w_b_r[:, episode], trace.w_b_t[:, episode]])
    return np.concatenate([y_b, y_a]), w_t_rows, w_r_rows


def omp_baseline_gains(
    cfg: ProtocolConfig,
    chans: list[ChannelRealization],
    rng: Rng,
    sparsity: int,
    grid_sizes: tuple[int, int] | None = None,
    angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE,
    sensing_seed: int = 0,
    noiseless: bool = False,
) -> np.ndarray:
    """Gains of the OMP-estimate-then-SVD baseline over a channel batch."""
    geom = chans[0].geometry
    policy = RandomSensingPolicy(geom.m_t, geom.m_r, cfg.rounds, seed=sensing_seed)
    result = run_episodes(cfg, chans, policy, rng, noiseless=noiseless)
    gains = np.zeros(len(chans))
    for i, chan in enumerate(chans):
        pilots, w_t_rows, w_r_rows = measurements_from_trace(result.trace, cfg, i)
        est = omp_estimate(pilots, w_t_rows, w_r_rows, geom, sparsity, grid_sizes, angle_range)
        if not est.support or np.linalg.norm(est.g_hat) == 0.0:
            gains[i] = 0.0
            continue
        _, u, v = top_singular_pair(est.g_hat)
        gains[i] = beamforming_gain(chan, u, v)
    return gains
