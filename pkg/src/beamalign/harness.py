"""Experiment harness: training, Monte Carlo evaluation, and figure data.

Everything is seeded and chunked: evaluation splits its episode budget
into fixed-size chunks whose RNG streams depend only on (seed, chunk
index), so results are bit-identical no matter how chunks are scheduled.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .channel import (
    ArrayGeometry,
    ChannelRealization,
    DirectPaths,
    RisPaths,
    array_response,
    array_response_ris,
    generate_direct_batch,
    generate_ris_batch,
)
from .numerics import Rng
from .nn.autodiff import backward, mean_, neg
from .nn.optim import adam_step
from .policies import (
    ActiveNetConfig,
    ActiveSensingPolicy,
    BisectionPolicy,
    FixedNetConfig,
    FixedSensingPolicy,
    PerfectCsiPolicy,
    RandomRisCsiPolicy,
    bcd_perfect_csi,
    omp_baseline_gains,
    power_iteration_policy,
)
from .protocol import ProtocolConfig, run_episodes

__all__ = [
    "ExperimentSpec",
    "MetricRow",
    "TrainResult",
    "DirectionStats",
    "TRAINABLE_POLICIES",
    "EPISODE_POLICIES",
    "ANALYTIC_BASELINES",
    "make_policy",
    "generate_channels",
    "policy_gains",
    "named_gains",
    "evaluate",
    "train",
    "validation_gain",
    "direction_stats",
    "generalization_sweep",
    "beam_pattern_table",
    "beam_patterns_from_trace",
    "write_metric_csv",
    "TrainingDiverged",
]

TRAINABLE_POLICIES = (
    "active",
    "active-learned-ris",
    "active-random-ris",
    "fixed-learned",
    "fixed-random",
)
EPISODE_POLICIES = TRAINABLE_POLICIES + ("perfect-csi", "random-ris-csi", "bisection")
ANALYTIC_BASELINES = ("perfect-csi", "random-ris-csi", "bisection", "omp", "power-iteration", "bcd")


class TrainingDiverged(RuntimeError):
    pass


@dataclass(frozen=True)
class ExperimentSpec:
    """One experiment's geometry, channel statistics, protocol, and budgets."""

    mode: str = "direct"
    m_t: int = 16
    m_r: int = 8
    n_ris: int = 16
    n_h: int = 4
    l_p: int = 3
    l_pt: int = 3
    l_pr: int = 3
    angle_min_deg: float = -60.0
    angle_max_deg: float = 60.0
    rounds: int = 4
    snr_db: float = 0.0
    noiseless: bool = False  # zero pilot noise (oracle experiments only)
    # network architecture
    hidden_a: int = 64
    hidden_b: int = 64
    head_hidden: tuple[int, ...] = (64, 64)
    final_hidden: tuple[int, ...] = (64, 64)
    decoder_hidden: tuple[int, ...] = (64, 64)
    batchnorm: bool = True
    tied: bool = True
    unit_modulus_beams: bool = False
    policy_seed: int = 0
    # training budget
    batch_size: int = 1024
    lr: float = 1e-4
    lr_final: float = 1e-5
    max_steps: int = 5000
    eval_every: int = 50
    patience: int = 10
    val_episodes: int = 10000
    train_seed: int = 1
    # evaluation
    eval_episodes: int = 10000
    eval_seed: int = 2
    chunk_episodes: int = 1000
    workers: int = 1
    # baseline knobs
    omp_sparsity: int = 0  # 0 -> l_p
    omp_grid_t: int = 0  # 0 -> 2 m_t
    omp_grid_r: int = 0  # 0 -> 2 m_r
    bcd_iters: int = 200
    bcd_tol: float = 1e-12
    bcd_restarts: int = 2
    codebook_grid: int = 512

    @property
    def geometry(self) -> ArrayGeometry:
        if self.mode == "ris":
            return ArrayGeometry(self.m_t, self.m_r, self.n_ris, self.n_h)
        return ArrayGeometry(self.m_t, self.m_r)

    @property
    def angle_range(self) -> tuple[float, float]:
        return (math.radians(self.angle_min_deg), math.radians(self.angle_max_deg))

    def protocol(self) -> ProtocolConfig:
        # P1 = P2 = 1 and sigma^2 = 10^(-SNR/10), so SNR means P/sigma^2.
        return ProtocolConfig(
            rounds=self.rounds,
            p1=1.0,
            p2=1.0,
            noise_var=10.0 ** (-self.snr_db / 10.0),
            mode=self.mode,
        )


@dataclass
class MetricRow:
    policy: str
    rounds: int
    snr_db: float
    mean_gain: float
    stderr: float
    n: int

    @property
    def overhead(self) -> int:
        return 2 * self.rounds

    @property
    def mean_gain_db(self) -> float:
        return 10.0 * math.log10(self.mean_gain)

    @property
    def stderr_db(self) -> float:
        # Delta-method: d(10 log10 x) = (10/ln10) dx/x.
        return 10.0 / math.log(10.0) * self.stderr / self.mean_gain


def write_metric_csv(rows, path) -> None:
    with open(path, "w", newline="", encoding="ascii") as fh:
        out = csv.writer(fh)
        out.writerow(["policy", "L", "overhead", "snr_db", "mean_gain_db", "stderr_db", "n"])
        for r in rows:
            out.writerow(
                [
                    r.policy,
                    r.rounds,
                    r.overhead,
                    f"{r.snr_db:.6g}",
                    f"{r.mean_gain_db:.12g}",
                    f"{r.stderr_db:.12g}",
                    r.n,
                ]
            )


def make_policy(spec: ExperimentSpec, name: str):
    """Instantiate a policy object for every episode-driven strategy."""
    ris = spec.mode == "ris"
    if name in ("active", "active-learned-ris", "active-random-ris"):
        if name != "active" and not ris:
            raise ValueError(f"{name} requires ris mode")
        ris_mode = {"active": "active", "active-learned-ris": "learned", "active-random-ris": "random"}[name]
        cfg = ActiveNetConfig(
            m_t=spec.m_t,
            m_r=spec.m_r,
            rounds=spec.rounds,
            n_ris=spec.n_ris if ris else 0,
            hidden_a=spec.hidden_a,
            hidden_b=spec.hidden_b,
            head_hidden=spec.head_hidden,
            final_hidden=spec.final_hidden,
            batchnorm=spec.batchnorm,
            tied=spec.tied,
            ris_mode=ris_mode,
            unit_modulus_beams=spec.unit_modulus_beams,
        )
        return ActiveSensingPolicy(cfg, seed=spec.policy_seed)
    if name in ("fixed-learned", "fixed-random"):
        cfg = FixedNetConfig(
            m_t=spec.m_t,
            m_r=spec.m_r,
            rounds=spec.rounds,
            n_ris=spec.n_ris if ris else 0,
            decoder_hidden=spec.decoder_hidden,
            batchnorm=spec.batchnorm,
            kind="learned" if name == "fixed-learned" else "random",
        )
        return FixedSensingPolicy(cfg, seed=spec.policy_seed)
    if name == "perfect-csi":
        return PerfectCsiPolicy(spec.bcd_iters, spec.bcd_tol, spec.bcd_restarts)
    if name == "random-ris-csi":
        if not ris:
            raise ValueError("random-ris-csi requires ris mode")
        return RandomRisCsiPolicy()
    if name == "bisection":
        if ris:
            raise ValueError("bisection is a direct-mode baseline")
        return BisectionPolicy(spec.m_t, spec.m_r, spec.angle_range, grid=spec.codebook_grid)
    raise ValueError(f"unknown policy {name!r}; episode policies: {EPISODE_POLICIES}")


def generate_channels(
    spec: ExperimentSpec, rng: Rng, n: int, l_p: int | None = None
) -> list[ChannelRealization]:
    geom = spec.geometry
    if spec.mode == "direct":
        g, paths = generate_direct_batch(geom, l_p or spec.l_p, rng, n, spec.angle_range)
        return [
            ChannelRealization(
                kind="direct",
                geometry=geom,
                paths=DirectPaths(gains=paths.gains[i], aoa_t=paths.aoa_t[i], aod_r=paths.aod_r[i]),
                g=g[i],
            )
            for i in range(n)
        ]
    t, r, p = generate_ris_batch(geom, l_p or spec.l_pt, spec.l_pr, rng, n, spec.angle_range)
    return [
        ChannelRealization(
            kind="ris",
            geometry=geom,
            paths=RisPaths(
                t_gains=p.t_gains[i],
                t_phi=p.t_phi[i],
                t_theta=p.t_theta[i],
                t_phi_ris=p.t_phi_ris[i],
                t_theta_ris=p.t_theta_ris[i],
                r_gains=p.r_gains[i],
                r_phi_ris=p.r_phi_ris[i],
                r_theta_ris=p.r_theta_ris[i],
                r_phi=p.r_phi[i],
                r_theta=p.r_theta[i],
            ),
            t_mat=t[i],
            r_mat=r[i],
        )
        for i in range(n)
    ]


def _chunk_sizes(total: int, chunk: int) -> list[int]:
    full, rest = divmod(total, chunk)
    return [chunk] * full + ([rest] if rest else [])


def policy_gains(
    spec: ExperimentSpec,
    policy,
    n_episodes: int,
    seed: int,
    l_p: int | None = None,
    noiseless: bool | None = None,
) -> np.ndarray:
    """Per-episode gains of an episode-driven policy over fresh channels."""
    cfg = spec.protocol()
    noiseless = spec.noiseless if noiseless is None else noiseless

    def one_chunk(args):
        idx, size = args
        base = Rng(seed).child(idx)
        chans = generate_channels(spec, base.child(0), size, l_p)
        res = run_episodes(cfg, chans, policy, base.child(1), noiseless=noiseless, record_trace=False)
        return res.gains

    jobs = list(enumerate(_chunk_sizes(n_episodes, spec.chunk_episodes)))
    if spec.workers > 1:
        with ThreadPoolExecutor(max_workers=spec.workers) as pool:
            parts = list(pool.map(one_chunk, jobs))
    else:
        parts = [one_chunk(j) for j in jobs]
    return np.concatenate(parts)


def named_gains(
    spec: ExperimentSpec,
    name: str,
    n_episodes: int,
    seed: int,
    policy=None,
    l_p: int | None = None,
    noiseless: bool | None = None,
) -> np.ndarray:
    """Per-episode gains for any strategy name, including non-episode baselines."""
    noiseless = spec.noiseless if noiseless is None else noiseless
    if name == "omp":
        cfg = spec.protocol()
        gains = []
        for idx, size in enumerate(_chunk_sizes(n_episodes, spec.chunk_episodes)):
            base = Rng(seed).child(idx)
            chans = generate_channels(spec, base.child(0), size, l_p)
            gains.append(
                omp_baseline_gains(
                    cfg,
                    chans,
                    base.child(1),
                    sparsity=spec.omp_sparsity or (l_p or spec.l_p),
                    grid_sizes=(spec.omp_grid_t or 2 * spec.m_t, spec.omp_grid_r or 2 * spec.m_r),
                    angle_range=spec.angle_range,
                    sensing_seed=spec.policy_seed,
                    noiseless=noiseless,
                )
            )
        return np.concatenate(gains)
    if name in ("power-iteration", "power-iteration-noisy"):
        noisy = name.endswith("noisy")
        cfg = spec.protocol()
        gains = []
        for idx, size in enumerate(_chunk_sizes(n_episodes, spec.chunk_episodes)):
            base = Rng(seed).child(idx)
            chans = generate_channels(spec, base.child(0), size, l_p)
            noise_rng = base.child(1)
            for i, chan in enumerate(chans):
                res = power_iteration_policy(
                    chan,
                    spec.rounds,
                    noisy=noisy,
                    rng=noise_rng.child(i) if noisy else None,
                    noise_var=cfg.noise_var,
                )
                gains.append(res.gain)
        return np.asarray(gains)
    if name == "bcd":
        if spec.mode != "ris":
            raise ValueError("bcd requires ris mode")
        gains = []
        for idx, size in enumerate(_chunk_sizes(n_episodes, spec.chunk_episodes)):
            base = Rng(seed).child(idx)
            chans = generate_channels(spec, base.child(0), size, l_p)
            bcd_rng = base.child(1)
            for i, chan in enumerate(chans):
                res = bcd_perfect_csi(
                    chan, spec.bcd_iters, spec.bcd_tol, restarts=spec.bcd_restarts, rng=bcd_rng.child(i)
                )
                gains.append(res.gain)
        return np.asarray(gains)
    if policy is None:
        policy = make_policy(spec, name)
    return policy_gains(spec, policy, n_episodes, seed, l_p, noiseless)


def evaluate(
    spec: ExperimentSpec,
    name: str,
    n_episodes: int | None = None,
    seed: int | None = None,
    policy=None,
    l_p: int | None = None,
) -> MetricRow:
    """Mean gain and standard error over fresh evaluation episodes."""
    n = n_episodes or spec.eval_episodes
    gains = named_gains(spec, name, n, spec.eval_seed if seed is None else seed, policy, l_p)
    return MetricRow(
        policy=name,
        rounds=spec.rounds,
        snr_db=spec.snr_db,
        mean_gain=float(gains.mean()),
        stderr=float(gains.std(ddof=1) / np.sqrt(len(gains))),
        n=len(gains),
    )


# ---------------------------------------------------------------------------
# Training
# ---------------------------------------------------------------------------


@dataclass
class CurvePoint:
    step: int
    train_loss: float
    val_gain_db: float | None = None


@dataclass
class TrainResult:
    curve: list[CurvePoint] = field(default_factory=list)
    best_val_gain: float = -np.inf
    steps_run: int = 0
    diverged: bool = False

    @property
    def best_val_gain_db(self) -> float:
        return 10.0 * math.log10(self.best_val_gain)


def validation_gain(
    spec: ExperimentSpec, policy, chans, seed: int, chunk: int = 2000
) -> float:
    """Mean gain on a fixed channel set with a fixed noise stream (eval mode)."""
    cfg = spec.protocol()
    total = 0.0
    base = Rng(seed)
    for idx in range(0, len(chans), chunk):
        part = chans[idx : idx + chunk]
        res = run_episodes(
            cfg, part, policy, base.child(idx), noiseless=spec.noiseless, record_trace=False
        )
        total += float(res.gains.sum())
    return total / len(chans)


def train(
    spec: ExperimentSpec,
    policy,
    max_steps: int | None = None,
    log=None,
) -> TrainResult:
    """Adam training of a policy on freshly generated channel/noise batches.

    Maximizes the mean episode gain (loss is its negative).  Validation on
    a fixed set of ``val_episodes`` channels gates both learning-rate decay
    (one factor-of-10 drop to ``lr_final`` after ``patience`` flat
    evaluations) and early stopping (a second flat plateau).  Returns with
    the best-validation parameters restored.  A non-finite loss aborts and
    restores the last best parameters.
    """
    if not getattr(policy, "trainable", False):
        raise ValueError("policy is not trainable")
    cfg = spec.protocol()
    steps = spec.max_steps if max_steps is None else max_steps
    result = TrainResult()
    store = policy.store

    base = Rng(spec.train_seed)
    chan_rng = base.child(0)
    noise_base = base.child(1)
    val_chans = generate_channels(spec, base.child(2), spec.val_episodes)
    val_noise_seed = base.child(3).seed

    best = store.snapshot()
    result.best_val_gain = validation_gain(spec, policy, val_chans, val_noise_seed)
    result.curve.append(CurvePoint(0, float("nan"), 10.0 * math.log10(result.best_val_gain)))
    lr = spec.lr
    flat = 0
    for step in range(1, steps + 1):
        chans = generate_channels(spec, chan_rng, spec.batch_size)
        res = run_episodes(
            cfg, chans, policy, noise_base.child(step),
            noiseless=spec.noiseless, training=True, record_trace=False,
        )
        loss = neg(mean_(res.gain))
        if not np.isfinite(loss.value):
            store.restore(best)
            result.diverged = True
            result.steps_run = step
            return result
        backward(loss)
        store.ensure_grads()
        adam_step(store, lr)
        store.zero_grads()
        result.steps_run = step

        point = CurvePoint(step, float(loss.value))
        if step % spec.eval_every == 0 or step == steps:
            val = validation_gain(spec, policy, val_chans, val_noise_seed)
            point.val_gain_db = 10.0 * math.log10(val)
            if val > result.best_val_gain:
                result.best_val_gain = val
                best = store.snapshot()
                flat = 0
            else:
                flat += 1
            if flat >= spec.patience:
                if lr > spec.lr_final * 1.0001:
                    lr = max(lr * 0.1, spec.lr_final)
                    flat = 0
                else:
                    result.curve.append(point)
                    break
        result.curve.append(point)
        if log is not None:
            log(point)
    store.restore(best)
    return result


# ---------------------------------------------------------------------------
# Interpretation metrics
# ---------------------------------------------------------------------------


@dataclass
class DirectionStats:
    """Which effective direction each final design matches, plus gain histograms."""

    proportions: np.ndarray  # (3,)
    matched_gain_db: list[np.ndarray]  # per direction, 10log10 of the matched direction gain
    n: int


def direction_stats(
    spec: ExperimentSpec, name: str, n_episodes: int, seed: int, policy=None
) -> DirectionStats:
    if spec.mode != "direct":
        raise ValueError("direction statistics are defined for direct channels")
    if spec.l_p < 3:
        raise ValueError("direction statistics need at least 3 paths")
    cfg = spec.protocol()
    if policy is None:
        policy = make_policy(spec, name)
    counts = np.zeros(3, dtype=int)
    matched: list[list[float]] = [[], [], []]
    for idx, size in enumerate(_chunk_sizes(n_episodes, spec.chunk_episodes)):
        base = Rng(seed).child(idx)
        chans = generate_channels(spec, base.child(0), size)
        res = run_episodes(cfg, chans, policy, base.child(1), record_trace=True)
        g = np.stack([c.g for c in chans])
        u, _, vh = np.linalg.svd(g)
        u3 = u[:, :, :3]
        v3 = vh[:, :3, :].conj().transpose(0, 2, 1)
        w_t = res.trace.final_w_t
        w_r = res.trace.final_w_r
        a = np.abs(np.einsum("bm,bmi->bi", w_t.conj(), u3)) ** 2
        b = np.abs(np.einsum("bmi,bm->bi", v3.conj(), w_r)) ** 2
        dg = a * b
        cls = np.argmax(dg, axis=1)
        for i in range(3):
            sel = cls == i
            counts[i] += int(sel.sum())
            if sel.any():
                matched[i].extend(10.0 * np.log10(np.maximum(dg[sel, i], 1e-300)))
    return DirectionStats(
        proportions=counts / counts.sum(),
        matched_gain_db=[np.asarray(m) for m in matched],
        n=int(counts.sum()),
    )


def generalization_sweep(
    spec: ExperimentSpec,
    name: str,
    path_counts,
    n_episodes: int | None = None,
    seed: int | None = None,
    policy=None,
) -> list[MetricRow]:
    """Evaluate a (trained) policy across channels with different path counts."""
    rows = []
    for l_p in path_counts:
        row = evaluate(spec, name, n_episodes, seed, policy=policy, l_p=l_p)
        rows.append(replace_policy_label(row, f"{name}@l_p={l_p}"))
    return rows


def replace_policy_label(row: MetricRow, label: str) -> MetricRow:
    return MetricRow(
        policy=label,
        rounds=row.rounds,
        snr_db=row.snr_db,
        mean_gain=row.mean_gain,
        stderr=row.stderr,
        n=row.n,
    )


# ---------------------------------------------------------------------------
# Beam patterns
# ---------------------------------------------------------------------------


def beam_pattern_table(w: np.ndarray, n_points: int = 361, ris: bool = False) -> np.ndarray:
    """(angle_deg, response) rows on a uniform grid over [-90, 90] degrees."""
    angles = np.linspace(-90.0, 90.0, n_points)
    resp = np.empty_like(angles)
    for i, deg in enumerate(angles):
        theta = math.radians(deg)
        resp[i] = array_response_ris(w, theta) if ris else array_response(w, theta)
    return np.stack([angles, resp], axis=1)


def beam_patterns_from_trace(trace, episode: int = 0, n_points: int = 361) -> dict[str, np.ndarray]:
    """Pattern tables for every sensing round and the final design."""
    out: dict[str, np.ndarray] = {}
    for l in range(trace.rounds):
        out[f"round{l}_w_a_t"] = beam_pattern_table(trace.w_a_t[l, episode], n_points)
        out[f"round{l}_w_b_r"] = beam_pattern_table(trace.w_b_r[l, episode], n_points)
        out[f"round{l}_w_b_t"] = beam_pattern_table(trace.w_b_t[l, episode], n_points)
        out[f"round{l}_w_a_r"] = beam_pattern_table(trace.w_a_r[l, episode], n_points)
        if trace.v_ab is not None:
            out[f"round{l}_v_ab"] = beam_pattern_table(trace.v_ab[l, episode], n_points, ris=True)
            out[f"round{l}_v_ba"] = beam_pattern_table(trace.v_ba[l, episode], n_points, ris=True)
    out["final_w_t"] = beam_pattern_table(trace.final_w_t[episode], n_points)
    out["final_w_r"] = beam_pattern_table(trace.final_w_r[episode], n_points)
    if trace.final_v is not None:
        out["final_v"] = beam_pattern_table(trace.final_v[episode], n_points, ris=True)
    return out
