import numpy as np
import pytest

from beamalign.channel import ArrayGeometry
from beamalign.harness import ExperimentSpec, generate_channels
from beamalign.numerics import Rng, top_singular_pair
from beamalign.nn.autodiff import Tensor, constant
from beamalign.nn.cplx import to_complex, to_pairs
from beamalign.policies import ActiveNetConfig, ActiveSensingPolicy, PerfectCsiPolicy
from beamalign.protocol import (
    ProtocolConfig,
    ProtocolViolation,
    evaluate_design,
    export_trace,
    run_episode,
    run_episodes,
)


class SentinelPolicy:
    """Emits fixed unit vectors and records exactly what each callback saw."""

    needs_csi = False
    trainable = False

    def __init__(self, m_t, m_r, n_ris=0, scale=1.0):
        self.m_t, self.m_r, self.n_ris = m_t, m_r, n_ris
        self.scale = scale  # != 1 forges a constraint violation
        self.calls: list[str] = []
        self.seen_a: list[np.ndarray] = []
        self.seen_b: list[np.ndarray] = []

    def begin_episode(self, ctx):
        self.ctx = ctx
        self.batch = ctx.batch
        return self

    def _beam(self, m):
        w = np.zeros((self.batch, m), dtype=complex)
        w[:, 0] = self.scale
        return constant(to_pairs(w))

    def _refl(self):
        return constant(to_pairs(np.ones((self.batch, self.n_ris), dtype=complex)))

    def initial_a(self):
        self.calls.append("initial_a")
        return self._beam(self.m_t), self._beam(self.m_t)

    def initial_b(self):
        self.calls.append("initial_b")
        return self._beam(self.m_r)

    def initial_v_ab(self):
        self.calls.append("initial_v_ab")
        return self._refl()

    def observe_b(self, y):
        self.calls.append(f"observe_b{len(self.seen_b)}")
        self.seen_b.append(to_complex(y.value).ravel().copy())
        return self._beam(self.m_r), self._beam(self.m_r)

    def observe_a(self, y):
        self.calls.append(f"observe_a{len(self.seen_a)}")
        self.seen_a.append(to_complex(y.value).ravel().copy())
        return self._beam(self.m_t), self._beam(self.m_t)

    def design_v_ba(self):
        self.calls.append(f"design_ba{sum(c.startswith('design_ba') for c in self.calls)}")
        return self._refl()

    def design_v_ab(self):
        self.calls.append(f"design_ab{sum(c.startswith('design_ab') for c in self.calls)}")
        return self._refl()

    def finalize(self):
        self.calls.append("finalize")
        out = {"w_t": self._beam(self.m_t), "w_r": self._beam(self.m_r)}
        if self.n_ris:
            out["v"] = self._refl()
        return out


def direct_spec(**kw):
    base = dict(mode="direct", m_t=4, m_r=3, l_p=2, rounds=3)
    base.update(kw)
    return ExperimentSpec(**base)


class TestPilotEquation:
    def test_noiseless_single_round_formula(self):
        spec = direct_spec(rounds=1, snr_db=3.0)
        cfg = spec.protocol()
        chan = generate_channels(spec, Rng(1), 1)[0]
        pol = SentinelPolicy(4, 3)
        trace = run_episode(cfg, chan, pol, Rng(2), noiseless=True)
        w_t = trace.w_a_t[0, 0]
        w_r = trace.w_b_r[0, 0]
        expected = np.sqrt(cfg.p1) * (w_r.conj() @ chan.g.conj().T @ w_t)
        assert trace.y_b[0, 0] == pytest.approx(expected, rel=1e-12)
        assert trace.n_b[0, 0] == 0.0

    def test_pilot_amplitude_is_exactly_sqrt_power(self):
        spec = direct_spec(snr_db=-2.0)
        cfg = spec.protocol()
        chans = generate_channels(spec, Rng(3), 4)
        pol = SentinelPolicy(4, 3)
        res = run_episodes(cfg, chans, pol, Rng(4))
        tr = res.trace
        for l in range(cfg.rounds):
            for b in range(4):
                clean = tr.y_b[l, b] - tr.n_b[l, b]
                manual = np.sqrt(cfg.p1) * (
                    tr.w_b_r[l, b].conj() @ chans[b].g.conj().T @ tr.w_a_t[l, b]
                )
                assert clean == pytest.approx(manual, rel=1e-12)
                clean_a = tr.y_a[l, b] - tr.n_a[l, b]
                manual_a = np.sqrt(cfg.p2) * (
                    tr.w_a_r[l, b].conj() @ chans[b].g @ tr.w_b_t[l, b]
                )
                assert clean_a == pytest.approx(manual_a, rel=1e-12)

    def test_noise_variance_scales_linearly(self):
        n = 10_000
        spec0 = direct_spec(rounds=1, snr_db=0.0)
        spec3 = direct_spec(rounds=1, snr_db=-3.010299956639812)  # doubles sigma^2
        chans = generate_channels(spec0, Rng(5), n)
        pol = SentinelPolicy(4, 3)
        clean = run_episodes(spec0.protocol(), chans, pol, Rng(6), noiseless=True).trace
        noisy0 = run_episodes(spec0.protocol(), chans, pol, Rng(6)).trace
        noisy3 = run_episodes(spec3.protocol(), chans, pol, Rng(6)).trace
        v0 = np.var(noisy0.y_b[0] - clean.y_b[0])
        v3 = np.var(noisy3.y_b[0] - clean.y_b[0])
        assert v3 / v0 == pytest.approx(2.0, rel=0.05)

    def test_overhead_accounting(self):
        spec = direct_spec(rounds=5)
        cfg = spec.protocol()
        assert cfg.pilot_overhead == 10
        chan = generate_channels(spec, Rng(7), 1)[0]
        trace = run_episode(cfg, chan, SentinelPolicy(4, 3), Rng(8))
        assert trace.rounds == 5
        assert trace.y_b.shape[0] + trace.y_a.shape[0] == cfg.pilot_overhead


class TestLocalityAndOrdering:
    def test_agents_see_only_their_own_pilots(self):
        spec = direct_spec()
        chans = generate_channels(spec, Rng(9), 1)
        pol = SentinelPolicy(4, 3)
        res = run_episodes(spec.protocol(), chans, pol, Rng(10))
        tr = res.trace
        seen_a = np.concatenate(pol.seen_a)
        seen_b = np.concatenate(pol.seen_b)
        assert np.allclose(seen_a, tr.y_a[:, 0])
        assert np.allclose(seen_b, tr.y_b[:, 0])
        # cross-side values never appear in the other agent's stream
        assert not np.isin(np.round(tr.y_b[:, 0], 12), np.round(seen_a, 12)).any()

    def test_direct_call_order(self):
        spec = direct_spec(rounds=2)
        chans = generate_channels(spec, Rng(11), 1)
        pol = SentinelPolicy(4, 3)
        run_episodes(spec.protocol(), chans, pol, Rng(12))
        assert pol.calls == [
            "initial_a", "initial_b",
            "observe_b0", "observe_a0",
            "observe_b1", "observe_a1",
            "finalize",
        ]

    def test_ris_reflection_schedule(self):
        spec = ExperimentSpec(mode="ris", m_t=4, m_r=3, n_ris=4, n_h=2, l_pt=1, l_pr=1, rounds=3)
        chans = generate_channels(spec, Rng(13), 1)
        pol = SentinelPolicy(4, 3, n_ris=4)
        run_episodes(spec.protocol(), chans, pol, Rng(14))
        assert pol.calls == [
            "initial_a", "initial_b", "initial_v_ab",
            "observe_b0", "design_ba0", "observe_a0", "design_ab0",
            "observe_b1", "design_ba1", "observe_a1", "design_ab1",
            "observe_b2", "design_ba2", "observe_a2",
            "finalize",
        ]
        # v_ab is designed once initially and L-1 times inside the loop;
        # v_ba once per round.
        tr_pol = SentinelPolicy(4, 3, n_ris=4)
        trace = run_episodes(spec.protocol(), chans, tr_pol, Rng(14)).trace
        assert trace.v_ab.shape[0] == 3
        assert trace.v_ba.shape[0] == 3


class TestConstraints:
    def test_norm_violation_aborts_with_round_and_magnitude(self):
        spec = direct_spec()
        chans = generate_channels(spec, Rng(15), 2)
        pol = SentinelPolicy(4, 3, scale=0.5)
        with pytest.raises(ProtocolViolation, match="round 0") as err:
            run_episodes(spec.protocol(), chans, pol, Rng(16))
        assert "5" in str(err.value)  # deviation magnitude 0.5 reported

    def test_modulus_violation_aborts(self):
        spec = ExperimentSpec(mode="ris", m_t=4, m_r=3, n_ris=4, n_h=2, l_pt=1, l_pr=1, rounds=2)
        chans = generate_channels(spec, Rng(17), 1)

        class BadReflection(SentinelPolicy):
            def _refl(self):
                v = np.ones((self.batch, self.n_ris), dtype=complex)
                v[:, 1] = 2.0
                return constant(to_pairs(v))

        with pytest.raises(ProtocolViolation, match="unit-modulus"):
            run_episodes(spec.protocol(), chans, BadReflection(4, 3, n_ris=4), Rng(18))


class TestDeterminismAndEvaluate:
    def test_same_seed_bit_identical(self):
        spec = direct_spec()
        chans = generate_channels(spec, Rng(19), 8)
        pol = ActiveSensingPolicy(
            ActiveNetConfig(m_t=4, m_r=3, rounds=3, hidden_a=8, hidden_b=8,
                            head_hidden=(8,), final_hidden=(8,)),
            seed=0,
        )
        r1 = run_episodes(spec.protocol(), chans, pol, Rng(20))
        r2 = run_episodes(spec.protocol(), chans, pol, Rng(20))
        assert r1.gains.tobytes() == r2.gains.tobytes()
        assert r1.trace.y_b.tobytes() == r2.trace.y_b.tobytes()

    def test_noiseless_episode_deterministic_without_rng(self):
        spec = direct_spec()
        chans = generate_channels(spec, Rng(21), 4)
        pol = SentinelPolicy(4, 3)
        g1 = run_episodes(spec.protocol(), chans, pol, Rng(1), noiseless=True).gains
        g2 = run_episodes(spec.protocol(), chans, pol, Rng(2), noiseless=True).gains
        assert np.array_equal(g1, g2)

    def test_perfect_csi_design_hits_sigma1_squared(self):
        spec = direct_spec()
        chans = generate_channels(spec, Rng(22), 6)
        res = run_episodes(spec.protocol(), chans, PerfectCsiPolicy(), Rng(23))
        for i, chan in enumerate(chans):
            sigma, _, _ = top_singular_pair(chan.g)
            assert evaluate_design(chan, res.trace, i) == pytest.approx(sigma**2, rel=1e-9)

    def test_random_design_below_optimum(self):
        spec = direct_spec()
        chans = generate_channels(spec, Rng(24), 6)
        res = run_episodes(spec.protocol(), chans, SentinelPolicy(4, 3), Rng(25))
        for i, chan in enumerate(chans):
            sigma, _, _ = top_singular_pair(chan.g)
            assert evaluate_design(chan, res.trace, i) <= sigma**2 + 1e-9

    def test_engine_gain_matches_channel_oracle(self):
        # dual route: the differentiable gain graph vs the plain numpy oracle
        spec = ExperimentSpec(mode="ris", m_t=4, m_r=3, n_ris=4, n_h=2, l_pt=2, l_pr=2, rounds=2)
        chans = generate_channels(spec, Rng(26), 5)
        res = run_episodes(spec.protocol(), chans, SentinelPolicy(4, 3, n_ris=4), Rng(27))
        for i, chan in enumerate(chans):
            assert res.gains[i] == pytest.approx(evaluate_design(chan, res.trace, i), rel=1e-12)


class TestTraceExport:
    def test_round_lines_and_final(self, tmp_path):
        spec = direct_spec(rounds=2)
        chans = generate_channels(spec, Rng(28), 2)
        res = run_episodes(spec.protocol(), chans, SentinelPolicy(4, 3), Rng(29))
        path = tmp_path / "trace.txt"
        export_trace(res.trace, path)
        lines = path.read_text().splitlines()
        assert lines[0].startswith("beamalign-trace v1")
        assert sum(1 for ln in lines if ln.startswith("round ")) == 4  # 2 episodes x 2 rounds
        assert sum(1 for ln in lines if ln.startswith("final ")) == 2
        # 17-significant-digit fields reparse exactly
        first_round = next(ln for ln in lines if ln.startswith("round "))
        vals = [float(tok) for tok in first_round.split()[2:]]
        assert np.isfinite(vals).all()
