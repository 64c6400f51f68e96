import numpy as np
import pytest

from beamalign.channel import ArrayGeometry, ChannelRealization, DirectPaths, steering_ula
from beamalign.harness import ExperimentSpec, generate_channels, train
from beamalign.numerics import Rng, top_singular_pair, unit_normalize
from beamalign.nn.autodiff import constant
from beamalign.nn.cplx import to_complex, to_pairs
from beamalign.nn.layers import lstm_step
from beamalign.policies import (
    ActiveNetConfig,
    ActiveSensingPolicy,
    BisectionPolicy,
    FixedNetConfig,
    FixedSensingPolicy,
    HierarchicalCodebook,
    active_policy_finalize,
    active_policy_step,
    bcd_perfect_csi,
    omp_estimate,
    phase_match,
    power_iteration_policy,
    random_ris_baseline,
    select_strongest,
)
from beamalign.policies.omp import measurements_from_trace
from beamalign.protocol import EpisodeContext, run_episodes


def toy_active_policy(seed=0, rounds=2, hidden=3):
    cfg = ActiveNetConfig(
        m_t=4, m_r=2, rounds=rounds, hidden_a=hidden, hidden_b=hidden,
        head_hidden=(hidden,), final_hidden=(hidden,), batchnorm=False,
    )
    return ActiveSensingPolicy(cfg, seed=seed)


def make_ctx(policy, batch, spec=None, training=False, seed=50):
    spec = spec or ExperimentSpec(mode="direct", m_t=4, m_r=2, rounds=2)
    return EpisodeContext(config=spec.protocol(), batch=batch, training=training, rng=Rng(seed))


def diag_channel(diag) -> ChannelRealization:
    m = len(diag)
    g = np.diag(np.asarray(diag, dtype=complex))
    paths = DirectPaths(gains=np.ones(1, dtype=complex), aoa_t=np.zeros(1), aod_r=np.zeros(1))
    return ChannelRealization(kind="direct", geometry=ArrayGeometry(m, m), paths=paths, g=g)


class TestActivePolicy:
    def test_untrained_outputs_are_unit_norm_and_deterministic(self):
        pol = toy_active_policy()
        y = constant(np.array([[0.3, -0.1]]))
        ep1 = pol.begin_episode(make_ctx(pol, 1))
        w_t1, w_r1 = active_policy_step(ep1, "b", y)
        assert abs(np.linalg.norm(to_complex(w_t1.value)) - 1.0) < 1e-9
        assert abs(np.linalg.norm(to_complex(w_r1.value)) - 1.0) < 1e-9
        ep2 = pol.begin_episode(make_ctx(pol, 1))
        w_t2, _ = active_policy_step(ep2, "b", y)
        assert np.array_equal(w_t1.value, w_t2.value)

    def test_step_matches_layer_composition_oracle(self):
        pol = toy_active_policy(seed=7)
        ep = pol.begin_episode(make_ctx(pol, 2))
        y = constant(Rng(8).standard_normal((2, 2)))
        w_t, w_r = active_policy_step(ep, "b", y)
        from beamalign.nn.layers import LstmState

        state = lstm_step(pol.lstm_b, LstmState.zeros(2, 3), y)
        want_t = pol.f_t_b(state.s, False)
        want_r = pol.f_r_b(state.s, False)
        assert np.allclose(w_t.value, want_t.value, atol=1e-12)
        assert np.allclose(w_r.value, want_r.value, atol=1e-12)

    def test_finalize_composition_and_constraints(self):
        pol = toy_active_policy(seed=9)
        ep = pol.begin_episode(make_ctx(pol, 1))
        active_policy_step(ep, "b", constant([[0.1, 0.2]]))
        active_policy_step(ep, "a", constant([[-0.4, 0.05]]))
        final = active_policy_finalize(ep)
        assert abs(np.linalg.norm(to_complex(final["w_t"].value)) - 1.0) < 1e-9
        want = pol.g_t(ep.state_a.c, False)
        assert np.allclose(final["w_t"].value, want.value, atol=1e-12)

    def test_finalize_before_observation_rejected(self):
        pol = toy_active_policy()
        ep = pol.begin_episode(make_ctx(pol, 1))
        with pytest.raises(RuntimeError, match="before any observation"):
            ep.finalize()

    def test_ris_heads_emit_unit_modulus(self):
        cfg = ActiveNetConfig(m_t=4, m_r=2, rounds=2, n_ris=4, hidden_a=4, hidden_b=4,
                              head_hidden=(4,), final_hidden=(4,))
        pol = ActiveSensingPolicy(cfg, seed=1)
        spec = ExperimentSpec(mode="ris", m_t=4, m_r=2, n_ris=4, n_h=2, l_pt=1, l_pr=1, rounds=2)
        chans = generate_channels(spec, Rng(2), 3)
        res = run_episodes(spec.protocol(), chans, pol, Rng(3))
        assert np.max(np.abs(np.abs(res.trace.final_v) - 1.0)) < 1e-9


class TestFixedPolicy:
    def test_random_kind_reuses_sensing_vectors_across_episodes(self):
        cfg = FixedNetConfig(m_t=4, m_r=2, rounds=3, kind="random")
        pol = FixedSensingPolicy(cfg, seed=4)
        spec = ExperimentSpec(mode="direct", m_t=4, m_r=2, l_p=1, rounds=3)
        chans = generate_channels(spec, Rng(5), 2)
        t1 = run_episodes(spec.protocol(), chans, pol, Rng(6)).trace
        t2 = run_episodes(spec.protocol(), generate_channels(spec, Rng(7), 2), pol, Rng(8)).trace
        assert np.array_equal(t1.w_a_t, t2.w_a_t)
        assert np.array_equal(t1.w_b_r, t2.w_b_r)

    def test_learned_kind_moves_with_training(self):
        spec = ExperimentSpec(mode="direct", m_t=4, m_r=2, l_p=1, rounds=2, noiseless=True,
                              decoder_hidden=(8,), batch_size=32, lr=1e-2, max_steps=5,
                              eval_every=10, val_episodes=64, chunk_episodes=64)
        pol = FixedSensingPolicy(
            FixedNetConfig(m_t=4, m_r=2, rounds=2, decoder_hidden=(8,), kind="learned"), seed=4
        )
        before = pol.store.params["sense.a_t.round0"].value.copy()
        train(spec, pol)
        after = pol.store.params["sense.a_t.round0"].value
        assert not np.allclose(before, after)

    def test_decoder_output_unit_norm(self):
        cfg = FixedNetConfig(m_t=4, m_r=2, rounds=2, decoder_hidden=(8,), kind="random")
        pol = FixedSensingPolicy(cfg, seed=10)
        spec = ExperimentSpec(mode="direct", m_t=4, m_r=2, l_p=1, rounds=2)
        chans = generate_channels(spec, Rng(11), 4)
        res = run_episodes(spec.protocol(), chans, pol, Rng(12))
        norms = np.linalg.norm(res.trace.final_w_t, axis=1)
        assert np.allclose(norms, 1.0, atol=1e-9)


class TestPowerIteration:
    def test_diag_channel_converges_to_leading_axis(self):
        chan = diag_channel([3.0, 1.0])
        res = power_iteration_policy(chan, rounds=25, start=np.array([1.0, 1.0]) / np.sqrt(2))
        assert res.gain == pytest.approx(9.0, rel=1e-9)
        assert abs(res.w_t[0]) == pytest.approx(1.0, abs=1e-6)
        assert res.converged

    def test_convergence_rate_bound(self):
        chan = diag_channel([2.0, 1.0])
        res = power_iteration_policy(chan, rounds=10, start=np.array([0.6, 0.8]) / 1.0)
        assert abs(res.gain - 4.0) / 4.0 <= 0.5**20

    def test_degenerate_spectrum_is_flagged(self):
        chan = diag_channel([1.0, 1.0])
        res = power_iteration_policy(chan, rounds=10, start=np.array([0.6, 0.8]))
        assert not res.converged
        assert abs(np.linalg.norm(res.w_t) - 1.0) < 1e-12  # iterate still returned

    def test_noisy_variant_runs_and_is_not_certified(self):
        spec = ExperimentSpec(mode="direct", m_t=8, m_r=4, l_p=2)
        chan = generate_channels(spec, Rng(13), 1)[0]
        res = power_iteration_policy(chan, rounds=5, noisy=True, rng=Rng(14), noise_var=1.0)
        assert not res.converged
        assert res.gain >= 0.0


class TestOmp:
    def on_grid_channel(self, geom, grid, p, q, gain=1.0 + 0.5j):
        sin_t = np.linspace(np.sin(-np.pi / 3), np.sin(np.pi / 3), grid[0])
        sin_r = np.linspace(np.sin(-np.pi / 3), np.sin(np.pi / 3), grid[1])
        g = gain * np.outer(
            steering_ula(geom.m_t, np.arcsin(sin_t[p])),
            steering_ula(geom.m_r, np.arcsin(sin_r[q])).conj(),
        )
        return g

    def test_exact_support_recovery_noiseless(self):
        geom = ArrayGeometry(8, 4)
        grid = (16, 8)
        rng = Rng(15)
        for trial in range(20):
            p = int(rng.integers(0, grid[0]))
            q = int(rng.integers(0, grid[1]))
            g = self.on_grid_channel(geom, grid, p, q)
            w_t = np.stack([unit_normalize(rng.cnormal(8)) for _ in range(8)])
            w_r = np.stack([unit_normalize(rng.cnormal(4)) for _ in range(8)])
            y = np.einsum("im,mn,in->i", w_r.conj(), g.conj().T, w_t)
            est = omp_estimate(y, w_t, w_r, geom, sparsity=1, grid_sizes=grid)
            assert est.support == [(q, p)]
            assert np.allclose(est.g_hat, g, atol=1e-8 * np.abs(g).max())

    def test_zero_measurements_rejected(self):
        geom = ArrayGeometry(4, 2)
        with pytest.raises(ValueError, match="no measurements"):
            omp_estimate(np.zeros(0), np.zeros((0, 4)), np.zeros((0, 2)), geom, sparsity=1)

    def test_sparsity_zero_returns_zero_channel(self):
        geom = ArrayGeometry(4, 2)
        est = omp_estimate(np.ones(3), np.ones((3, 4)), np.ones((3, 2)), geom, sparsity=0)
        assert np.array_equal(est.g_hat, np.zeros((4, 2)))

    def test_sparsity_beyond_measurements_rejected(self):
        geom = ArrayGeometry(4, 2)
        with pytest.raises(ValueError, match="exceeds"):
            omp_estimate(np.ones(2), np.ones((2, 4)), np.ones((2, 2)), geom, sparsity=3)

    def test_trace_measurement_assembly(self):
        spec = ExperimentSpec(mode="direct", m_t=4, m_r=2, l_p=1, rounds=3, snr_db=10.0)
        cfg = spec.protocol()
        chans = generate_channels(spec, Rng(16), 1)
        from beamalign.policies import RandomSensingPolicy

        pol = RandomSensingPolicy(4, 2, 3, seed=17)
        res = run_episodes(cfg, chans, pol, Rng(18), noiseless=True)
        y, w_t_rows, w_r_rows = measurements_from_trace(res.trace, cfg, 0)
        assert y.shape == (6,)
        h = chans[0].g.conj().T
        manual = np.einsum("im,mn,in->i", w_r_rows.conj(), h, w_t_rows)
        assert np.allclose(y, manual, atol=1e-12)


class TestBisection:
    def test_codebook_tiles_without_gaps(self):
        book = HierarchicalCodebook(8)
        for level in range(1, book.depth + 1):
            ids = [i for i in range(book.n_nodes) if book.levels[i] == level]
            bounds = book.bounds[ids]
            assert bounds[0, 0] == pytest.approx(book.sin_range[0])
            assert bounds[-1, 1] == pytest.approx(book.sin_range[1])
            assert np.allclose(bounds[1:, 0], bounds[:-1, 1])

    def test_tie_breaks_to_lower_index(self):
        powers = np.array([[1.0, 5.0, 5.0, -np.inf]])
        expanded = np.array([[True, False, False, False]])
        assert select_strongest(powers, expanded)[0] == 1

    def test_noiseless_single_path_containment(self):
        spec = ExperimentSpec(mode="direct", m_t=16, m_r=8, l_p=1, rounds=8, noiseless=True)
        pol = BisectionPolicy(16, 8)
        chans = generate_channels(spec, Rng(19), 100)
        res = run_episodes(spec.protocol(), chans, pol, Rng(20), noiseless=True)
        ep = res.episode
        sin_a = np.sin([c.paths.aoa_t[0] for c in chans])
        sin_b = np.sin([c.paths.aod_r[0] for c in chans])
        for side, sins in ((ep.a, sin_a), (ep.b, sin_b)):
            for log in side.expansion_log:
                live = log >= 0
                assert side.book.contains(log[live], sins[live]).all()

    def test_idempotent_after_exhaustion(self):
        # m_r = 2 has depth 1: one decision exhausts the codebook; extra
        # rounds keep probing the same leaf.
        spec = ExperimentSpec(mode="direct", m_t=4, m_r=2, l_p=1, rounds=6, noiseless=True)
        pol = BisectionPolicy(4, 2)
        chans = generate_channels(spec, Rng(21), 3)
        res = run_episodes(spec.protocol(), chans, pol, Rng(22), noiseless=True)
        ep = res.episode
        assert ep.b.frozen.all()
        tr = res.trace
        assert np.array_equal(tr.w_b_r[-1], tr.w_b_r[-2])


class TestBcd:
    def test_single_element_phase_alignment(self):
        spec = ExperimentSpec(mode="ris", m_t=4, m_r=3, n_ris=1, n_h=1, l_pt=1, l_pr=1)
        chan = generate_channels(spec, Rng(23), 1)[0]
        res = bcd_perfect_csi(chan, restarts=0)
        # with one element the cascade is fixed up to phase; optimal gain is
        # sigma1^2 of the single-term cascade and v aligns the term phase
        h = chan.r_mat.conj().T @ chan.t_mat.conj().T
        sigma, _, _ = top_singular_pair(h)
        assert res.gain == pytest.approx(sigma**2, rel=1e-9)
        term = (chan.r_mat @ res.w_r).conj() * (chan.t_mat.conj().T @ res.w_t)
        aligned = term * res.v
        assert aligned[0].imag == pytest.approx(0.0, abs=1e-9)
        assert aligned[0].real > 0

    def test_phase_match_reaches_sum_of_moduli(self):
        terms = Rng(24).cnormal(6)
        v = phase_match(terms)
        assert np.allclose(np.abs(v), 1.0, atol=1e-12)
        assert abs(np.sum(terms * v)) == pytest.approx(np.sum(np.abs(terms)), rel=1e-12)
        assert np.allclose((terms * v).imag, 0.0, atol=1e-12)

    def test_objective_monotone_over_instances(self):
        spec = ExperimentSpec(mode="ris", m_t=8, m_r=4, n_ris=8, n_h=4, l_pt=2, l_pr=2)
        chans = generate_channels(spec, Rng(25), 100)
        for chan in chans:
            res = bcd_perfect_csi(chan, restarts=0)
            h = res.history
            assert np.all(np.diff(h) >= -1e-12 * np.maximum(1.0, h[:-1]))


class TestRandomRis:
    def test_unit_modulus_and_determinism(self):
        v1 = random_ris_baseline(Rng(26), 16)
        v2 = random_ris_baseline(Rng(26), 16)
        assert np.allclose(np.abs(v1), 1.0, atol=1e-12)
        assert np.array_equal(v1, v2)

    def test_phase_uniformity_chi_squared(self):
        draws = random_ris_baseline(Rng(27), 10_000)
        phases = np.angle(draws) % (2 * np.pi)
        counts, _ = np.histogram(phases, bins=16, range=(0.0, 2 * np.pi))
        expected = len(draws) / 16
        chi2 = float(np.sum((counts - expected) ** 2 / expected))
        # chi-square critical value for 15 dof at p = 0.001
        assert chi2 < 37.697
