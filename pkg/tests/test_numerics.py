import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamalign.numerics import (
    NumericsError,
    Rng,
    matmul,
    svd,
    top_singular_pair,
    unit_normalize,
)


def random_cmatrix(rng: Rng, m: int, n: int) -> np.ndarray:
    return rng.cnormal((m, n))


class TestMatmul:
    def test_identity(self):
        a = Rng(0).cnormal((2, 3))
        assert np.allclose(matmul(np.eye(2), a), a)

    def test_imaginary_unit_squares_to_minus_one(self):
        j = np.array([[1j]])
        assert np.allclose(matmul(j, j), [[-1.0]])

    def test_matches_scalar_loop_oracle(self):
        rng = Rng(1)
        a = random_cmatrix(rng, 3, 2)
        b = random_cmatrix(rng, 2, 4)
        expected = np.zeros((3, 4), dtype=complex)
        for i in range(3):
            for k in range(4):
                for l in range(2):
                    expected[i, k] += a[i, l] * b[l, k]
        assert np.allclose(matmul(a, b), expected, atol=1e-13)

    def test_dimension_mismatch_names_both_shapes(self):
        with pytest.raises(NumericsError, match="3x2.*4x5"):
            matmul(np.ones((3, 2)), np.ones((4, 5)))


def cubic_roots_hermitian(b: np.ndarray) -> np.ndarray:
    """Roots of det(B - x I) for a 3x3 Hermitian B, via Cardano.

    Independent of any eigen/SVD routine: coefficients from traces and the
    explicit determinant, solved with the trigonometric method (all roots
    real for Hermitian input).
    """
    tr = b[0, 0] + b[1, 1] + b[2, 2]
    tr2 = np.trace(b @ b)
    c2 = -tr
    c1 = 0.5 * (tr * tr - tr2)
    det = (
        b[0, 0] * (b[1, 1] * b[2, 2] - b[1, 2] * b[2, 1])
        - b[0, 1] * (b[1, 0] * b[2, 2] - b[1, 2] * b[2, 0])
        + b[0, 2] * (b[1, 0] * b[2, 1] - b[1, 1] * b[2, 0])
    )
    c0 = -det
    c2, c1, c0 = float(c2.real), float(c1.real), float(c0.real)
    # depressed cubic t^3 + p t + q with x = t - c2/3
    p = c1 - c2 * c2 / 3.0
    q = 2.0 * c2**3 / 27.0 - c2 * c1 / 3.0 + c0
    if abs(p) < 1e-30:
        t = np.full(3, -np.cbrt(q))
    else:
        m = 2.0 * np.sqrt(-p / 3.0)
        arg = np.clip(3.0 * q / (p * m), -1.0, 1.0)
        theta = np.arccos(arg) / 3.0
        t = m * np.cos(theta - 2.0 * np.pi * np.arange(3) / 3.0)
    return np.sort(t - c2 / 3.0)[::-1]


class TestSvd:
    def test_diagonal(self):
        r = svd(np.diag([3.0, 1.0]))
        assert np.allclose(r.singular_values, [3.0, 1.0])
        assert np.allclose(r.left_vectors[:, 0], [1.0, 0.0], atol=1e-12)
        assert np.allclose(r.right_vectors[:, 0], [1.0, 0.0], atol=1e-12)

    def test_rank_one(self):
        rng = Rng(2)
        u = unit_normalize(rng.cnormal(5))
        v = unit_normalize(rng.cnormal(3))
        r = svd(2.0 * np.outer(u, v.conj()))
        assert abs(r.singular_values[0] - 2.0) < 1e-12
        assert abs(r.singular_values[1]) < 1e-12

    def test_squared_singulars_match_cubic_root_oracle(self):
        a = random_cmatrix(Rng(3), 4, 3)
        expected = cubic_roots_hermitian(a.conj().T @ a)
        got = svd(a).singular_values ** 2
        assert np.allclose(got, expected, rtol=1e-10, atol=1e-10)

    def test_empty_rejected(self):
        with pytest.raises(NumericsError):
            svd(np.zeros((0, 0)))

    @settings(max_examples=25, deadline=None)
    @given(st.integers(2, 8), st.integers(2, 8), st.integers(0, 10_000))
    def test_reconstruction_and_norms(self, m, n, seed):
        a = random_cmatrix(Rng(seed), m, n)
        r = svd(a)
        s = r.singular_values
        assert np.all(np.diff(s) <= 1e-12) and np.all(s >= 0.0)
        rel = np.linalg.norm(a - r.reconstruct()) / np.linalg.norm(a)
        assert rel < 1e-9
        assert np.allclose(np.linalg.norm(r.left_vectors, axis=0), 1.0, atol=1e-12)
        assert np.allclose(np.linalg.norm(r.right_vectors, axis=0), 1.0, atol=1e-12)


class TestTopSingularPair:
    def test_diagonal(self):
        sigma, u, v = top_singular_pair(np.diag([3.0, 1.0]))
        assert sigma == pytest.approx(3.0)
        assert np.allclose(u, [1.0, 0.0], atol=1e-12)
        assert np.allclose(v, [1.0, 0.0], atol=1e-12)

    def test_scaling_homogeneity(self):
        a = random_cmatrix(Rng(4), 5, 4)
        s1, u1, v1 = top_singular_pair(a)
        s2, u2, v2 = top_singular_pair(2.5 * a)
        assert s2 == pytest.approx(2.5 * s1, rel=1e-12)
        assert np.allclose(u1, u2, atol=1e-10)
        assert np.allclose(v1, v2, atol=1e-10)

    def test_phase_convention(self):
        a = random_cmatrix(Rng(5), 6, 3)
        _, u, _ = top_singular_pair(a)
        lead = u[np.argmax(np.abs(u) > 1e-12 * np.abs(u).max())]
        assert abs(lead.imag) < 1e-12 and lead.real > 0.0

    def test_dominates_random_pairs(self):
        rng = Rng(6)
        a = random_cmatrix(rng, 8, 4)
        sigma, u, v = top_singular_pair(a)
        best = sigma**2
        for _ in range(1000):
            w_t = unit_normalize(rng.cnormal(8))
            w_r = unit_normalize(rng.cnormal(4))
            val = abs(w_r.conj() @ a.conj().T @ w_t) ** 2
            assert val <= best + 1e-9


class TestUnitNormalize:
    def test_three_four_five(self):
        assert np.allclose(unit_normalize([3.0, 4.0]), [0.6, 0.8])

    def test_idempotent_on_unit_vector(self):
        x = unit_normalize(Rng(7).cnormal(5))
        assert np.allclose(unit_normalize(x), x, atol=1e-15)

    def test_random_vector_lands_on_unit_sphere(self):
        x = unit_normalize(Rng(8).cnormal(16))
        assert abs(np.linalg.norm(x) - 1.0) < 1e-12

    def test_zero_vector_rejected(self):
        with pytest.raises(NumericsError):
            unit_normalize(np.zeros(4))


class TestRng:
    def test_same_seed_same_stream(self):
        a = Rng(123).cnormal(100)
        b = Rng(123).cnormal(100)
        assert a.tobytes() == b.tobytes()

    def test_children_depend_only_on_index(self):
        r = Rng(9)
        r.cnormal(10)  # burn some draws; children must not care
        a = r.child(3).standard_normal(5)
        b = Rng(9).child(3).standard_normal(5)
        assert a.tobytes() == b.tobytes()

    def test_phases_are_unit_modulus(self):
        p = Rng(10).phases(50)
        assert np.allclose(np.abs(p), 1.0, atol=1e-15)
