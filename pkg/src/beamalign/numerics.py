"""Complex linear algebra primitives and a deterministic RNG.

Everything here works on plain ``complex128`` numpy arrays in double
precision; matrices are row-major 2-D arrays.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "NumericsError",
    "SvdResult",
    "Rng",
    "as_cmatrix",
    "matmul",
    "svd",
    "top_singular_pair",
    "unit_normalize",
]

_SVD_RECON_TOL = 1e-9


class NumericsError(ValueError):
    """Raised on shape mismatches, degenerate inputs, or failed decompositions."""


def as_cmatrix(a) -> np.ndarray:
    """Coerce ``a`` to a 2-D complex128 array (no copy when already one)."""
    m = np.asarray(a, dtype=np.complex128)
    if m.ndim == 1:
        m = m[:, None]
    if m.ndim != 2:
        raise NumericsError(f"expected a matrix, got array of ndim {m.ndim}")
    return m


def matmul(a, b) -> np.ndarray:
    """Complex matrix product with an explicit shape check."""
    a = as_cmatrix(a)
    b = as_cmatrix(b)
    if a.shape[1] != b.shape[0]:
        raise NumericsError(
            f"matmul dimension mismatch: {a.shape[0]}x{a.shape[1]} times "
            f"{b.shape[0]}x{b.shape[1]}"
        )
    return a @ b


@dataclass(frozen=True)
class SvdResult:
    """Thin SVD ``A = U diag(s) V^H`` with deterministic column phases.

    ``singular_values`` is sorted descending and non-negative;
    ``left_vectors``/``right_vectors`` hold unit-norm columns u_i / v_i.
    """

    singular_values: np.ndarray
    left_vectors: np.ndarray
    right_vectors: np.ndarray

    def reconstruct(self) -> np.ndarray:
        return (self.left_vectors * self.singular_values) @ self.right_vectors.conj().T

    @property
    def rank(self) -> int:
        s = self.singular_values
        if s.size == 0 or s[0] == 0.0:
            return 0
        return int(np.sum(s > 1e-12 * s[0]))


def _fix_phases(u: np.ndarray, v: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    # Rotate each (u_i, v_i) pair by a common unit phase so that the first
    # entry of u_i whose modulus exceeds 1e-12 * max|u_i| is real-positive.
    # The common rotation leaves u_i v_i^H unchanged.
    u = u.copy()
    v = v.copy()
    for i in range(u.shape[1]):
        col = u[:, i]
        mags = np.abs(col)
        big = mags > 1e-12 * mags.max()
        if not big.any():
            continue
        j = int(np.argmax(big))
        phase = col[j] / mags[j]
        u[:, i] *= phase.conjugate()
        v[:, i] *= phase.conjugate()
    return u, v


def svd(a) -> SvdResult:
    """Thin SVD of a nonempty complex matrix.

    Ties between equal singular values are broken by the underlying LAPACK
    driver's deterministic ordering (stable for a fixed build); the phase
    of each singular-vector pair is then pinned by :func:`_fix_phases`.
    """
    a = as_cmatrix(a)
    if a.size == 0:
        raise NumericsError("svd of an empty matrix")
    try:
        u, s, vh = np.linalg.svd(a, full_matrices=False)
    except np.linalg.LinAlgError as exc:
        raise NumericsError(f"svd did not converge for shape {a.shape}: {exc}") from exc
    u, v = _fix_phases(u, vh.conj().T)
    result = SvdResult(singular_values=s, left_vectors=u, right_vectors=v)
    scale = np.linalg.norm(a)
    if scale > 0.0:
        residual = np.linalg.norm(a - result.reconstruct()) / scale
        if residual > _SVD_RECON_TOL:
            raise NumericsError(f"svd reconstruction residual {residual:.3e} exceeds tolerance")
    return result


def top_singular_pair(a) -> tuple[float, np.ndarray, np.ndarray]:
    """Return (sigma_1, u_max, v_max) with the pinned phase convention."""
    r = svd(a)
    return float(r.singular_values[0]), r.left_vectors[:, 0].copy(), r.right_vectors[:, 0].copy()


def unit_normalize(x) -> np.ndarray:
    """Scale a complex vector to unit Euclidean norm."""
    x = np.asarray(x, dtype=np.complex128)
    n = np.linalg.norm(x)
    if n < 1e-300:
        raise NumericsError("cannot normalize a zero vector")
    return x / n


class Rng:
    """Seeded PCG64 stream; identical seed gives a bit-identical stream.

    Child streams derived by :meth:`child` depend only on (seed, index),
    never on how many draws the parent has made, so chunked Monte Carlo
    runs reproduce regardless of scheduling.
    """

    def __init__(self, seed: int):
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.PCG64(self.seed))

    def child(self, index: int) -> "Rng":
        ss = np.random.SeedSequence(entropy=self.seed, spawn_key=(int(index),))
        return Rng(int(ss.generate_state(1, np.uint64)[0]))

    def uniform(self, low: float, high: float, size=None) -> np.ndarray:
        return self._gen.uniform(low, high, size)

    def standard_normal(self, size=None) -> np.ndarray:
        return self._gen.standard_normal(size)

    def cnormal(self, size=None, var: float = 1.0) -> np.ndarray:
        """Circularly symmetric complex normal CN(0, var) draws."""
        scale = np.sqrt(var / 2.0)
        re = self._gen.standard_normal(size)
        im = self._gen.standard_normal(size)
        return scale * (re + 1j * im)

    def phases(self, size=None) -> np.ndarray:
        """Unit-modulus draws e^{j omega} with omega uniform on [0, 2pi)."""
        return np.exp(1j * self._gen.uniform(0.0, 2.0 * np.pi, size))

    def integers(self, low: int, high: int, size=None) -> np.ndarray:
        return self._gen.integers(low, high, size)

    def shuffle(self, x) -> None:
        self._gen.shuffle(x)
