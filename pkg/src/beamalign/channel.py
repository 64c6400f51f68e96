"""Sparse multipath mmWave channels, direct and RIS-cascaded.

Conventions used throughout the package:

* ``G`` (m_t x m_r) is the uplink channel seen at agent A (the Tx side);
  the downlink channel is ``G^H``.  TDD reciprocity is assumed.
* RIS channels come as the pair ``T`` (m_t x n, RIS -> Tx) and ``R``
  (n x m_r, Rx -> RIS).  For a reflection vector v the A->B cascade is
  ``R^H diag(v) T^H`` and the B->A cascade is ``T diag(conj(v)) R``, so
  that ``(G_ab)^H == G_ba`` holds exactly for the same v.
* Steering vectors are stored unnormalized (unit-modulus entries); the
  1/sqrt(M) normalization only enters :func:`array_response`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .numerics import NumericsError, Rng, svd

__all__ = [
    "ArrayGeometry",
    "DirectPaths",
    "RisPaths",
    "ChannelRealization",
    "DEFAULT_ANGLE_RANGE",
    "steering_ula",
    "steering_ula_azel",
    "steering_ris",
    "assemble_direct",
    "assemble_ris",
    "generate_direct",
    "generate_ris",
    "generate_direct_batch",
    "generate_ris_batch",
    "cascaded",
    "effective_downlink",
    "effective_uplink",
    "beamforming_gain",
    "array_response",
    "array_response_ris",
    "direction_gain",
    "dump_channels",
    "load_channels",
]

#: Azimuth/elevation generation range in radians: [-60 deg, 60 deg].
DEFAULT_ANGLE_RANGE = (-math.pi / 3.0, math.pi / 3.0)

_UNIT_TOL = 1e-9


@dataclass(frozen=True)
class ArrayGeometry:
    """Antenna counts: Tx/Rx ULAs plus an optional rectangular RIS grid."""

    m_t: int
    m_r: int
    n_ris: int = 0
    n_h: int = 0

    def __post_init__(self):
        if self.m_t < 1 or self.m_r < 1:
            raise ValueError("antenna counts must be positive")
        if self.n_ris:
            if self.n_h < 1 or self.n_ris % self.n_h != 0:
                raise ValueError(
                    f"RIS grid must be rectangular: n_ris={self.n_ris} not divisible "
                    f"by n_h={self.n_h}"
                )


def steering_ula(m_antennas: int, phi: float) -> np.ndarray:
    """ULA steering vector, entry m = exp(j*pi*(m-1)*sin(phi))."""
    m = np.arange(m_antennas)
    return np.exp(1j * np.pi * m * np.sin(phi))


def steering_ula_azel(m_antennas: int, phi: float, theta: float) -> np.ndarray:
    """ULA steering for a 3-D geometry, entry m = exp(j*pi*(m-1)*cos(phi)*cos(theta)).

    Used for the Tx/Rx arrays in the RIS scenario, where paths carry both an
    azimuth and an elevation angle.
    """
    m = np.arange(m_antennas)
    return np.exp(1j * np.pi * m * (np.cos(phi) * np.cos(theta)))


def steering_ris(n_elements: int, n_horizontal: int, phi: float, theta: float) -> np.ndarray:
    """Rectangular-grid RIS steering vector.

    Entry m (1-based) is exp(j*pi*(i'(m)*sin(phi)*cos(theta) + i''(m)*sin(theta)))
    with i'(m) = mod(m-1, n_horizontal) and i''(m) = floor((m-1)/n_horizontal).
    """
    if n_horizontal < 1 or n_elements % n_horizontal != 0:
        raise ValueError(
            f"n_horizontal={n_horizontal} must divide n_elements={n_elements}"
        )
    m = np.arange(n_elements)
    i_h = m % n_horizontal
    i_v = m // n_horizontal
    return np.exp(1j * np.pi * (i_h * np.sin(phi) * np.cos(theta) + i_v * np.sin(theta)))


@dataclass(frozen=True)
class DirectPaths:
    """Path table of a direct channel: gains plus AoA-at-Tx / AoD-at-Rx."""

    gains: np.ndarray
    aoa_t: np.ndarray
    aod_r: np.ndarray

    @property
    def count(self) -> int:
        return int(self.gains.shape[-1])


@dataclass(frozen=True)
class RisPaths:
    """Path tables of the two RIS hops (Tx<->RIS and RIS<->Rx).

    All angles are radians; ``*_phi``/``*_theta`` are azimuth/elevation.
    """

    t_gains: np.ndarray
    t_phi: np.ndarray
    t_theta: np.ndarray
    t_phi_ris: np.ndarray
    t_theta_ris: np.ndarray
    r_gains: np.ndarray
    r_phi_ris: np.ndarray
    r_theta_ris: np.ndarray
    r_phi: np.ndarray
    r_theta: np.ndarray


@dataclass(frozen=True)
class ChannelRealization:
    """One assembled channel: matrix form plus the path parameters behind it."""

    kind: str  # "direct" | "ris"
    geometry: ArrayGeometry
    paths: DirectPaths | RisPaths
    g: np.ndarray | None = None       # (m_t, m_r), direct only
    t_mat: np.ndarray | None = None   # (m_t, n), ris only
    r_mat: np.ndarray | None = None   # (n, m_r), ris only


def assemble_direct(geom: ArrayGeometry, paths: DirectPaths) -> np.ndarray:
    # G = sum_i alpha_i a_t(phi_t_i) a_r(phi_r_i)^H, vectorized over paths.
    m_t = np.arange(geom.m_t)
    m_r = np.arange(geom.m_r)
    a_t = np.exp(1j * np.pi * np.sin(paths.aoa_t)[..., None] * m_t)   # (..., L, m_t)
    a_r = np.exp(1j * np.pi * np.sin(paths.aod_r)[..., None] * m_r)   # (..., L, m_r)
    return np.einsum("...l,...lt,...lr->...tr", paths.gains, a_t, a_r.conj())


def assemble_ris(geom: ArrayGeometry, paths: RisPaths) -> tuple[np.ndarray, np.ndarray]:
    m_t = np.arange(geom.m_t)
    m_r = np.arange(geom.m_r)
    n = np.arange(geom.n_ris)
    i_h = n % geom.n_h
    i_v = n // geom.n_h

    a_t = np.exp(1j * np.pi * (np.cos(paths.t_phi) * np.cos(paths.t_theta))[..., None] * m_t)
    a_vt = np.exp(
        1j
        * np.pi
        * (
            i_h * (np.sin(paths.t_phi_ris) * np.cos(paths.t_theta_ris))[..., None]
            + i_v * np.sin(paths.t_theta_ris)[..., None]
        )
    )
    t_mat = np.einsum("...l,...lt,...ln->...tn", paths.t_gains, a_t, a_vt.conj())

    a_vr = np.exp(
        1j
        * np.pi
        * (
            i_h * (np.sin(paths.r_phi_ris) * np.cos(paths.r_theta_ris))[..., None]
            + i_v * np.sin(paths.r_theta_ris)[..., None]
        )
    )
    a_r = np.exp(1j * np.pi * (np.cos(paths.r_phi) * np.cos(paths.r_theta))[..., None] * m_r)
    r_mat = np.einsum("...l,...ln,...lr->...nr", paths.r_gains, a_vr, a_r.conj())
    return t_mat, r_mat


def generate_direct_batch(
    geom: ArrayGeometry,
    l_p: int,
    rng: Rng,
    n: int,
    angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE,
) -> tuple[np.ndarray, DirectPaths]:
    """Draw ``n`` i.i.d. direct channels; returns (G stack (n,m_t,m_r), paths).

    Draw order is fixed (aoa_t, aod_r, gains, each as an (n, l_p) array) so a
    seed pins the whole batch.
    """
    if l_p < 1:
        raise ValueError("l_p must be >= 1")
    lo, hi = angle_range
    aoa_t = rng.uniform(lo, hi, (n, l_p))
    aod_r = rng.uniform(lo, hi, (n, l_p))
    gains = rng.cnormal((n, l_p))
    paths = DirectPaths(gains=gains, aoa_t=aoa_t, aod_r=aod_r)
    return assemble_direct(geom, paths), paths


def generate_direct(
    geom: ArrayGeometry,
    l_p: int,
    rng: Rng,
    angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE,
) -> ChannelRealization:
    """One direct channel realization (angles uniform, gains CN(0,1))."""
    g, paths = generate_direct_batch(geom, l_p, rng, 1, angle_range)
    single = DirectPaths(gains=paths.gains[0], aoa_t=paths.aoa_t[0], aod_r=paths.aod_r[0])
    return ChannelRealization(kind="direct", geometry=geom, paths=single, g=g[0])


def generate_ris_batch(
    geom: ArrayGeometry,
    l_pt: int,
    l_pr: int,
    rng: Rng,
    n: int,
    angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE,
) -> tuple[np.ndarray, np.ndarray, RisPaths]:
    """Draw ``n`` RIS channel pairs; returns (T stack, R stack, paths)."""
    if l_pt < 1 or l_pr < 1:
        raise ValueError("path counts must be >= 1")
    if not geom.n_ris:
        raise ValueError("geometry has no RIS elements")
    lo, hi = angle_range
    t_phi = rng.uniform(lo, hi, (n, l_pt))
    t_theta = rng.uniform(lo, hi, (n, l_pt))
    t_phi_ris = rng.uniform(lo, hi, (n, l_pt))
    t_theta_ris = rng.uniform(lo, hi, (n, l_pt))
    t_gains = rng.cnormal((n, l_pt))
    r_phi_ris = rng.uniform(lo, hi, (n, l_pr))
    r_theta_ris = rng.uniform(lo, hi, (n, l_pr))
    r_phi = rng.uniform(lo, hi, (n, l_pr))
    r_theta = rng.uniform(lo, hi, (n, l_pr))
    r_gains = rng.cnormal((n, l_pr))
    paths = RisPaths(
        t_gains=t_gains,
        t_phi=t_phi,
        t_theta=t_theta,
        t_phi_ris=t_phi_ris,
        t_theta_ris=t_theta_ris,
        r_gains=r_gains,
        r_phi_ris=r_phi_ris,
        r_theta_ris=r_theta_ris,
        r_phi=r_phi,
        r_theta=r_theta,
    )
    t_mat, r_mat = assemble_ris(geom, paths)
    return t_mat, r_mat, paths


def generate_ris(
    geom: ArrayGeometry,
    l_pt: int,
    l_pr: int,
    rng: Rng,
    angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE,
) -> ChannelRealization:
    """One RIS channel realization (pair T, R)."""
    t_mat, r_mat, p = generate_ris_batch(geom, l_pt, l_pr, rng, 1, angle_range)
    single = RisPaths(
        t_gains=p.t_gains[0],
        t_phi=p.t_phi[0],
        t_theta=p.t_theta[0],
        t_phi_ris=p.t_phi_ris[0],
        t_theta_ris=p.t_theta_ris[0],
        r_gains=p.r_gains[0],
        r_phi_ris=p.r_phi_ris[0],
        r_theta_ris=p.r_theta_ris[0],
        r_phi=p.r_phi[0],
        r_theta=p.r_theta[0],
    )
    return ChannelRealization(
        kind="ris", geometry=geom, paths=single, t_mat=t_mat[0], r_mat=r_mat[0]
    )


def _check_unit_modulus(v: np.ndarray) -> None:
    dev = float(np.max(np.abs(np.abs(v) - 1.0)))
    if dev > _UNIT_TOL:
        raise NumericsError(f"reflection vector entries deviate from unit modulus by {dev:.3e}")


def cascaded(chan: ChannelRealization, v: np.ndarray, direction: str) -> np.ndarray:
    """Effective RIS cascade for reflection vector v.

    direction "ab": R^H diag(v) T^H (A->B, shape m_r x m_t);
    direction "ba": T diag(conj(v)) R (B->A, shape m_t x m_r).
    The conjugation is pinned so (cascaded ab)^H == cascaded ba for the same v.
    """
    if chan.kind != "ris":
        raise ValueError("cascaded() requires an RIS channel")
    v = np.asarray(v, dtype=np.complex128).ravel()
    if v.shape[0] != chan.geometry.n_ris:
        raise ValueError(f"reflection vector length {v.shape[0]} != n_ris {chan.geometry.n_ris}")
    _check_unit_modulus(v)
    if direction == "ab":
        return chan.r_mat.conj().T @ (v[:, None] * chan.t_mat.conj().T)
    if direction == "ba":
        return chan.t_mat @ (v.conj()[:, None] * chan.r_mat)
    raise ValueError(f"direction must be 'ab' or 'ba', got {direction!r}")


def effective_downlink(chan: ChannelRealization, v: np.ndarray | None = None) -> np.ndarray:
    """The A->B channel (m_r x m_t): G^H, or the RIS cascade for v."""
    if chan.kind == "direct":
        return chan.g.conj().T
    if v is None:
        raise ValueError("RIS channel needs a reflection vector")
    return cascaded(chan, v, "ab")


def effective_uplink(chan: ChannelRealization, v: np.ndarray | None = None) -> np.ndarray:
    """The B->A channel (m_t x m_r): G, or the RIS cascade for v."""
    if chan.kind == "direct":
        return chan.g
    if v is None:
        raise ValueError("RIS channel needs a reflection vector")
    return cascaded(chan, v, "ba")


def _check_unit_norm(w: np.ndarray, label: str) -> None:
    dev = abs(float(np.linalg.norm(w)) - 1.0)
    if dev > _UNIT_TOL:
        raise NumericsError(f"{label} deviates from unit norm by {dev:.3e}")


def beamforming_gain(
    chan: ChannelRealization,
    w_t: np.ndarray,
    w_r: np.ndarray,
    v: np.ndarray | None = None,
) -> float:
    """|w_r^H H w_t|^2 for the effective downlink channel H."""
    w_t = np.asarray(w_t, dtype=np.complex128).ravel()
    w_r = np.asarray(w_r, dtype=np.complex128).ravel()
    _check_unit_norm(w_t, "w_t")
    _check_unit_norm(w_r, "w_r")
    h = effective_downlink(chan, v)
    return float(np.abs(w_r.conj() @ h @ w_t) ** 2)


def array_response(w: np.ndarray, theta: float) -> float:
    """Normalized array response |w^H a(theta)|^2 with a = steering/sqrt(M)."""
    w = np.asarray(w, dtype=np.complex128).ravel()
    a = steering_ula(w.shape[0], theta) / np.sqrt(w.shape[0])
    return float(np.abs(w.conj() @ a) ** 2)


def array_response_ris(v: np.ndarray, theta: float) -> float:
    """RIS response (1/N)|v^H a(theta)|^2 against a linear N-element sweep."""
    v = np.asarray(v, dtype=np.complex128).ravel()
    n = v.shape[0]
    a = steering_ula(n, theta) / np.sqrt(n)
    return float(np.abs(v.conj() @ a) ** 2 / n)


def direction_gain(chan: ChannelRealization, w_t: np.ndarray, w_r: np.ndarray, i: int) -> float:
    """Beamforming gain |w_t^H u_i|^2 |v_i^H w_r|^2 in the i-th effective direction.

    Directions are the singular-vector pairs of G sorted by singular value;
    the result lies in [0, 1] for unit-norm beamformers (1 = perfect match).
    """
    if chan.kind != "direct":
        raise ValueError("direction_gain is defined for direct channels")
    if i < 1:
        raise ValueError("direction index is 1-based")
    dec = svd(chan.g)
    if i > dec.rank:
        raise ValueError(f"direction {i} exceeds channel rank {dec.rank}")
    w_t = np.asarray(w_t, dtype=np.complex128).ravel()
    w_r = np.asarray(w_r, dtype=np.complex128).ravel()
    u_i = dec.left_vectors[:, i - 1]
    v_i = dec.right_vectors[:, i - 1]
    return float(np.abs(w_t.conj() @ u_i) ** 2 * np.abs(v_i.conj() @ w_r) ** 2)


# ---------------------------------------------------------------------------
# Line-oriented dump format (one realization per begin/end record, angles in
# degrees, gains as re/im pairs, 17 significant digits).
# ---------------------------------------------------------------------------

_HEADER = "beamalign-channels v1"


def _f(x: float) -> str:
    return format(float(x), ".17g")


def _deg(x: float) -> str:
    return _f(math.degrees(float(x)))


def dump_channels(path, chans) -> None:
    lines = [_HEADER]
    for chan in chans:
        g = chan.geometry
        if chan.kind == "direct":
            p = chan.paths
            lines.append(f"begin direct m_t={g.m_t} m_r={g.m_r} l_p={p.count}")
            for i in range(p.count):
                lines.append(
                    "path "
                    + " ".join(
                        [
                            _deg(p.aoa_t[i]),
                            _deg(p.aod_r[i]),
                            _f(p.gains[i].real),
                            _f(p.gains[i].imag),
                        ]
                    )
                )
        else:
            p = chan.paths
            lines.append(
                f"begin ris m_t={g.m_t} m_r={g.m_r} n={g.n_ris} n_h={g.n_h} "
                f"l_pt={p.t_gains.shape[0]} l_pr={p.r_gains.shape[0]}"
            )
            for i in range(p.t_gains.shape[0]):
                lines.append(
                    "tpath "
                    + " ".join(
                        [
                            _deg(p.t_phi[i]),
                            _deg(p.t_theta[i]),
                            _deg(p.t_phi_ris[i]),
                            _deg(p.t_theta_ris[i]),
                            _f(p.t_gains[i].real),
                            _f(p.t_gains[i].imag),
                        ]
                    )
                )
            for i in range(p.r_gains.shape[0]):
                lines.append(
                    "rpath "
                    + " ".join(
                        [
                            _deg(p.r_phi_ris[i]),
                            _deg(p.r_theta_ris[i]),
                            _deg(p.r_phi[i]),
                            _deg(p.r_theta[i]),
                            _f(p.r_gains[i].real),
                            _f(p.r_gains[i].imag),
                        ]
                    )
                )
        lines.append("end")
    with open(path, "w", encoding="ascii") as fh:
        fh.write("\n".join(lines) + "\n")


def _parse_kv(tokens) -> dict:
    return {k: int(val) for k, val in (tok.split("=") for tok in tokens)}


def load_channels(path) -> list[ChannelRealization]:
    with open(path, "r", encoding="ascii") as fh:
        lines = [ln.strip() for ln in fh if ln.strip()]
    if not lines or lines[0] != _HEADER:
        raise ValueError(f"not a channel dump (missing '{_HEADER}' header)")
    chans: list[ChannelRealization] = []
    i = 1
    while i < len(lines):
        parts = lines[i].split()
        if parts[0] != "begin":
            raise ValueError(f"expected 'begin' at line {i + 1}")
        kind = parts[1]
        kv = _parse_kv(parts[2:])
        i += 1
        rows: dict[str, list[list[float]]] = {}
        while lines[i] != "end":
            tok = lines[i].split()
            rows.setdefault(tok[0], []).append([float(x) for x in tok[1:]])
            i += 1
        i += 1
        if kind == "direct":
            geom = ArrayGeometry(m_t=kv["m_t"], m_r=kv["m_r"])
            tab = np.asarray(rows["path"], dtype=np.float64)
            paths = DirectPaths(
                gains=tab[:, 2] + 1j * tab[:, 3],
                aoa_t=np.radians(tab[:, 0]),
                aod_r=np.radians(tab[:, 1]),
            )
            chans.append(
                ChannelRealization(
                    kind="direct", geometry=geom, paths=paths, g=assemble_direct(geom, paths)
                )
            )
        elif kind == "ris":
            geom = ArrayGeometry(m_t=kv["m_t"], m_r=kv["m_r"], n_ris=kv["n"], n_h=kv["n_h"])
            t_tab = np.asarray(rows["tpath"], dtype=np.float64)
            r_tab = np.asarray(rows["rpath"], dtype=np.float64)
            paths = RisPaths(
                t_gains=t_tab[:, 4] + 1j * t_tab[:, 5],
                t_phi=np.radians(t_tab[:, 0]),
                t_theta=np.radians(t_tab[:, 1]),
                t_phi_ris=np.radians(t_tab[:, 2]),
                t_theta_ris=np.radians(t_tab[:, 3]),
                r_gains=r_tab[:, 4] + 1j * r_tab[:, 5],
                r_phi_ris=np.radians(r_tab[:, 0]),
                r_theta_ris=np.radians(r_tab[:, 1]),
                r_phi=np.radians(r_tab[:, 2]),
                r_theta=np.radians(r_tab[:, 3]),
            )
            t_mat, r_mat = assemble_ris(geom, paths)
            chans.append(
                ChannelRealization(
                    kind="ris", geometry=geom, paths=paths, t_mat=t_mat, r_mat=r_mat
                )
            )
        else:
            raise ValueError(f"unknown channel kind {kind!r}")
    return chans
