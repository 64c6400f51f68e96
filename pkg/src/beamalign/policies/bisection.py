"""Hierarchical-codebook bisection search over ping-pong pilots.

Each side owns a binary codebook tree of sector beams over its angle
range.  A side probes the two children of its current sector with its
receive beam (one child per round) and descends into the stronger one;
its transmit beam and final design come from sorting the received powers
of all pilots so far (strongest probed sector), with the transmit beam
held fixed across each two-round probe pair so power comparisons stay
fair.  Once a side reaches the finest level it stays there (further
steps are idempotent).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..channel import DEFAULT_ANGLE_RANGE
from ..nn.autodiff import Tensor, constant
from ..nn.cplx import to_pairs

__all__ = ["HierarchicalCodebook", "BisectionPolicy", "select_strongest", "bisection_policy_step"]


class HierarchicalCodebook:
    """Binary tree of sector beams tiling the angle range in sin space.

    Level d holds 2^d sectors; nodes are heap-indexed (root 0, children of
    i at 2i+1 / 2i+2).  Beams are least-squares fits of the sector
    indicator over a dense grid of directions, normalized to unit power.
    """

    def __init__(
        self,
        m_antennas: int,
        angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE,
        depth: int | None = None,
        grid: int = 512,
    ):
        self.m = int(m_antennas)
        self.depth = int(depth) if depth is not None else max(1, int(round(np.log2(self.m))))
        lo, hi = np.sin(angle_range[0]), np.sin(angle_range[1])
        self.sin_range = (float(lo), float(hi))
        self.n_nodes = 2 ** (self.depth + 1) - 1

        ids = np.arange(self.n_nodes)
        self.levels = np.frompyfunc(lambda i: int(i + 1).bit_length() - 1, 1, 1)(ids).astype(int)
        ks = ids - (2**self.levels - 1)
        widths = (hi - lo) / (2.0**self.levels)
        self.bounds = np.stack([lo + ks * widths, lo + (ks + 1) * widths], axis=1)

        u = np.linspace(-1.0, 1.0, grid)
        s_mat = np.exp(1j * np.pi * np.outer(u, np.arange(self.m)))

        def fit(node: int, suppress: np.ndarray | None) -> np.ndarray:
            target = ((u >= self.bounds[node, 0]) & (u <= self.bounds[node, 1])).astype(np.float64)
            a, b = s_mat, target.astype(np.complex128)
            if suppress is not None and suppress.size:
                # Heavily weighted zero-targets at directions where this
                # beam must stay below its sibling.
                rows = np.exp(1j * np.pi * np.outer(suppress, np.arange(self.m))) * 5.0
                a = np.vstack([a, rows])
                b = np.concatenate([b, np.zeros(suppress.size, dtype=np.complex128)])
            x, *_ = np.linalg.lstsq(a, b, rcond=None)
            w = x.conj()
            return w / np.linalg.norm(w)

        beams = np.stack([fit(i, None) for i in range(self.n_nodes)])
        # Refine until, inside every sector, the owner's response beats its
        # sibling's with a positive floor; this certifies that a noiseless
        # single-path power comparison always keeps the true angle inside
        # the chosen child regardless of where the angle falls.
        u_fine = np.linspace(-1.0, 1.0, 8192)
        s_fine = np.exp(1j * np.pi * np.outer(u_fine, np.arange(self.m)))
        suppress: dict[int, list[float]] = {i: [] for i in range(self.n_nodes)}
        for _ in range(40):
            violations = 0
            for parent in range((self.n_nodes - 1) // 2):
                pair = (2 * parent + 1, 2 * parent + 2)
                for me, sib in (pair, pair[::-1]):
                    inside = (u_fine >= self.bounds[me, 0]) & (u_fine <= self.bounds[me, 1])
                    r_me = np.abs(s_fine[inside] @ beams[me].conj()) ** 2
                    r_sib = np.abs(s_fine[inside] @ beams[sib].conj()) ** 2
                    bad = r_me - r_sib < 1e-4
                    if bad.any():
                        violations += 1
                        suppress[sib].extend(u_fine[inside][bad])
                        beams[sib] = fit(sib, np.asarray(suppress[sib]))
            if violations == 0:
                break
        else:
            raise RuntimeError(f"codebook for m={self.m} failed sibling-dominance refinement")
        self.beams = beams

    def children(self, ids: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return 2 * ids + 1, 2 * ids + 2

    def is_leaf(self, ids: np.ndarray) -> np.ndarray:
        return 2 * ids + 1 >= self.n_nodes

    def contains(self, ids: np.ndarray, sin_angle: np.ndarray) -> np.ndarray:
        b = self.bounds[ids]
        return (sin_angle >= b[..., 0]) & (sin_angle <= b[..., 1])


def select_strongest(powers: np.ndarray, expanded: np.ndarray) -> np.ndarray:
    """Strongest not-yet-split node per row; ties go to the lower index."""
    cand = np.where(expanded, -np.inf, powers)
    return np.argmax(cand, axis=1)


@dataclass
class _Side:
    book: HierarchicalCodebook
    batch: int
    powers: np.ndarray = field(init=False)
    expanded: np.ndarray = field(init=False)
    frozen: np.ndarray = field(init=False)
    pending: np.ndarray = field(init=False)
    rx_node: np.ndarray = field(init=False)
    tx_node: np.ndarray = field(init=False)
    tx_next: np.ndarray = field(init=False)
    expansion_log: list = field(default_factory=list)

    def __post_init__(self):
        n = self.book.n_nodes
        self.powers = np.full((self.batch, n), -np.inf)
        self.expanded = np.zeros((self.batch, n), dtype=bool)
        self.expanded[:, 0] = True
        self.frozen = np.zeros(self.batch, dtype=bool)
        root = np.zeros(self.batch, dtype=int)
        c1, c2 = self.book.children(root)
        self.pending = np.stack([c1, c2], axis=1)
        self.rx_node = self.pending[:, 0].copy()
        self.tx_node = root.copy()
        self.tx_next = root.copy()

    def record(self, power: np.ndarray) -> None:
        self.powers[np.arange(self.batch), self.rx_node] = power

    def decide(self) -> None:
        """Split the stronger child of the just-probed pair (skip frozen episodes).

        The two probes of a pair were taken against the same far-side
        transmit beam, so their powers are directly comparable; records
        from earlier pairs carry a different far-side factor and only
        enter the transmit/final beam selection, never the split choice.
        """
        live = ~self.frozen
        if not live.any():
            return
        idx = np.arange(self.batch)
        p0 = self.powers[idx, self.pending[:, 0]]
        p1 = self.powers[idx, self.pending[:, 1]]
        # Strict comparison: ties go to the lower node index (pending[:, 0]).
        best = np.where(p1 > p0, self.pending[:, 1], self.pending[:, 0])
        self.expanded[idx, best] |= live
        leaf = self.book.is_leaf(best)
        freeze_now = live & leaf
        follow = live & ~leaf
        c1, c2 = self.book.children(best)
        self.pending[follow, 0] = c1[follow]
        self.pending[follow, 1] = c2[follow]
        self.pending[freeze_now, 0] = best[freeze_now]
        self.pending[freeze_now, 1] = best[freeze_now]
        self.frozen |= freeze_now
        probed = self.powers > -np.inf
        self.tx_next = np.where(live, select_strongest(self.powers, ~probed), self.tx_next)
        log = np.where(live, best, -1)
        self.expansion_log.append(log)

    def strongest_probed(self) -> np.ndarray:
        probed = self.powers > -np.inf
        return select_strongest(self.powers, ~probed)

    def emit(self, nodes: np.ndarray) -> Tensor:
        return constant(to_pairs(self.book.beams[nodes]))


class BisectionPolicy:
    """Two-sided codebook bisection; no feedback, powers only."""

    needs_csi = False
    trainable = False

    def __init__(
        self,
        m_t: int,
        m_r: int,
        angle_range: tuple[float, float] = DEFAULT_ANGLE_RANGE,
        grid: int = 512,
    ):
        self.book_a = HierarchicalCodebook(m_t, angle_range, grid=grid)
        self.book_b = HierarchicalCodebook(m_r, angle_range, grid=grid)

    def begin_episode(self, ctx) -> "_BisectionEpisode":
        return _BisectionEpisode(self, ctx.batch)


class _BisectionEpisode:
    def __init__(self, policy: BisectionPolicy, batch: int):
        self.a = _Side(policy.book_a, batch)
        self.b = _Side(policy.book_b, batch)
        self._round_a = 0
        self._round_b = 0

    @staticmethod
    def _power(y: Tensor) -> np.ndarray:
        val = y.value
        return val[:, 0] ** 2 + val[:, 1] ** 2

    def initial_a(self):
        return self.a.emit(self.a.tx_node), self.a.emit(self.a.rx_node)

    def initial_b(self):
        return self.b.emit(self.b.rx_node)

    def observe_b(self, y: Tensor):
        l = self._round_b
        self._round_b += 1
        side = self.b
        side.record(self._power(y))
        if l % 2 == 1:
            side.decide()
        else:
            # New probe pair starts this round: the tx decided last round
            # becomes active so both probes of the pair face the same beam.
            side.tx_node = side.tx_next.copy()
        side.rx_node = side.pending[:, (l + 1) % 2].copy()
        return side.emit(side.tx_node), side.emit(side.rx_node)

    def observe_a(self, y: Tensor):
        l = self._round_a
        self._round_a += 1
        side = self.a
        side.record(self._power(y))
        if l % 2 == 1:
            side.decide()
            # A's emission here is used from the next (even) round on, so
            # the new tx activates immediately without splitting a pair.
            side.tx_node = side.tx_next.copy()
        side.rx_node = side.pending[:, (l + 1) % 2].copy()
        return side.emit(side.tx_node), side.emit(side.rx_node)

    def finalize(self):
        return {
            "w_t": self.a.emit(self.a.strongest_probed()),
            "w_r": self.b.emit(self.b.strongest_probed()),
        }


def bisection_policy_step(episode: _BisectionEpisode, side: str, y: Tensor):
    """One sort-and-refine step for the given side ('a' or 'b')."""
    if side == "a":
        return episode.observe_a(y)
    if side == "b":
        return episode.observe_b(y)
    raise ValueError(f"side must be 'a' or 'b', got {side!r}")
