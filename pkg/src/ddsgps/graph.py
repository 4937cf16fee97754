"""
Time-varying directed communication graphs.

Agents are indexed ``0 .. m-1``. An edge ``(j, i)`` means ``j`` sends to
``i``. Self-loops are never stored; every agent is implicitly its own in- and
out-neighbour.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property, lru_cache
from typing import Iterable

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ConfigError

SCHEDULE_KINDS = ("static", "ring-rotation", "random-window")


@dataclass(frozen=True)
class DigraphSnapshot:
    m: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError("graph: need at least one agent")
        edges = frozenset((int(j), int(i)) for j, i in self.edges)
        for j, i in edges:
            if not (0 <= j < self.m and 0 <= i < self.m):
                raise ConfigError(f"edge ({j}, {i}) out of range for m={self.m}")
            if i == j:
                raise ConfigError(f"explicit self-loop ({j}, {j}); self-loops are implicit")
        object.__setattr__(self, "edges", edges)

    @classmethod
    def _trusted(cls, m: int, edges: frozenset, adjacency: np.ndarray,
                 out_degrees: np.ndarray) -> "DigraphSnapshot":
        """Skip validation for internally generated graphs; the arrays must be
        read-only and the adjacency must include the self-loops."""
        snap = object.__new__(cls)
        object.__setattr__(snap, "m", m)
        object.__setattr__(snap, "edges", edges)
        snap.__dict__["adjacency"] = adjacency
        snap.__dict__["out_degrees"] = out_degrees
        return snap

    @cached_property
    def adjacency(self) -> np.ndarray:
        """Read-only boolean ``M[sender, receiver]`` with the implicit self-loops set."""
        M = np.eye(self.m, dtype=bool)
        if self.edges:
            src, dst = np.array(sorted(self.edges)).T
            M[src, dst] = True
        M.setflags(write=False)
        return M

    @cached_property
    def out_degrees(self) -> np.ndarray:
        """``d_j`` (self included) as floats, read-only."""
        deg = self.adjacency.sum(axis=1).astype(float)
        deg.setflags(write=False)
        return deg

    def out_neighbors(self, j: int) -> list[int]:
        """Receivers of ``j`` including ``j`` itself, ascending."""
        return sorted({i for (s, i) in self.edges if s == j} | {j})

    def in_neighbors(self, i: int) -> list[int]:
        return sorted({j for (j, r) in self.edges if r == i} | {i})


@lru_cache(maxsize=64)
def ring_edges(m: int) -> frozenset:
    """Directed cycle ``0 -> 1 -> ... -> m-1 -> 0``."""
    if m < 2:
        return frozenset()
    return frozenset((j, (j + 1) % m) for j in range(m))


def out_degree(snap: DigraphSnapshot, j: int) -> int:
    if not 0 <= j < snap.m:
        raise IndexError(f"agent {j} out of range for m={snap.m}")
    return 1 + sum(1 for (s, _) in snap.edges if s == j)


def adjacency(snap: DigraphSnapshot) -> np.ndarray:
    return snap.adjacency


def build_weights(snap: DigraphSnapshot) -> np.ndarray:
    """Column-stochastic mixing matrix: ``D[i, j] = 1/d_j`` for ``i`` in N_out(j)."""
    return np.where(snap.adjacency, 1.0 / snap.out_degrees[:, None], 0.0).T


def is_strongly_connected(m: int, edges: Iterable) -> bool:
    edges = list(edges)
    if m == 1:
        return True
    if not edges:
        return False
    src, dst = zip(*edges)
    adj = csr_matrix((np.ones(len(edges)), (src, dst)), shape=(m, m))
    n_comp, _ = connected_components(adj, directed=True, connection="strong")
    return n_comp == 1


@dataclass(frozen=True)
class GraphSchedule:
    """Deterministic rule producing the snapshot of every round.

    ``static`` repeats ``edges`` (a directed ring when none are given);
    ``ring-rotation`` activates one ring edge per round; ``random-window``
    draws, for every block of ``B`` rounds, a random spanning cycle split
    across the block plus extra random edges with probability ``edge_prob``.
    """

    kind: str
    m: int
    B: int = 1
    seed: int = 0
    edges: frozenset | None = None
    edge_prob: float = 0.1

    def __post_init__(self):
        if self.kind not in SCHEDULE_KINDS:
            raise ConfigError(f"schedule.kind: unknown kind {self.kind!r}")
        if self.m < 1:
            raise ConfigError("schedule.m: must be >= 1")
        if self.B < 1:
            raise ConfigError("schedule.B: must be a positive integer")
        if self.seed < 0:
            raise ConfigError("schedule.seed: must be non-negative")
        if not 0.0 <= self.edge_prob <= 1.0:
            raise ConfigError("schedule.edge_prob: must lie in [0, 1]")
        if self.edges is not None:
            if self.kind != "static":
                raise ConfigError("schedule.edges: only allowed for static schedules")
            # validates ranges and self-loops
            object.__setattr__(self, "edges", DigraphSnapshot(self.m, self.edges).edges)

    @classmethod
    def static(cls, m: int, edges=None) -> "GraphSchedule":
        return cls("static", m, 1, 0, None if edges is None else frozenset(map(tuple, edges)))

    @classmethod
    def ring_rotation(cls, m: int) -> "GraphSchedule":
        return cls("ring-rotation", m, B=m)

    @classmethod
    def random_window(cls, m: int, B: int, seed: int, edge_prob: float = 0.1) -> "GraphSchedule":
        return cls("random-window", m, B=B, seed=seed, edge_prob=edge_prob)

    def snapshot(self, t: int) -> DigraphSnapshot:
        return schedule_snapshot(self, t)


def schedule_snapshot(sched: GraphSchedule, t: int) -> DigraphSnapshot:
    if t < 0:
        raise ValueError("round index must be >= 0")
    m = sched.m
    if sched.kind == "static":
        edges = ring_edges(m) if sched.edges is None else sched.edges
        return _static_snapshot(m, edges)
    if sched.kind == "ring-rotation":
        if m < 2:
            return DigraphSnapshot(m)
        return _rotation_snapshot(m, t % m)
    window = _random_window(m, sched.B, sched.seed, sched.edge_prob, t // sched.B)
    return window[t % sched.B]


@lru_cache(maxsize=64)
def _static_snapshot(m: int, edges: frozenset) -> DigraphSnapshot:
    return DigraphSnapshot(m, edges)


@lru_cache(maxsize=1024)
def _rotation_snapshot(m: int, j: int) -> DigraphSnapshot:
    return DigraphSnapshot(m, frozenset({(j, (j + 1) % m)}))


def _block_size(m: int, B: int) -> int:
    # windows drawn per generator; depends only on (m, B) so results do too
    return max(1, min(64, (1 << 20) // (B * m * m)))


@lru_cache(maxsize=4)
def _random_block(m: int, B: int, seed: int, edge_prob: float, block: int) -> np.ndarray:
    """Adjacency of ``K`` consecutive windows, shape ``(K, B, m, m)``, no self-loops.

    Each window gets a random spanning cycle with its edges scattered over
    the window's rounds, plus independent extra edges with ``edge_prob``.
    """
    K = _block_size(m, B)
    rng = np.random.default_rng([seed, block])
    adj = np.zeros((K, B, m, m), dtype=bool)
    if m >= 2:
        perm = rng.permuted(np.tile(np.arange(m), (K, 1)), axis=1)
        slots = rng.integers(0, B, size=(K, m))
        adj[np.arange(K)[:, None], slots, perm, np.roll(perm, -1, axis=1)] = True
        adj |= rng.random((K, B, m, m)) < edge_prob
        adj[..., np.arange(m), np.arange(m)] = False
    adj.setflags(write=False)
    return adj


@lru_cache(maxsize=16)
def _random_window(m: int, B: int, seed: int, edge_prob: float, window: int) -> tuple:
    block, k = divmod(window, _block_size(m, B))
    adj = _random_block(m, B, seed, edge_prob, block)[k]
    full = adj | np.eye(m, dtype=bool)
    deg = full.sum(axis=2).astype(float)
    full.setflags(write=False)
    deg.setflags(write=False)
    r, src, dst = np.nonzero(adj)
    cuts = np.searchsorted(r, np.arange(B + 1)).tolist()
    src, dst = src.tolist(), dst.tolist()
    return tuple(
        DigraphSnapshot._trusted(m, frozenset(zip(src[cuts[q]:cuts[q + 1]], dst[cuts[q]:cuts[q + 1]])),
                                 full[q], deg[q])
        for q in range(B)
    )


def check_B_strong_connectivity(sched: GraphSchedule, B: int, horizon: int) -> bool:
    """True iff the union graph over each aligned window ``[kB, kB+B-1]`` inside
    ``[0, horizon)`` is strongly connected."""
    if B < 1:
        raise ValueError("B must be positive")
    if horizon < B:
        raise ValueError("horizon must be >= B")
    for start in range(0, horizon - B + 1, B):
        union = set()
        for t in range(start, start + B):
            union |= sched.snapshot(t).edges
        if not is_strongly_connected(sched.m, union):
            return False
    return True


def worst_case_mixing_constants(m: int, B: int) -> tuple[float, float]:
    """Worst-case ``(xi, 1 - eta)`` for a B-strongly-connected sequence.

    ``xi = m**(-m B)`` and ``eta = (1 - xi)**(1/(m B))``. The gap ``1 - eta`` is
    returned instead of ``eta``: for all but tiny networks ``eta`` rounds to
    exactly 1.0, so ``1 - eta`` would evaluate to 0.
    """
    if m < 1 or B < 1:
        raise ValueError("m and B must be positive")
    mb = m * B
    log_xi = -mb * math.log(m)
    xi = math.exp(log_xi)
    if m == 1:
        # xi = 1 makes eta = 0 and log1p(-1) raise; return the limit directly
        return 1.0, 1.0
    one_minus_eta = -math.expm1(math.log1p(-xi) / mb)
    return xi, one_minus_eta
