"""
Problem data for separable convex programs with a linear coupling constraint.

Each agent ``i`` owns a diagonal quadratic cost ``f_i``, a box ``X_i`` and a
coupling pair ``(A_i, b_i)``; the agents jointly solve

    min  sum_i f_i(x_i)   s.t.  sum_i (A_i x_i - b_i) = 0,  x_i in X_i.

All per-agent arithmetic goes through a padded, stacked representation
(:class:`PackedProblem`) so that the single-agent helpers and the network
iteration produce bit-identical numbers.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Sequence

import numpy as np

from .errors import ConfigError


def _vec(values, name: str) -> np.ndarray:
    arr = np.array(values, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1)
    if arr.ndim != 1:
        raise ConfigError(f"{name}: expected a vector, got shape {arr.shape}")
    if arr.size == 0:
        raise ConfigError(f"{name}: needs at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ConfigError(f"{name}: entries must be finite")
    return arr


@dataclass(frozen=True, eq=False)
class DiagonalQuadratic:
    """``sum_k a_k x_k**2 + b_k x_k + c`` with ``a_k >= 0``."""

    a: np.ndarray
    b: np.ndarray
    c: float = 0.0

    def __post_init__(self):
        a = _vec(self.a, "objective.a")
        b = _vec(self.b, "objective.b")
        if a.shape != b.shape:
            raise ConfigError("objective: a and b must have the same length")
        if np.any(a < 0):
            raise ConfigError("objective.a: coefficients must be >= 0 (convexity)")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)
        object.__setattr__(self, "c", float(self.c))

    def __call__(self, x) -> float:
        x = np.asarray(x, dtype=float)
        total = 0.0
        for k in range(x.shape[0]):
            total += self.a[k] * x[k] * x[k] + self.b[k] * x[k]
        return float(total + self.c)


@dataclass(frozen=True, eq=False)
class Box:
    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = _vec(self.lo, "box.lo")
        hi = _vec(self.hi, "box.hi")
        if lo.shape != hi.shape:
            raise ConfigError("box: lo and hi must have the same length")
        if np.any(hi < lo):
            raise ConfigError("box: every hi must be >= lo")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def mid(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def rad(self) -> np.ndarray:
        return 0.5 * (self.hi - self.lo)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lo - tol) and np.all(x <= self.hi + tol))

    def sample(self, rng: np.random.Generator, size: int | None = None) -> np.ndarray:
        shape = self.lo.shape if size is None else (size,) + self.lo.shape
        return self.lo + (self.hi - self.lo) * rng.random(shape)


@dataclass(frozen=True, eq=False)
class AgentProblem:
    """One agent's cost, box and coupling pair ``(A_i, b_i)``."""

    objective: DiagonalQuadratic
    box: Box
    coupling_matrix: np.ndarray
    coupling_offset: np.ndarray

    def __post_init__(self):
        A = np.array(self.coupling_matrix, dtype=float)
        if A.ndim == 0:
            A = A.reshape(1, 1)
        elif A.ndim == 1:
            # a single coupling row
            A = A.reshape(1, -1)
        offset = _vec(self.coupling_offset, "coupling_offset")
        n = self.objective.a.shape[0]
        if self.box.lo.shape[0] != n:
            raise ConfigError(f"box has {self.box.lo.shape[0]} coordinates, objective has {n}")
        if A.shape != (offset.shape[0], n):
            raise ConfigError(
                f"coupling_matrix: expected shape ({offset.shape[0]}, {n}), got {A.shape}"
            )
        if not np.all(np.isfinite(A)):
            raise ConfigError("coupling_matrix: entries must be finite")
        object.__setattr__(self, "coupling_matrix", A)
        object.__setattr__(self, "coupling_offset", offset)

    @property
    def n(self) -> int:
        return self.objective.a.shape[0]

    @property
    def p(self) -> int:
        return self.coupling_offset.shape[0]

    @classmethod
    def scalar(cls, a: float, b: float, lo: float, hi: float, offset: float,
               coeff: float = 1.0, c: float = 0.0) -> "AgentProblem":
        """Scalar agent with ``p = 1``, as in economic dispatch."""
        return cls(DiagonalQuadratic([a], [b], c), Box([lo], [hi]), [[coeff]], [offset])


@dataclass(frozen=True, eq=False)
class ProblemInstance:
    agents: tuple[AgentProblem, ...]
    coupling_dim: int = field(default=-1)

    def __post_init__(self):
        agents = tuple(self.agents)
        if not agents:
            raise ConfigError("problem: need at least one agent")
        p = agents[0].p if self.coupling_dim == -1 else int(self.coupling_dim)
        if p < 1:
            raise ConfigError("coupling_dim must be a positive integer")
        for i, ag in enumerate(agents):
            if ag.p != p:
                raise ConfigError(f"agent {i}: coupling dimension {ag.p} != {p}")
        object.__setattr__(self, "agents", agents)
        object.__setattr__(self, "coupling_dim", p)

    @property
    def m(self) -> int:
        return len(self.agents)

    @property
    def p(self) -> int:
        return self.coupling_dim

    @cached_property
    def packed(self) -> "PackedProblem":
        return PackedProblem.from_instance(self)


@dataclass(frozen=True, eq=False)
class PackedProblem:
    """Agent data stacked along axis 0 and zero-padded to a common width.

    Padding coordinates have ``a = 1, b = 0, lo = hi = 0`` and zero coupling
    columns, so they stay at 0 and contribute exactly nothing.
    """

    dims: np.ndarray      # (m,)
    a: np.ndarray         # (m, w)
    b: np.ndarray         # (m, w)
    c: np.ndarray         # (m,)
    lo: np.ndarray        # (m, w)
    hi: np.ndarray        # (m, w)
    A: np.ndarray         # (m, p, w)
    offset: np.ndarray    # (m, p)

    @classmethod
    def from_instance(cls, inst: ProblemInstance) -> "PackedProblem":
        m, p = inst.m, inst.p
        dims = np.array([ag.n for ag in inst.agents], dtype=int)
        w = int(dims.max())
        a = np.ones((m, w))
        b = np.zeros((m, w))
        lo = np.zeros((m, w))
        hi = np.zeros((m, w))
        A = np.zeros((m, p, w))
        for i, ag in enumerate(inst.agents):
            n = ag.n
            a[i, :n] = ag.objective.a
            b[i, :n] = ag.objective.b
            lo[i, :n] = ag.box.lo
            hi[i, :n] = ag.box.hi
            A[i, :, :n] = ag.coupling_matrix
        c = np.array([ag.objective.c for ag in inst.agents])
        offset = np.stack([ag.coupling_offset for ag in inst.agents])
        return cls(dims, a, b, c, lo, hi, A, offset)

    @cached_property
    def denom(self) -> np.ndarray:
        return stationary_denominator(self.a)

    @cached_property
    def all_quadratic(self) -> bool:
        return bool((self.a > 0).all())

    @property
    def m(self) -> int:
        return self.a.shape[0]

    @property
    def p(self) -> int:
        return self.offset.shape[1]

    @property
    def width(self) -> int:
        return self.a.shape[1]

    def pad(self, xs: Sequence) -> np.ndarray:
        """Stack per-agent vectors into an ``(m, w)`` array."""
        if len(xs) != self.m:
            raise ConfigError(f"expected {self.m} agent vectors, got {len(xs)}")
        out = np.zeros((self.m, self.width))
        for i, xi in enumerate(xs):
            xi = np.atleast_1d(np.asarray(xi, dtype=float))
            if xi.shape != (self.dims[i],):
                raise ConfigError(
                    f"agent {i}: expected vector of length {self.dims[i]}, got shape {xi.shape}"
                )
            out[i, : self.dims[i]] = xi
        return out

    def unpad(self, x: np.ndarray) -> list[np.ndarray]:
        return [x[i, : self.dims[i]].copy() for i in range(self.m)]


# --- stacked kernels -------------------------------------------------------
# Every function below operates row-wise (one row per agent) using only
# elementwise operations and explicit loops over the short axes, so a slice of
# rows gives exactly the same bits as the full stack.

def effective_linear(b, A, lam) -> np.ndarray:
    """``b + A^T lam`` per row; ``A`` is (k, p, w), ``lam`` is (k, p)."""
    lin = b + A[:, 0, :] * lam[:, 0:1]
    for r in range(1, A.shape[1]):
        lin = lin + A[:, r, :] * lam[:, r:r + 1]
    return lin


def stationary_denominator(a) -> np.ndarray:
    """``-2a`` on quadratic coordinates, a dummy -1 on linear ones."""
    return np.where(a > 0, -2.0 * a, -1.0)


def argmin_rows(a, b, lo, hi, A, lam, denom=None, all_quadratic=None) -> np.ndarray:
    """Box-constrained minimiser per row; ``denom`` and ``all_quadratic`` are
    optional precomputed values of :func:`stationary_denominator` and ``(a > 0).all()``."""
    lin = effective_linear(b, A, lam)
    if denom is None:
        denom = stationary_denominator(a)
    # lin / (-2a) has the same bits as -(lin / 2a)
    x = np.minimum(np.maximum(lin / denom, lo), hi)
    if all_quadratic is None:
        all_quadratic = bool((a > 0).all())
    if all_quadratic:
        return x
    # a == 0: linear cost, pick the minimising end; lo on an exact tie
    return np.where(a > 0, x, np.where(lin < 0, hi, lo))


def residual_rows(A, offset, x) -> np.ndarray:
    """``A_i x_i - b_i`` per row, shape (k, p)."""
    g = A[:, :, 0] * x[:, 0:1]
    for k in range(1, A.shape[2]):
        g = g + A[:, :, k] * x[:, k:k + 1]
    return g - offset


def objective_rows(a, b, c, x) -> np.ndarray:
    val = np.zeros(x.shape[0])
    for k in range(x.shape[1]):
        val = val + (a[:, k] * x[:, k] * x[:, k] + b[:, k] * x[:, k])
    return val + c


def sum_rows(values: np.ndarray) -> np.ndarray:
    """Sum over agents in ascending index order.

    ``add.accumulate`` is a strictly sequential scan, unlike ``sum`` which
    switches to pairwise summation for long axes.
    """
    values = np.asarray(values, dtype=float)
    if values.shape[0] == 0:
        return np.zeros(values.shape[1:])
    return np.add.accumulate(values, axis=0)[-1]


# --- public operations -----------------------------------------------------

def _agent_arrays(agent: AgentProblem):
    obj = agent.objective
    return (obj.a[None, :], obj.b[None, :], agent.box.lo[None, :],
            agent.box.hi[None, :], agent.coupling_matrix[None, :, :])


def local_argmin(agent: AgentProblem, lam) -> np.ndarray:
    """Minimise ``f_i(x) + lam^T (A_i x - b_i)`` over the agent's box.

    The objective is separable per coordinate, so the minimiser is the
    stationary point clamped to the box (or the cheaper endpoint when the
    coordinate is linear).
    """
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    if lam.shape != (agent.p,):
        raise ConfigError(f"lambda: expected length {agent.p}, got shape {lam.shape}")
    a, b, lo, hi, A = _agent_arrays(agent)
    return argmin_rows(a, b, lo, hi, A, lam[None, :])[0]


def subgradient(agent: AgentProblem, x) -> np.ndarray:
    """``A_i x - b_i``, a subgradient of the agent's dual function."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.shape != (agent.n,):
        raise ConfigError(f"x: expected length {agent.n}, got shape {x.shape}")
    return residual_rows(agent.coupling_matrix[None], agent.coupling_offset[None], x[None])[0]


def subgradient_bound(agent: AgentProblem) -> float:
    """Upper bound ``G_i`` on ``||A_i x - b_i||`` over the box (interval arithmetic)."""
    A = agent.coupling_matrix
    rows = np.abs(A @ agent.box.mid - agent.coupling_offset) + np.abs(A) @ agent.box.rad
    return float(np.linalg.norm(rows))


def evaluate_objective(inst: ProblemInstance, xs: Sequence) -> float:
    """``F(x) = sum_i f_i(x_i)``, accumulated in agent order."""
    P = inst.packed
    vals = objective_rows(P.a, P.b, P.c, P.pad(xs))
    return float(sum_rows(vals[:, None])[0])


def coupling_residual(inst: ProblemInstance, xs: Sequence) -> np.ndarray:
    """``sum_i (A_i x_i - b_i)``."""
    P = inst.packed
    return sum_rows(residual_rows(P.A, P.offset, P.pad(xs)))


def lagrangian(inst: ProblemInstance, xs: Sequence, lam) -> float:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return evaluate_objective(inst, xs) + float(lam @ coupling_residual(inst, xs))


def dual_function(inst: ProblemInstance, lam) -> float:
    """``phi(lam) = sum_i min_{x_i in X_i} L_i(x_i, lam)``."""
    xs = [local_argmin(ag, lam) for ag in inst.agents]
    return lagrangian(inst, xs, lam)
