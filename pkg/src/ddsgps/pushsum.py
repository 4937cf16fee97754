"""
Synchronous-round simulation of the distributed dual subgradient push-sum
iteration.

Every round ``t -> t+1`` each agent

1. mixes the dual masses ``mu`` and push-sum weights ``nu`` of its
   in-neighbours with the column-stochastic matrix ``D[t]``,
2. de-biases the mixed mass, ``lam_i = u_i / nu_i``,
3. minimises its local Lagrangian at ``lam_i`` over its box, and
4. pushes the dual subgradient ``A_i x_i - b_i`` into its mass with the
   stepsize ``beta[t+1]``.

The state of all agents is kept stacked (one row per agent); mixing sums run
over senders in ascending index order so results never depend on how the
per-agent work is scheduled. The per-round arithmetic runs in the compiled
kernels of :mod:`ddsgps._kernels`, which reproduce the numpy kernels of
:mod:`ddsgps.problem` bit for bit.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from functools import cached_property, lru_cache
from typing import Callable, Iterator, Sequence

import numpy as np

from . import _kernels
from .errors import ConfigError, InvariantViolation, PushSumUnderflow
from .graph import DigraphSnapshot, GraphSchedule
from .problem import ProblemInstance, argmin_rows, sum_rows

NU_FLOOR = 1e-300
STEPSIZE_KINDS = ("inverse-sqrt", "constant", "table")


@dataclass(frozen=True)
class StepsizeSchedule:
    """Stepsize sequence ``beta[t]`` for ``t >= 1``.

    ``inverse-sqrt`` is ``c / sqrt(t)``, ``constant`` is ``c`` and ``table``
    reads ``beta[t] = table[t-1]``.
    """

    kind: str = "inverse-sqrt"
    c: float = 2.0
    table: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.kind not in STEPSIZE_KINDS:
            raise ConfigError(f"stepsize.kind: unknown kind {self.kind!r}")
        if self.kind == "table":
            if not self.table:
                raise ConfigError("stepsize.table: required for kind 'table'")
            table = tuple(float(v) for v in self.table)
            if any(not (v > 0 and math.isfinite(v)) for v in table):
                raise ConfigError("stepsize.table: entries must be positive and finite")
            object.__setattr__(self, "table", table)
        elif not (self.c > 0 and math.isfinite(self.c)):
            raise ConfigError("stepsize.c: must be positive")
        if self.kind == "constant":
            warnings.warn(
                "constant stepsize is not square-summable; convergence guarantees do not apply",
                stacklevel=2,
            )

    def __call__(self, t: int) -> float:
        if t < 1:
            raise ValueError("stepsizes are indexed from t = 1")
        if self.kind == "inverse-sqrt":
            return self.c / math.sqrt(t)
        if self.kind == "constant":
            return self.c
        if t > len(self.table):
            raise ConfigError(f"stepsize.table: no entry for round {t}")
        return self.table[t - 1]

    def decay_conditions(self) -> dict[str, bool | None]:
        """Which of: divergent sum, square-summable, non-increasing hold.

        ``None`` means undecidable from a finite table. Note ``c/sqrt(t)`` has a
        divergent sum of squares (harmonic series); it is the stepsize of the
        rate bounds, not of the asymptotic convergence result.
        """
        if self.kind == "inverse-sqrt":
            return {"divergent_sum": True, "square_summable": False, "nonincreasing": True}
        if self.kind == "constant":
            return {"divergent_sum": True, "square_summable": False, "nonincreasing": True}
        tab = self.table
        mono = all(tab[k + 1] <= tab[k] for k in range(len(tab) - 1))
        return {"divergent_sum": None, "square_summable": None, "nonincreasing": mono}


@dataclass(frozen=True, eq=False)
class AgentState:
    """One agent's iterates after some round."""

    mu: np.ndarray
    nu: float
    u: np.ndarray
    lam: np.ndarray
    x: np.ndarray
    x_hat: np.ndarray
    lam_hat: np.ndarray


@dataclass(frozen=True, eq=False)
class NetworkState:
    """All agents' iterates, stacked along axis 0.

    ``x`` and ``x_hat`` are padded to the widest agent; use :meth:`agent` or
    :meth:`agents` for per-agent views with the padding removed.
    """

    mu: np.ndarray       # (m, p)
    nu: np.ndarray       # (m,)
    u: np.ndarray        # (m, p)
    lam: np.ndarray      # (m, p)
    x: np.ndarray        # (m, w)
    x_hat: np.ndarray    # (m, w)
    lam_hat: np.ndarray  # (m, p)
    dims: tuple[int, ...]

    @property
    def m(self) -> int:
        return self.mu.shape[0]

    @cached_property
    def mean_dual(self) -> np.ndarray:
        return sum_rows(self.mu) / self.m

    def agent(self, i: int) -> AgentState:
        n = self.dims[i]
        return AgentState(
            mu=self.mu[i].copy(), nu=float(self.nu[i]), u=self.u[i].copy(),
            lam=self.lam[i].copy(), x=self.x[i, :n].copy(),
            x_hat=self.x_hat[i, :n].copy(), lam_hat=self.lam_hat[i].copy(),
        )

    def agents(self) -> list[AgentState]:
        return [self.agent(i) for i in range(self.m)]


@dataclass(frozen=True, eq=False)
class RoundResult:
    state: NetworkState
    beta: float
    t: int                      # index of the iterates in ``state``
    residuals: np.ndarray       # (m, p): A_i x_i[t] - b_i


@dataclass(frozen=True)
class Message:
    """Wire-level view of one push: ``sender`` ships its weighted shares."""

    t: int
    sender: int
    receiver: int
    mu_share: tuple[float, ...]
    nu_share: float


def _mu0_array(inst: ProblemInstance, mu0) -> np.ndarray:
    if mu0 is None:
        return np.zeros((inst.m, inst.p))
    if len(mu0) != inst.m:
        raise ConfigError(f"mu0: expected {inst.m} agent vectors, got {len(mu0)}")
    out = np.zeros((inst.m, inst.p))
    for i, v in enumerate(mu0):
        v = np.atleast_1d(np.asarray(v, dtype=float))
        if v.shape != (inst.p,):
            raise ConfigError(f"mu0[{i}]: expected length {inst.p}, got shape {v.shape}")
        out[i] = v
    return out


def initialize(inst: ProblemInstance, mu0: Sequence | None = None) -> NetworkState:
    """Round-0 state: ``nu = 1``, ``lam = u = mu0`` and ``x = argmin`` at ``lam``."""
    P = inst.packed
    mu = _mu0_array(inst, mu0)
    nu = np.ones(inst.m)
    lam = mu.copy()
    x = argmin_rows(P.a, P.b, P.lo, P.hi, P.A, lam)
    return NetworkState(mu=mu, nu=nu, u=mu.copy(), lam=lam, x=x, x_hat=x.copy(),
                        lam_hat=lam.copy(), dims=tuple(int(d) for d in P.dims))


@lru_cache(maxsize=64)
def _chunks(m: int, workers: int) -> tuple[slice, ...]:
    k = max(1, min(workers, m))
    bounds = np.linspace(0, m, k + 1).round().astype(int)
    return tuple(slice(int(bounds[q]), int(bounds[q + 1])) for q in range(k))


def push_round(state: NetworkState, snap: DigraphSnapshot, beta_next: float,
               inst: ProblemInstance, *, t: int = 0, workers: int | None = None,
               pool: ThreadPoolExecutor | None = None,
               trace: list | None = None) -> RoundResult:
    """One synchronous round; reads only ``state`` (the iterates at ``t``).

    Parameters
    ----------
    state : NetworkState
        Iterates at round ``t``.
    snap : DigraphSnapshot
        Communication graph of round ``t``.
    beta_next : float
        Stepsize ``beta[t+1]``.
    workers : int, optional
        Split the per-agent local steps across this many threads. The mixing
        sums are always done serially, so the output is bit-identical for any
        value.
    trace : list, optional
        If given, one :class:`Message` per (sender, receiver) pair is appended.
    """
    if not beta_next > 0:
        raise ConfigError("stepsize must be positive")
    m = state.m
    if snap.m != m:
        raise ConfigError(f"snapshot has {snap.m} agents, state has {m}")
    M, deg = snap.adjacency, snap.out_degrees
    p = state.mu.shape[1]
    # every sender splits (mu_j, nu_j) into d_j equal shares; nu rides along
    # as an extra column. Dividing by d_j (rather than multiplying by a
    # rounded 1/d_j) keeps the drift of sum(nu) about 100x smaller.
    share = np.concatenate([state.mu, state.nu[:, None]], axis=1) / deg[:, None]

    # steps (a)-(b): summed over senders in ascending order
    u, nu, nu_min = _kernels.mix(M, share)
    if trace is not None:
        for j in range(m):
            for i in np.flatnonzero(M[j]):
                trace.append(Message(t, j, int(i), tuple(float(v) for v in share[j, :p]),
                                     float(share[j, p])))
    if nu_min < NU_FLOOR:
        raise PushSumUnderflow(
            f"push-sum weight underflow at round {t + 1} (min nu = {nu_min:.3e}); "
            "the graph sequence is not B-strongly connected"
        )

    # steps (c)-(e): independent per agent
    P = inst.packed
    lam = np.empty_like(u)
    x = np.empty_like(state.x)
    g = np.empty_like(u)
    mu = np.empty_like(u)
    beta = float(beta_next)
    slices = _chunks(m, workers or 1)
    if len(slices) == 1:
        _kernels.local_step(u, nu, P.a, P.b, P.lo, P.hi, P.A, P.offset, P.denom, beta,
                            lam, x, g, mu)
    else:
        # rows are independent, so any split gives the same bits
        def local(rows: slice) -> None:
            _kernels.local_step(u[rows], nu[rows], P.a[rows], P.b[rows], P.lo[rows], P.hi[rows],
                                P.A[rows], P.offset[rows], P.denom[rows], beta,
                                lam[rows], x[rows], g[rows], mu[rows])

        if pool is not None:
            list(pool.map(local, slices))
        else:
            with ThreadPoolExecutor(max_workers=len(slices)) as ex:
                list(ex.map(local, slices))

    new = NetworkState(mu=mu, nu=nu, u=u, lam=lam, x=x, x_hat=state.x_hat,
                       lam_hat=state.lam_hat, dims=state.dims)
    return RoundResult(state=new, beta=float(beta_next), t=t + 1, residuals=g)


def update_running_averages(state, beta_next: float, cum_beta: float):
    """Advance ``x_hat`` and ``lam_hat`` by one weighted-average step.

    Works on :class:`AgentState` and :class:`NetworkState` alike. ``cum_beta``
    must already include ``beta_next``.
    """
    if not cum_beta > 0:
        raise ValueError("cum_beta must be positive")
    w = beta_next / cum_beta
    if w == 1.0:
        x_hat = np.array(state.x, dtype=float, copy=True)
        lam_hat = np.array(state.lam, dtype=float, copy=True)
    else:
        x_hat = state.x_hat + w * (state.x - state.x_hat)
        lam_hat = state.lam_hat + w * (state.lam - state.lam_hat)
    return replace(state, x_hat=x_hat, lam_hat=lam_hat)


def iterate(inst: ProblemInstance, sched: GraphSchedule, stepsize: StepsizeSchedule,
            T: int, mu0=None, *, workers: int | None = None,
            trace: list | None = None) -> Iterator[tuple[RoundResult, float]]:
    """Yield ``(round_result, cum_beta)`` for rounds ``1..T``; round 0 is not yielded."""
    if T < 1:
        raise ConfigError("iterations must be >= 1")
    if sched.m != inst.m:
        raise ConfigError(f"schedule.m = {sched.m} but the problem has {inst.m} agents")
    state = initialize(inst, mu0)
    cum_beta = 0.0
    pool = ThreadPoolExecutor(max_workers=workers) if workers and workers > 1 else None
    try:
        for t in range(T):
            beta = stepsize(t + 1)
            cum_beta += beta
            rr = push_round(state, sched.snapshot(t), beta, inst, t=t,
                            workers=workers, pool=pool, trace=trace)
            state = update_running_averages(rr.state, beta, cum_beta)
            yield replace(rr, state=state), cum_beta
    finally:
        if pool is not None:
            pool.shutdown()


@dataclass
class Trajectory:
    initial: NetworkState
    final: RoundResult
    records: list = field(default_factory=list)
    rounds: list = field(default_factory=list)
    stopped_early: bool = False

    @property
    def iterations(self) -> int:
        return self.final.t


def run(inst: ProblemInstance, sched: GraphSchedule, stepsize: StepsizeSchedule, T: int,
        mu0=None, *, oracle=None, check_invariants: bool = True,
        tolerances: dict | None = None, workers: int | None = None,
        keep_rounds: bool = False, trace: list | None = None,
        on_record: Callable | None = None) -> Trajectory:
    """Run ``T`` rounds and collect one :class:`~ddsgps.metrics.IterationRecord` per round.

    With ``check_invariants`` every round is checked against the exact
    identities of the iteration (mass conservation, mean-dual recursion,
    constraint-violation identity) and, when an oracle result is supplied,
    the per-round descent inequality; a failure raises
    :class:`~ddsgps.errors.InvariantViolation`.

    ``tolerances`` may hold ``consensus`` and ``violation`` thresholds; the run
    stops early once both the consensus spread and the violation norm are
    below them.
    """
    from .metrics import Monitor

    mon = Monitor(inst, mu0_state=initialize(inst, mu0), oracle=oracle)
    tol = tolerances or {}
    traj = None
    prev = mon.initial
    for rr, cum_beta in iterate(inst, sched, stepsize, T, mu0, workers=workers, trace=trace):
        rec = mon.record(rr.state, t=rr.t, beta=rr.beta, cum_beta=cum_beta,
                         previous=prev, residuals=rr.residuals)
        if check_invariants:
            problems = mon.violations(rec)
            if problems:
                raise InvariantViolation(f"round {rr.t}: " + "; ".join(problems))
        if traj is None:
            traj = Trajectory(initial=mon.initial, final=rr)
        traj.final = rr
        traj.records.append(rec)
        if keep_rounds:
            traj.rounds.append(rr)
        if on_record is not None:
            on_record(rec)
        prev = rr.state
        if tol and _early_exit(rec, tol):
            traj.stopped_early = rr.t < T
            break
    return traj


def _early_exit(rec, tol: dict) -> bool:
    cons = tol.get("consensus")
    viol = tol.get("violation")
    if cons is None and viol is None:
        return False
    ok = True
    if cons is not None:
        ok &= rec.consensus_spread <= cons
    if viol is not None:
        ok &= rec.violation_norm <= viol
    return ok
