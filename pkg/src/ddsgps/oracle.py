"""
Centralised reference solvers for the coupled problem.

``solve_scalar_coupling`` handles the economic-dispatch shape (one coupling
row, scalar agents with positive coefficients) exactly by bisection on the
multiplier. ``solve_general_small`` runs centralised dual subgradient ascent
and serves as an independent cross-check.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError, InfeasibleError
from .problem import (ProblemInstance, argmin_rows, dual_function, evaluate_objective,
                      lagrangian, objective_rows, residual_rows, sum_rows)

BRACKET_START = 1e3
BRACKET_CAP = 1e12


@dataclass
class OracleResult:
    x_star: list[np.ndarray]
    lambda_star: np.ndarray
    f_star: float
    residual: float
    method: str = "bisection"
    converged: bool = True
    primal_value: float | None = None
    info: dict = field(default_factory=dict)

    def summary(self) -> dict:
        return {
            "method": self.method,
            "f_star": self.f_star,
            "lambda_star": [float(v) for v in self.lambda_star],
            "residual": self.residual,
            "converged": self.converged,
            "x_star": [[float(v) for v in xi] for xi in self.x_star],
        }


def _broadcast(inst: ProblemInstance, lam) -> np.ndarray:
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return np.broadcast_to(lam, (inst.m, inst.p))


def _argmin_all(inst: ProblemInstance, lam) -> np.ndarray:
    P = inst.packed
    return argmin_rows(P.a, P.b, P.lo, P.hi, P.A, _broadcast(inst, lam))


def solve_scalar_coupling(inst: ProblemInstance, tol: float = 1e-12) -> OracleResult:
    """Exact solve for one coupling row and scalar agents with ``A_i > 0``.

    The aggregate ``h(lam) = sum_i A_i x_i(lam) - sum_i b_i`` is non-increasing
    in ``lam``; bisection brackets its root. Agents whose output jumps inside the
    final bracket (linear costs) start at the lower choice and are raised in
    agent order until the demand is met.
    """
    P = inst.packed
    if inst.p != 1 or np.any(P.dims != 1):
        raise ConfigError("bisection oracle needs p = 1 and scalar agents")
    coeff = P.A[:, 0, 0]
    if np.any(coeff <= 0):
        raise ConfigError("bisection oracle needs positive coupling coefficients")
    demand = float(sum_rows(P.offset)[0])

    def supply(lam: float) -> np.ndarray:
        return _argmin_all(inst, [lam])[:, 0]

    def h(lam: float) -> float:
        return float(sum_rows((coeff * supply(lam))[:, None])[0]) - demand

    span = BRACKET_START
    while not (h(-span) >= 0 and h(span) <= 0):
        span *= 2
        if span > BRACKET_CAP:
            raise InfeasibleError(
                "Slater violated: the demand sum_i b_i is outside the range of total supply"
            )
    lo, hi = -span, span
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if h(mid) >= 0:
            lo = mid
        else:
            hi = mid

    x_high, x_low = supply(lo), supply(hi)
    x = x_low.copy()
    deficit = demand - float(sum_rows((coeff * x)[:, None])[0])
    for i in range(inst.m):
        if deficit <= 0:
            break
        step = min(x_high[i] - x[i], deficit / coeff[i])
        if step > 0:
            x[i] += step
            deficit -= coeff[i] * step
    x = np.clip(x, P.lo[:, 0], P.hi[:, 0])

    lam_star = np.array([0.5 * (lo + hi)])
    xs = [np.array([v]) for v in x]
    residual = abs(float(sum_rows((coeff * x)[:, None])[0]) - demand)
    return OracleResult(xs, lam_star, evaluate_objective(inst, xs), residual,
                        method="bisection", info={"bracket": (lo, hi)})


def _default_step(inst: ProblemInstance) -> float:
    """Inverse of a curvature estimate of the dual function."""
    P = inst.packed
    col_sq = (P.A * P.A).sum(axis=1)  # (m, w)
    mask = np.zeros_like(P.a, dtype=bool)
    for i, n in enumerate(P.dims):
        mask[i, :n] = True
    strict = mask & (P.a > 0)
    curvature = float((col_sq[strict] / (2 * P.a[strict])).sum())
    if curvature > 0:
        return 1.0 / curvature
    width = float(np.abs(P.hi - P.lo).sum())
    return 1.0 / max(width, 1.0)


def solve_general_small(inst: ProblemInstance, iters: int = 20000, step0: float | None = None,
                        feas_tol: float = 1e-6) -> OracleResult:
    """Centralised dual subgradient ascent ``lam += step0/sqrt(k) * sum_i (A_i x_i(lam) - b_i)``.

    Returns the best dual iterate found. ``f_star`` is the dual value at that
    iterate (a lower bound on the optimum which meets it at convergence). The
    primal answer is whichever of the step-weighted primal average and the
    minimiser at the best dual iterate has the smaller coupling residual; if
    that residual exceeds ``feas_tol`` the result is flagged ``converged=False``.
    """
    P = inst.packed
    if int(P.dims.sum()) > 100:
        raise ConfigError("solve_general_small is meant for at most 100 primal coordinates")
    if iters < 1:
        raise ConfigError("iters must be >= 1")
    step0 = _default_step(inst) if step0 is None else float(step0)
    lam = np.zeros(inst.p)
    best_val, best_lam = -math.inf, lam.copy()
    x_avg = np.zeros_like(P.a)
    weight = 0.0
    for k in range(1, iters + 1):
        x = _argmin_all(inst, lam)
        g = sum_rows(residual_rows(P.A, P.offset, x))
        val = float(sum_rows(objective_rows(P.a, P.b, P.c, x)[:, None])[0]) + float(lam @ g)
        if val > best_val:
            best_val, best_lam = val, lam.copy()
        alpha = step0 / math.sqrt(k)
        weight += alpha
        x_avg += (alpha / weight) * (x - x_avg)
        lam = lam + alpha * g

    # the dual is flat near its maximum, so the best-valued iterate can be an
    # early one; consider the final iterate as well and keep the most feasible
    candidates = []
    for lam_c, x in ((best_lam, x_avg), (best_lam, _argmin_all(inst, best_lam)),
                     (lam, _argmin_all(inst, lam))):
        r = float(np.linalg.norm(sum_rows(residual_rows(P.A, P.offset, x))))
        candidates.append((r, lam_c, x))
    residual, lam_out, x_best = min(candidates, key=lambda c: c[0])
    xs = P.unpad(x_best)
    return OracleResult(
        xs, np.array(lam_out), best_val, residual, method="dual-ascent",
        converged=residual <= feas_tol, primal_value=evaluate_objective(inst, xs),
        info={"iters": iters, "step0": step0},
    )


def solve(inst: ProblemInstance) -> OracleResult:
    """Pick the exact bisection solver when applicable, dual ascent otherwise."""
    P = inst.packed
    if inst.p == 1 and np.all(P.dims == 1) and np.all(P.A[:, 0, 0] > 0):
        return solve_scalar_coupling(inst)
    return solve_general_small(inst)


def saddle_point_gaps(inst: ProblemInstance, res: OracleResult, rng: np.random.Generator,
                      probes: int = 1000, lam_scale: float | None = None) -> tuple[float, float]:
    """Smallest slack of ``L(x*, lam) <= L(x*, lam*) <= L(x, lam*)`` over random probes.

    Random ``x`` are uniform in the boxes, random ``lam`` uniform in a cube of
    half-width ``lam_scale`` (default ``10 * max(1, |lam*|)``) around zero.
    Non-negative values mean both inequalities held.
    """
    lam_star = np.asarray(res.lambda_star, dtype=float)
    if lam_scale is None:
        lam_scale = 10.0 * max(1.0, float(np.abs(lam_star).max()))
    L_star = lagrangian(inst, res.x_star, lam_star)
    worst_dual = worst_primal = math.inf
    for _ in range(probes):
        lam = lam_scale * (2 * rng.random(inst.p) - 1)
        xs = [ag.box.sample(rng) for ag in inst.agents]
        worst_dual = min(worst_dual, L_star - lagrangian(inst, res.x_star, lam))
        worst_primal = min(worst_primal, lagrangian(inst, xs, lam_star) - L_star)
    return worst_dual, worst_primal


def duality_gap(inst: ProblemInstance, res: OracleResult) -> float:
    """``|phi(lam*) - F*|``."""
    return abs(dual_function(inst, res.lambda_star) - res.f_star)
