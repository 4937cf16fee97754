"""
Per-round diagnostics, theoretical rate bounds and the CSV trace format.
"""

from __future__ import annotations

import csv
import io
import math
import os
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .problem import ProblemInstance, objective_rows, residual_rows, subgradient_bound, sum_rows

CSV_COLUMNS = (
    "t", "beta", "objective_hat", "objective_gap", "violation_norm",
    "consensus_spread", "dual_distance", "identity_residual",
)

# runtime invariant thresholds
NU_SUM_TOL = 1e-12
RECURSION_TOL = 1e-12
IDENTITY_TOL = 1e-9
LEMMA2_TOL = 1e-9


@dataclass(frozen=True)
class IterationRecord:
    """Diagnostics of the iterates after round ``t``.

    Fields that need the oracle or a previous round are ``None`` when that
    information was not available. Only :data:`CSV_COLUMNS` are serialised.
    """

    t: int
    beta: float | None
    objective_hat: float
    objective_gap: float | None
    violation_norm: float
    consensus_spread: float
    dual_distance: float | None
    identity_residual: float | None
    mean_dual: tuple[float, ...]
    nu_sum: float = float("nan")
    recursion_residual: float | None = None
    consensus_error: float | None = None
    lemma2_margin: float | None = None

    def csv_row(self) -> list[str]:
        return [_fmt(getattr(self, name)) for name in CSV_COLUMNS]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return f"{float(v):.17g}"


def _norm(v: np.ndarray) -> float:
    return math.sqrt(float(v @ v))


def _rel(diff: float, *scales: float) -> float:
    """``diff`` relative to the largest scale, floored at 1."""
    return float(diff / max(1.0, *scales))


def _spread(lam: np.ndarray) -> float:
    if lam.shape[0] < 2:
        return 0.0
    if lam.shape[1] == 1:
        return float(lam[:, 0].max() - lam[:, 0].min())
    diff = lam[:, None, :] - lam[None, :, :]
    return float(np.sqrt((diff * diff).sum(axis=2)).max())


class Monitor:
    """Computes :class:`IterationRecord` rows for one run.

    Holds the per-run constants: the round-0 state, the subgradient bounds
    ``G_i`` and, optionally, the oracle's primal-dual pair.
    """

    def __init__(self, inst: ProblemInstance, mu0_state, oracle=None):
        self.inst = inst
        self.P = inst.packed
        self.m = inst.m
        self.initial = mu0_state
        self.mean_dual0 = mu0_state.mean_dual
        self.G_i = np.array([subgradient_bound(ag) for ag in inst.agents])
        self.G = float(self.G_i.sum())
        self.oracle = oracle
        # the descent inequality only holds at a true saddle point
        self.check_descent = oracle is not None and getattr(oracle, "converged", True)
        if oracle is not None:
            P = self.P
            self.x_star = P.pad(oracle.x_star)
            self.lam_star = np.asarray(oracle.lambda_star, dtype=float)
            self.f_star = float(oracle.f_star)
            self.r_star = sum_rows(residual_rows(P.A, P.offset, self.x_star))

    def _objective(self, x: np.ndarray) -> float:
        vals = objective_rows(self.P.a, self.P.b, self.P.c, x)
        return float(sum_rows(vals[:, None])[0])

    def record(self, state, *, t: int, beta: float | None = None, cum_beta: float = 0.0,
               previous=None, residuals: np.ndarray | None = None) -> IterationRecord:
        P, m = self.P, self.m
        f_hat = self._objective(state.x_hat)
        viol = sum_rows(residual_rows(P.A, P.offset, state.x_hat))
        viol_norm = float(_norm(viol))
        mu_bar = state.mean_dual

        identity = None
        if t >= 1 and cum_beta > 0:
            rhs = m * (mu_bar - self.mean_dual0) / cum_beta
            identity = _rel(float(_norm(viol - rhs)), viol_norm, float(_norm(rhs)))

        gap = dist = None
        if self.oracle is not None:
            gap = f_hat - self.f_star
            d = state.lam - self.lam_star[None, :]
            dist = float(np.sqrt((d * d).sum(axis=1)).max())

        recursion = cons_err = lemma2 = None
        if previous is not None and beta is not None:
            g = residuals if residuals is not None else residual_rows(P.A, P.offset, state.x)
            g_sum = sum_rows(g)
            mu_bar_prev = previous.mean_dual
            step = (beta / m) * g_sum
            expected = mu_bar_prev + step
            mags = np.sqrt((previous.mu * previous.mu).sum(axis=1)).mean()
            recursion = _rel(float(_norm(mu_bar - expected)),
                             float(_norm(mu_bar)), float(_norm(mu_bar_prev)),
                             float(_norm(step)), float(mags))
            dev = np.sqrt(((state.lam - mu_bar_prev[None, :]) ** 2).sum(axis=1))
            cons_err = float(dev.max())
            if self.check_descent:
                lemma2 = self._lemma2(mu_bar, mu_bar_prev, dev, beta, state.x, g_sum)

        return IterationRecord(
            t=t, beta=beta, objective_hat=f_hat, objective_gap=gap,
            violation_norm=viol_norm, consensus_spread=_spread(state.lam),
            dual_distance=dist, identity_residual=identity,
            mean_dual=tuple(float(v) for v in mu_bar),
            nu_sum=float(sum_rows(state.nu[:, None])[0]),
            recursion_residual=recursion, consensus_error=cons_err, lemma2_margin=lemma2,
        )

    def _lemma2(self, mu_bar, mu_bar_prev, dev, beta, x, g_sum) -> float:
        """Scaled slack of the one-step descent inequality at ``(x*, lam*)``."""
        m, G = self.m, self.G
        lam_star = self.lam_star
        lhs = float(np.sum((mu_bar - lam_star) ** 2))
        prev_dist = float(np.sum((mu_bar_prev - lam_star) ** 2))
        disagreement = (4.0 * beta / m) * float(self.G_i @ dev)
        noise = (G * G / (m * m)) * beta * beta
        L_new = self._objective(x) + float(lam_star @ g_sum)
        L_star = self.f_star + float(mu_bar_prev @ self.r_star)
        descent = (2.0 * beta / m) * (L_new - L_star)
        rhs = prev_dist + disagreement + noise - descent
        scale = max(1.0, lhs, prev_dist, disagreement, noise, abs(descent))
        return (rhs - lhs) / scale

    def violations(self, rec: IterationRecord) -> list[str]:
        out = []
        if abs(rec.nu_sum - self.m) > NU_SUM_TOL * self.m:
            out.append(f"push-sum mass {rec.nu_sum!r} != {self.m}")
        if rec.recursion_residual is not None and rec.recursion_residual > RECURSION_TOL:
            out.append(f"mean-dual recursion residual {rec.recursion_residual:.3e}")
        if rec.identity_residual is not None and rec.identity_residual > IDENTITY_TOL:
            out.append(f"violation identity residual {rec.identity_residual:.3e}")
        if rec.lemma2_margin is not None and rec.lemma2_margin < -LEMMA2_TOL:
            out.append(f"descent inequality violated (scaled margin {rec.lemma2_margin:.3e})")
        return out


def record(inst: ProblemInstance, state, oracle=None, *, t: int, beta: float | None = None,
           cum_beta: float = 0.0, mu0_state=None, previous=None) -> IterationRecord:
    """Stand-alone version of :meth:`Monitor.record`.

    ``mu0_state`` is the round-0 state; it defaults to ``state`` itself,
    which is right for ``t = 0``.
    """
    mon = Monitor(inst, mu0_state if mu0_state is not None else state, oracle)
    return mon.record(state, t=t, beta=beta, cum_beta=cum_beta, previous=previous)


# --- rate bounds ---------------------------------------------------------------

def _mixing_gap(xi: float, eta: float, one_minus_eta: float | None) -> float:
    if not xi > 0:
        raise ValueError("xi must be positive")
    gap = (1.0 - eta) if one_minus_eta is None else one_minus_eta
    if not 0 < gap < 1 + 1e-15:
        raise ValueError("eta must lie in (0, 1)")
    return xi * gap


def theorem2_bound(t: int, c: float, G: float, m: int, p: int, mu0_l1_mean: float,
                   mu0_l1_sum: float, xi: float, eta: float = float("nan"), *,
                   one_minus_eta: float | None = None) -> float:
    """Upper bound on ``F(x_hat[t+1]) - F*`` for ``beta[t] = c/sqrt(t)``.

    ``mu0_l1_mean`` is ``||mean(mu[0])||_1`` and ``mu0_l1_sum`` is
    ``sum_j ||mu_j[0]||_1``. Pass ``one_minus_eta`` when ``eta`` is too close
    to 1 to be represented.
    """
    if t < 1:
        raise ValueError("t must be >= 1")
    k = _mixing_gap(xi, eta, one_minus_eta)
    s = math.sqrt(t + 1)
    return (m * mu0_l1_mean / (2 * c * s)
            + c * G * G * (1 + math.log(t + 1)) / (2 * m * s)
            + 16 * G * mu0_l1_sum / (k * s)
            + 16 * c * p * G * G * (1 + math.log(t)) / (k * s))


def theorem3_bound(t: int, c: float, G: float, m: int, p: int, mu0_l1_mean: float,
                   mu0_l1_sum: float, xi: float, eta: float = float("nan"), *,
                   one_minus_eta: float | None = None) -> float:
    """Upper bound on ``||sum_i A_i x_hat_i[t+1] - b_i||**2`` for ``beta[t] = c/sqrt(t)``."""
    if t < 1:
        raise ValueError("t must be >= 1")
    k = _mixing_gap(xi, eta, one_minus_eta)
    return (4 * m * m * mu0_l1_mean / (c * c * (t + 1))
            + 2 * G * G * (1 + math.log(t + 1)) / (t + 1)
            + 64 * G * m * mu0_l1_sum / (c * k * (t + 1))
            + 64 * m * p * G * G * (1 + math.log(t)) / (k * (t + 1)))


def initial_dual_norms(mu0: np.ndarray) -> dict[str, float]:
    """Norms of the initial dual masses used by the bounds (``mu0`` is ``(m, p)``)."""
    mu0 = np.asarray(mu0, dtype=float)
    mean = mu0.mean(axis=0)
    return {
        "mean_l1": float(np.abs(mean).sum()),
        "mean_sq": float(mean @ mean),
        "sum_l1": float(np.abs(mu0).sum()),
    }


def bound_violations(records: Sequence[IterationRecord], *, c: float, G: float, m: int,
                     p: int, mu0_l1_mean: float, mu0_l1_sum: float, xi: float,
                     one_minus_eta: float) -> list[tuple[int, str, float, float]]:
    """Rounds where the empirical gap or squared violation exceeds its bound.

    A record at round ``s`` is compared with the bound for ``t = s - 1``;
    round 1 is skipped (the bounds need ``t >= 1``).
    """
    bad = []
    for rec in records:
        if rec.t < 2:
            continue
        t = rec.t - 1
        b3 = theorem3_bound(t, c, G, m, p, mu0_l1_mean, mu0_l1_sum, xi, one_minus_eta=one_minus_eta)
        if rec.violation_norm ** 2 > b3:
            bad.append((rec.t, "violation", rec.violation_norm ** 2, b3))
        if rec.objective_gap is not None:
            b2 = theorem2_bound(t, c, G, m, p, mu0_l1_mean, mu0_l1_sum, xi, one_minus_eta=one_minus_eta)
            if rec.objective_gap > b2:
                bad.append((rec.t, "gap", rec.objective_gap, b2))
    return bad


@dataclass(frozen=True)
class EnvelopeCheck:
    burn_in_max: float
    tail_max: float
    worst_t: int

    @property
    def ok(self) -> bool:
        return self.tail_max <= self.burn_in_max


def rate_envelope(ts: Sequence[int], values: Sequence[float], scale, burn_in=(100, 500),
                  tail: tuple[int, int] | None = None) -> EnvelopeCheck:
    """Compare ``values[t] * scale(t)`` over ``tail`` with its maximum over ``burn_in``.

    ``scale`` maps ``t`` to the normaliser, e.g. ``sqrt(t) / (1 + ln t)`` for a
    ``ln t / sqrt t`` decay. ``tail`` defaults to ``[burn_in[1], max(ts)]``.
    """
    ts = np.asarray(ts)
    vals = np.asarray(values, dtype=float) * np.array([scale(t) for t in ts])
    lo, hi = burn_in
    if tail is None:
        tail = (hi, int(ts.max()))
    head = vals[(ts >= lo) & (ts <= hi)]
    sel = (ts >= tail[0]) & (ts <= tail[1])
    body = vals[sel]
    if head.size == 0 or body.size == 0:
        raise ValueError("burn-in or tail window is empty")
    k = int(np.argmax(body))
    return EnvelopeCheck(float(head.max()), float(body[k]), int(ts[sel][k]))


# --- CSV -------------------------------------------------------------------------

class CsvWriter:
    """Streams records to an open text file; the header goes out on construction."""

    def __init__(self, fh):
        self._w = csv.writer(fh, lineterminator="\n")
        self._w.writerow(CSV_COLUMNS)

    def write(self, rec: IterationRecord) -> None:
        self._w.writerow(rec.csv_row())


def write_csv(records: Iterable[IterationRecord], dest) -> None:
    """Write records to a path or text stream (``\\n`` line endings)."""
    if isinstance(dest, (str, os.PathLike)):
        with open(dest, "w", newline="") as fh:
            write_csv(records, fh)
        return
    w = CsvWriter(dest)
    for rec in records:
        w.write(rec)


def csv_text(records: Iterable[IterationRecord]) -> str:
    buf = io.StringIO()
    write_csv(records, buf)
    return buf.getvalue()


def read_csv(src) -> list[dict]:
    """Parse a trace back into dicts; empty cells become ``None``."""
    if isinstance(src, (str, os.PathLike)):
        with open(src, newline="") as fh:
            return read_csv(fh)
    reader = csv.reader(src)
    header = next(reader, None)
    if header is None or tuple(header) != CSV_COLUMNS:
        raise ValueError(f"unexpected CSV header: {header}")
    rows = []
    for line in reader:
        if len(line) != len(CSV_COLUMNS):
            raise ValueError(f"row {reader.line_num}: expected {len(CSV_COLUMNS)} fields")
        row = {}
        for name, cell in zip(CSV_COLUMNS, line):
            if cell == "":
                row[name] = None
            elif name == "t":
                row[name] = int(cell)
            else:
                row[name] = float(cell)
        rows.append(row)
    return rows


def verify_rows(rows: Sequence[dict], identity_tol: float = IDENTITY_TOL) -> list[str]:
    """Offline checks of a trace; returns human-readable problems (empty if clean)."""
    problems = []
    expected_t = None
    for row in rows:
        t = row["t"]
        if expected_t is not None and t != expected_t:
            problems.append(f"t={t}: rounds not contiguous (expected {expected_t})")
        expected_t = t + 1
        for name in ("objective_hat", "violation_norm", "consensus_spread"):
            if row[name] is None or not math.isfinite(row[name]):
                problems.append(f"t={t}: {name} missing or not finite")
        for name in ("violation_norm", "consensus_spread", "dual_distance", "identity_residual"):
            v = row[name]
            if v is not None and v < 0:
                problems.append(f"t={t}: {name} is negative")
        if t >= 1:
            if row["beta"] is None or not row["beta"] > 0:
                problems.append(f"t={t}: stepsize missing or not positive")
            res = row["identity_residual"]
            if res is None:
                problems.append(f"t={t}: identity_residual missing")
            elif not res <= identity_tol:
                problems.append(f"t={t}: identity_residual {res:.3e} > {identity_tol:.0e}")
        if row["objective_gap"] is not None and row["dual_distance"] is None:
            problems.append(f"t={t}: objective_gap present without dual_distance")
    if not rows:
        problems.append("trace has no rows")
    return problems
