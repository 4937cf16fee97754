"""
Compiled per-round kernels.

Each kernel repeats the arithmetic of the stacked numpy kernels in
:mod:`ddsgps.problem` operation for operation (same summation order, same
clamp semantics, no fused multiply-add), so results are bit-identical to the
numpy route; ``tests/test_pushsum.py`` checks this on random inputs.
"""

import numpy as np
from numba import njit

_OPTS = dict(cache=True, nogil=True, error_model="numpy")


@njit(**_OPTS)
def mix(M, share):
    """``out[i] = sum_j M[j, i] * share[j]`` summed over senders in ascending order.

    ``M`` is the boolean (sender, receiver) adjacency; the products are kept
    (not skipped) so signed zeros match ``add.accumulate`` over the same terms.
    Returns the mixed dual columns, the mixed weights and the smallest weight.
    """
    m, q = share.shape
    p = q - 1
    u = np.empty((m, p))
    nu = np.empty(m)
    nu_min = np.inf
    for i in range(m):
        for k in range(q):
            acc = (1.0 if M[0, i] else 0.0) * share[0, k]
            for j in range(1, m):
                acc = acc + (1.0 if M[j, i] else 0.0) * share[j, k]
            if k < p:
                u[i, k] = acc
            else:
                nu[i] = acc
                nu_min = min(nu_min, acc)
    return u, nu, nu_min


@njit(**_OPTS)
def local_step(u, nu, a, b, lo, hi, A, offset, denom, beta, lam, x, g, mu):
    """Ratio, box-constrained argmin, residual and dual update, written into the outputs."""
    m, p = u.shape
    w = a.shape[1]
    for i in range(m):
        for r in range(p):
            lam[i, r] = u[i, r] / nu[i]
        for k in range(w):
            lin = b[i, k] + A[i, 0, k] * lam[i, 0]
            for r in range(1, p):
                lin = lin + A[i, r, k] * lam[i, r]
            if a[i, k] > 0:
                v = lin / denom[i, k]
                # np.maximum / np.minimum keep the first operand only when it
                # wins strictly or is NaN; on ties (e.g. -0.0 vs 0.0) the bound wins
                if not (v > lo[i, k] or v != v):
                    v = lo[i, k]
                if not (v < hi[i, k] or v != v):
                    v = hi[i, k]
            elif lin < 0:
                v = hi[i, k]
            else:
                v = lo[i, k]
            x[i, k] = v
        for r in range(p):
            acc = A[i, r, 0] * x[i, 0]
            for k in range(1, w):
                acc = acc + A[i, r, k] * x[i, k]
            acc = acc - offset[i, r]
            g[i, r] = acc
            mu[i, r] = u[i, r] + beta * acc
