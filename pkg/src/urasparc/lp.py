"""Dense two-phase simplex for small linear programs.

Solves  min c@x  s.t.  A_ub@x <= b_ub,  A_eq@x == b_eq,  x >= 0.

Self-contained on purpose: the allocation problems this backs are tiny
(tens of variables, a few hundred constraints), and carrying a full LP
dependency for that is not worth it. Bland's rule throughout, so the
iteration cannot cycle; speed is a non-issue at these sizes.
"""

from __future__ import annotations

import numpy as np


class LpInfeasible(RuntimeError):
    """No point satisfies the constraints."""


class LpUnbounded(RuntimeError):
    """The objective decreases without bound on the feasible set."""


def _pivot(T, basis, row, col):
    T[row] /= T[row, col]
    factors = T[:, col].copy()
    factors[row] = 0.0
    T -= np.outer(factors, T[row])
    basis[row] = col


def _bland(T, basis, ncols, tol):
    """Run simplex on tableau T (last row reduced costs, last column rhs)
    until optimal. Only columns < ncols may enter."""
    m = T.shape[0] - 1
    while True:
        obj = T[-1, :ncols]
        enter = -1
        for j in range(ncols):
            if obj[j] < -tol:
                enter = j
                break
        if enter < 0:
            return
        ratios = np.full(m, np.inf)
        col = T[:m, enter]
        ok = col > tol
        ratios[ok] = T[:m, -1][ok] / col[ok]
        best = np.inf
        leave = -1
        for i in range(m):
            if ratios[i] < best - 1e-15 or (
                    ratios[i] < best + 1e-15 and leave >= 0
                    and basis[i] < basis[leave]):
                best = ratios[i]
                leave = i
        if leave < 0 or not np.isfinite(best):
            raise LpUnbounded("no blocking constraint on entering column")
        _pivot(T, basis, leave, enter)


def solve_lp(c, A_ub=None, b_ub=None, A_eq=None, b_eq=None, tol=1e-9):
    """Returns (x, objective value). Raises LpInfeasible / LpUnbounded."""
    c = np.asarray(c, dtype=float)
    n = c.size
    blocks = []
    rhs = []
    n_ub = 0
    if A_ub is not None:
        A_ub = np.atleast_2d(np.asarray(A_ub, dtype=float))
        b_ub = np.atleast_1d(np.asarray(b_ub, dtype=float))
        n_ub = A_ub.shape[0]
        blocks.append(np.hstack([A_ub, np.eye(n_ub)]))
        rhs.append(b_ub)
    if A_eq is not None:
        A_eq = np.atleast_2d(np.asarray(A_eq, dtype=float))
        b_eq = np.atleast_1d(np.asarray(b_eq, dtype=float))
        pad = np.zeros((A_eq.shape[0], n_ub))
        blocks.append(np.hstack([A_eq, pad]))
        rhs.append(b_eq)
    if not blocks:
        raise ValueError("no constraints")
    A = np.vstack(blocks)
    b = np.concatenate(rhs)
    m, width = A.shape
    neg = b < 0
    A[neg] *= -1.0
    b[neg] *= -1.0

    # Phase 1: artificial basis on every row.
    T = np.zeros((m + 1, width + m + 1))
    T[:m, :width] = A
    T[:m, width:width + m] = np.eye(m)
    T[:m, -1] = b
    T[-1, :width] = -A.sum(axis=0)
    T[-1, -1] = -b.sum()
    basis = list(range(width, width + m))
    _bland(T, basis, width, tol)
    if T[-1, -1] < -tol * max(1.0, abs(b).max()):
        raise LpInfeasible("phase-1 optimum is positive")

    # Remove artificials still in the basis (degenerate rows).
    drop = []
    for i, v in enumerate(basis):
        if v >= width:
            j = next((jj for jj in range(width) if abs(T[i, jj]) > tol), None)
            if j is None:
                drop.append(i)
            else:
                _pivot(T, basis, i, j)
    if drop:
        keep = [i for i in range(m) if i not in drop]
        T = T[keep + [m]]
        basis = [basis[i] for i in keep]
        m = len(keep)

    # Phase 2: install the real objective over the current basis.
    T = np.hstack([T[:, :width], T[:, -1:]])
    cost = np.concatenate([c, np.zeros(width - n)])
    T[-1, :width] = cost
    T[-1, -1] = 0.0
    for i, v in enumerate(basis):
        if cost[v] != 0.0:
            T[-1] -= cost[v] * T[i]
    _bland(T, basis, width, tol)

    x = np.zeros(width)
    for i, v in enumerate(basis):
        x[v] = T[i, -1]
    return x[:n], float(-T[-1, -1])
