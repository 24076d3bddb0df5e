"""Power allocation over a discrete level grid.

Flat-power AMP can stall at a spurious fixed point well before the
optimal one. Spreading the per-section powers over a few levels removes
the stall: weights over a level grid are chosen by a linear program that
minimizes average power subject to the fixed-point condition staying
strictly violated over a whole eta range, so the recursion is forced
through. All powers here are on the per-symbol scale P (so a section's
hat-scale power is J*P/R_in); eta constraints live on [0, 1-delta].
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .analysis import AnalysisModel, ConvergenceError, scalar_mmse, \
    se_fixed_point_alg, se_global_min
from .lp import solve_lp

_MMSE_ATOL = 1e-12  # tail mmse values only matter times beta*Phat here


@dataclass(frozen=True)
class PowerGrid:
    levels: tuple
    eta_grid: tuple
    eps: float = 0.01
    delta: float = 0.1

    def __post_init__(self):
        lv = np.asarray(self.levels, dtype=float)
        if lv.size < 1 or lv[0] <= 0 or np.any(np.diff(lv) <= 0):
            raise ValueError("levels must be positive and strictly increasing")
        eg = np.asarray(self.eta_grid, dtype=float)
        if np.any(eg < 0) or np.any(eg >= 1.0):
            raise ValueError("eta grid must lie in [0, 1)")
        if not 0 < self.eps < 1:
            raise ValueError("eps out of range")


def default_grid(p_opt, n_levels=33, grid_factor=5.0, eta_points=200,
                 eps=0.01, delta=0.1):
    levels = np.linspace(p_opt, grid_factor * p_opt, n_levels)
    eta = np.linspace(0.0, 1.0 - delta, eta_points)
    return PowerGrid(levels=tuple(levels), eta_grid=tuple(eta),
                     eps=eps, delta=delta)


@dataclass(frozen=True)
class AllocationSolution:
    levels: tuple
    weights: tuple
    average_power: float

    def __post_init__(self):
        w = np.asarray(self.weights, dtype=float)
        if np.any(w < -1e-12) or abs(w.sum() - 1.0) > 1e-9:
            raise ValueError("weights must be a distribution")

    @property
    def support(self):
        return [(lv, wt) for lv, wt in zip(self.levels, self.weights)
                if wt > 1e-9]

    def to_dict(self):
        return {"levels": list(self.levels), "weights": list(self.weights),
                "averagePower": self.average_power}


def _strength_power_search(Ka, J, R_in, target, eta_of, prior_kind,
                           power_cap, rel_tol):
    def ok(P):
        try:
            m = AnalysisModel(Ka, J, R_in, P / (2.0 * R_in), prior_kind)
            return eta_of(m) * m.phat >= target
        except ConvergenceError:
            return False

    lo = target * R_in / J  # eta <= 1, so no smaller power can work
    hi = 2.0 * lo
    while not ok(hi):
        hi *= 2.0
        if hi > power_cap:
            raise ValueError("target strength unreachable within power cap")
    while hi - lo > rel_tol * hi:
        mid = math.sqrt(lo * hi)
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def find_p_opt(Ka, J, R_in, target_strength, prior_kind="auto",
               power_cap=1e9, rel_tol=1e-5):
    """Smallest flat power whose globally optimal eta meets the target
    channel strength eta*Phat."""
    if target_strength <= 0:
        raise ValueError("target strength must be positive")
    return _strength_power_search(Ka, J, R_in, target_strength,
                                  se_global_min, prior_kind, power_cap,
                                  rel_tol)


def find_p_alg(Ka, J, R_in, target_strength, prior_kind="auto",
               power_cap=1e9, rel_tol=1e-5):
    """Smallest flat power whose algorithmic (first stable) eta meets the
    target channel strength."""
    if target_strength <= 0:
        raise ValueError("target strength must be positive")
    return _strength_power_search(Ka, J, R_in, target_strength,
                                  se_fixed_point_alg, prior_kind, power_cap,
                                  rel_tol)


def solve_pa_lp(Ka, J, R_in, grid: PowerGrid, prior_kind="auto",
                p_alg=None) -> AllocationSolution:
    """Minimum-average-power weights over grid.levels subject to

        beta * sum_i w_i * Phat_i * mmse(eta*Phat_i) <= 1/eta - 1 - eps

    for every eta in the grid (eta = 0 rows are vacuous), plus
    sum w = 1, w >= 0. Raises LpInfeasible when the slack cannot be met.
    When p_alg is given and the optimum is not actually cheaper than the
    flat algorithmic power, returns the flat point mass on p_alg instead.
    """
    ref = AnalysisModel(Ka, J, R_in, grid.levels[0] / (2.0 * R_in),
                        prior_kind)
    beta = ref.beta
    levels = np.asarray(grid.levels, dtype=float)
    phat_i = J * levels / R_in
    etas = np.array([e for e in grid.eta_grid if e > 0.0])
    rows = np.empty((etas.size, levels.size))
    for i, ph in enumerate(phat_i):
        mm = scalar_mmse(ref.atoms, ref.probs, etas * ph, atol=_MMSE_ATOL)
        rows[:, i] = beta * ph * mm
    rhs = 1.0 / etas - 1.0 - grid.eps
    w, avg = solve_lp(levels, A_ub=rows, b_ub=rhs,
                      A_eq=np.ones((1, levels.size)), b_eq=[1.0])
    w = np.clip(w, 0.0, None)
    w /= w.sum()
    avg = float(np.dot(w, levels))
    if p_alg is not None and avg > p_alg * (1.0 + 1e-9):
        return AllocationSolution(levels=(float(p_alg),), weights=(1.0,),
                                  average_power=float(p_alg))
    return AllocationSolution(levels=tuple(levels), weights=tuple(w),
                              average_power=avg)


def materialize(solution: AllocationSolution, L, order="desc"):
    """Per-section power vector realizing the weights: integer section
    counts by largest-remainder rounding, sections listed high-power
    first (order='asc' flips)."""
    support = solution.support
    if len(support) > L:
        raise ValueError("more support levels than sections")
    share = np.array([wt for _, wt in support])
    share /= share.sum()
    exact = share * L
    counts = np.floor(exact).astype(int)
    rem = exact - counts
    # ties on the remainder go to the higher power level
    lvl = np.array([lv for lv, _ in support])
    for i in np.lexsort((-lvl, -rem))[:L - counts.sum()]:
        counts[i] += 1
    out = np.repeat(lvl, counts)
    out = np.sort(out)[::-1] if order == "desc" else np.sort(out)
    return out


@dataclass
class AllocationCheck:
    eta_star: float
    target_eta: float
    reached: bool
    eta_grid: np.ndarray
    g: np.ndarray


def verify_allocation(Ka, J, R_in, powers, target_eta, prior_kind="auto",
                      eta_points=200, damping=0.5, tol=1e-12,
                      max_iter=10 ** 4) -> AllocationCheck:
    """Run the per-section fixed-point recursion for a concrete power
    vector and report the residual g(eta) = 1 + beta*avg_i(...) - 1/eta
    over a uniform grid; g < 0 means the recursion passes eta."""
    ref = AnalysisModel(Ka, J, R_in, 1.0, prior_kind)
    beta = ref.beta
    powers = np.asarray(powers, dtype=float)
    lvl, counts = np.unique(powers, return_counts=True)
    wts = counts / counts.sum()
    phat_i = J * lvl / R_in

    def brace(eta):
        s = 0.0
        for wt, ph in zip(wts, phat_i):
            s += wt * ph * scalar_mmse(ref.atoms, ref.probs,
                                       float(eta) * ph, atol=_MMSE_ATOL)
        return beta * s

    eta = 1.0 / (1.0 + beta * float(np.dot(wts, phat_i))
                 * ref.second_moment)
    for _ in range(max_iter):
        nxt = (1.0 - damping) * eta + damping / (1.0 + brace(eta))
        if abs(nxt - eta) < tol:
            eta = nxt
            break
        eta = nxt
    else:
        raise ConvergenceError("allocation fixed point did not settle")

    grid = np.linspace(0.0, target_eta, eta_points)[1:]
    g = np.array([1.0 + brace(e) - 1.0 / e for e in grid])
    return AllocationCheck(eta_star=eta, target_eta=target_eta,
                           reached=eta >= target_eta - 1e-3,
                           eta_grid=grid, g=g)


def write_g_curve(check: AllocationCheck, path):
    with open(path, "w") as fh:
        fh.write("eta,g\n")
        for e, v in zip(check.eta_grid, check.g):
            fh.write(f"{e:.10g},{v:.10g}\n")
