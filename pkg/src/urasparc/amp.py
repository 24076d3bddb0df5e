"""The AMP iteration for superposition decoding.

Updates, with beta = L*2^J/n and f the componentwise denoiser:

    theta^{t+1} = f_t(A^T z^t + theta^t)
    z^{t+1}     = y - A theta^{t+1} + beta * z^t * <f_t'>
    tau_{t+1}^2 = ||z^{t+1}||^2 / n

tau^2 is taken from the residual norm (self-tuning) rather than the SE
recursion. The Onsager average <f'> is a plain mean over all components,
computed once per iteration in a fixed order.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .codebook import GaussianCodebook
from .denoise import DenoiserSpec, denoise


class AmpDivergence(RuntimeError):
    """Residual energy grew past the divergence guard."""


@dataclass
class AmpState:
    theta: np.ndarray
    residual: np.ndarray
    tau2: float
    iter: int


def amp_init(y, total_cols):
    y = np.asarray(y, dtype=np.float64)
    return AmpState(theta=np.zeros(total_cols), residual=y.copy(),
                    tau2=float(y @ y) / y.size, iter=0)


def amp_step(cb: GaussianCodebook, y, state: AmpState, spec: DenoiserSpec,
             tau2_cap=None):
    eff = np.asarray(cb.rmatvec(state.residual), dtype=np.float64) + state.theta
    theta, deriv = denoise(spec, eff, state.tau2)
    onsager = float(np.mean(deriv))
    beta = cb.total_cols / cb.n
    z = y - np.asarray(cb.matvec(theta), dtype=np.float64) \
        + beta * onsager * state.residual
    tau2 = float(z @ z) / cb.n
    if tau2_cap is not None and tau2 > tau2_cap:
        raise AmpDivergence(f"tau^2 = {tau2:.3g} exceeded cap {tau2_cap:.3g}")
    return AmpState(theta=theta, residual=z, tau2=tau2, iter=state.iter + 1)


def amp_run(cb, y, spec, Tmax=50, stop_tol=1e-6, truth=None, guard=10.0):
    """Iterate to Tmax or until |tau_t^2 - tau_{t-1}^2| < stop_tol * tau_{t-1}^2.

    Returns (final_state, trace). Trace rows are (iter, tau2, mse) where
    mse is ||theta^t - truth||^2/(L*2^J) when truth is given, else nan.
    mse at iter t describes theta^t (theta^0 = 0).
    """
    state = amp_init(y, cb.total_cols)
    cap = guard * state.tau2 if guard is not None else None

    def mse(th):
        if truth is None:
            return float("nan")
        d = th - truth
        return float(d @ d) / cb.total_cols

    trace = [(0, state.tau2, mse(state.theta))]
    for _ in range(Tmax):
        prev = state.tau2
        state = amp_step(cb, y, state, spec, tau2_cap=cap)
        trace.append((state.iter, state.tau2, mse(state.theta)))
        if state.tau2 == 0.0:
            break   # exact reconstruction; only reachable without noise
        if abs(state.tau2 - prev) < stop_tol * prev:
            break
    return state, trace


def quantize(theta, phat, kmax):
    """Round theta to integer multiples of sqrt(Phat_l), clamped to [0, kmax]."""
    phat = np.atleast_1d(np.asarray(phat, dtype=float))
    th = np.asarray(theta, dtype=float).reshape(len(phat), -1)
    s = np.rint(th / np.sqrt(phat)[:, None]).astype(np.int64)
    return np.clip(s, 0, kmax).ravel()


def write_trace(trace, path):
    """Per-iteration CSV: iter, tau2, mse_if_truth_known."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "tau2", "mse_if_truth_known"])
        for it, tau2, m in trace:
            w.writerow([it, f"{tau2:.12g}", f"{m:.12g}"])
