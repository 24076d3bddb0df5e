"""Support decisions on the AMP output and the analytic detection tradeoff.

Two decision rules produce per-section candidate lists for the outer
decoder:

* a likelihood-ratio test on the decoupled observation r = x/tau
  (declare active when the posterior odds of s >= 1 clear a threshold),
* top-(Ka + Delta) selection on the final coefficient estimate.

The analytic missed-detection/false-alarm tradeoff for the binary
support test is Qinv(p_md) + Qinv(p_fa) = sqrt(eta * Phat).
"""

from __future__ import annotations

import csv
import math

import numpy as np
from scipy.special import erfc, erfcinv

from .config import SectionPrior


def qfunc(x):
    """Gaussian tail probability Q(x) = P(N(0,1) > x)."""
    return 0.5 * erfc(np.asarray(x, dtype=float) / math.sqrt(2.0))


def qfuncinv(p):
    """Inverse of Q on (0, 1); rational approximation accurate to ~1 ulp."""
    return math.sqrt(2.0) * erfcinv(2.0 * np.asarray(p, dtype=float))


def required_strength(p_md, p_fa):
    """Channel strength eta*Phat needed for a (p_md, p_fa) operating point."""
    if not (0.0 < p_md < 0.5 and 0.0 < p_fa < 0.5):
        raise ValueError("targets must lie in (0, 1/2)")
    return float((qfuncinv(p_md) + qfuncinv(p_fa)) ** 2)


def tradeoff_curve(eta_phat, p_md=None, points=101):
    """Sampled (p_md, p_fa, lr_threshold) triples along the analytic curve.

    lr_threshold is the posterior-odds threshold of the matching LRT,
    theta = exp(sqrt(t) r* - t/2) * (1-p0)/p0 evaluated without the prior
    factor (so it multiplies the prior odds); reported as the plain
    likelihood ratio exp(sqrt(t) r* - t/2) at the decision boundary
    r* = sqrt(t) - Qinv(p_md).
    """
    if eta_phat <= 0:
        raise ValueError("eta_phat must be positive")
    st = math.sqrt(eta_phat)
    if p_md is None:
        span = np.linspace(-6.0, min(6.0, st - 1e-3), points)
        p_md = qfunc(st - span)  # p_md from Qinv(p_md) = st - Qinv(p_fa)
    p_md = np.atleast_1d(np.asarray(p_md, dtype=float))
    rstar = st - qfuncinv(p_md)
    p_fa = qfunc(rstar)
    lr = np.exp(st * rstar - eta_phat / 2.0)
    keep = (p_md > 0) & (p_md < 1) & (p_fa > 0) & (p_fa < 1)
    return p_md[keep], p_fa[keep], lr[keep]


def write_tradeoff_csv(curve, path):
    p_md, p_fa, lr = curve
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["p_md", "p_fa", "theta_threshold"])
        for row in zip(p_md, p_fa, lr):
            w.writerow([f"{v:.12g}" for v in row])


def lrt_support(obs, prior: SectionPrior, eta_phat, threshold,
                or_approx=True):
    """Per-section lists of components whose activity odds clear `threshold`.

    obs is the decoupled-channel observation on the unit-noise scale
    (the AMP effective observation divided by tau), shaped (L, 2^J) or
    flat with known section size 2^J. eta_phat may be scalar or
    per-section. Under the binary approximation the rule reduces to a
    threshold on r; with or_approx=False the full posterior odds
    sum_{k>=1} p_k phi(r - k sqrt(t)) / (p_0 phi(r)) are used.
    """
    m = 1 << prior.J
    obs = np.asarray(obs, dtype=float)
    if obs.ndim == 1:
        obs = obs.reshape(-1, m)
    t = np.broadcast_to(np.atleast_1d(np.asarray(eta_phat, dtype=float)),
                        (obs.shape[0],))
    if np.any(t <= 0) or threshold <= 0:
        raise ValueError("eta_phat and threshold must be positive")
    log_thr = math.log(threshold)
    p = prior.probs
    with np.errstate(divide="ignore"):
        logp = np.log(p)
    lists = []
    for l in range(obs.shape[0]):
        st = math.sqrt(t[l])
        r = obs[l]
        if or_approx:
            # log odds = log((1-p0)/p0) + st*r - t/2 >= log threshold
            rstar = (log_thr - math.log1p(-p[0]) + math.log(p[0])
                     + t[l] / 2.0) / st
            active = np.nonzero(r >= rstar)[0]
        else:
            k = np.arange(1, len(p))
            e = logp[1:, None] + (st * k[:, None] * r[None, :]
                                  - t[l] * k[:, None] ** 2 / 2.0)
            odds = np.logaddexp.reduce(e, axis=0) - logp[0]
            active = np.nonzero(odds >= log_thr)[0]
        lists.append(sorted(int(i) for i in active))
    return lists


def topk_support(theta, Ka, delta, J):
    """Per-section indices of the Ka+Delta largest coefficients.

    Ties go to the lowest index; stable under any positive rescaling of
    a section. Lists come back sorted ascending.
    """
    m = 1 << J
    th = np.asarray(theta, dtype=float).reshape(-1, m)
    keep = min(Ka + delta, m)
    lists = []
    for row in th:
        order = np.argsort(-row, kind="stable")[:keep]
        lists.append(sorted(int(i) for i in order))
    return lists
