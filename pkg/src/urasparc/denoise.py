"""Componentwise posterior-mean denoisers for the AMP iteration.

Every denoiser is the posterior mean of an integer occupancy count s under
a discrete prior, observed through x = sqrt(Phat) s + tau w. The variants
differ only in the prior placed on s:

* 'full'     -- truncated binomial prior (the exact componentwise PME)
* 'or'       -- two-point {0, 1} prior (multiplicities folded into 1)
* 'orplus'   -- three-point {0, 1, 2} prior
* 'pa-full'  -- 'full' with per-section amplitudes from a power allocation

Weights are always handled in the log domain; contributions whose
log-weight trails the per-component maximum by more than DROP_LOG are
dropped before exponentiation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .config import SectionPrior, or_prior, orplus_prior

DROP_LOG = 45.0
_CHUNK = 1 << 21


def posterior_stats(atoms, log_probs, shifts, scale2, x):
    """First and second posterior moments of a discrete atom under a
    Gaussian observation.

    The observation model is x = shift_k + sqrt(scale2) w for atom k,
    where shifts has shape (n_atoms,) + broadcastable-to-x. Returns
    (E[atom|x], E[atom^2|x]) with the shape of x.
    """
    x = np.asarray(x, dtype=float)
    e = log_probs.reshape((-1,) + (1,) * x.ndim) \
        - (x[None, ...] - shifts) ** 2 / (2.0 * scale2)
    m = e.max(axis=0)
    d = e - m
    w = np.where(d > -DROP_LOG, np.exp(d), 0.0)
    z = w.sum(axis=0)
    a = atoms.reshape((-1,) + (1,) * x.ndim)
    mean = (w * a).sum(axis=0) / z
    second = (w * a * a).sum(axis=0) / z
    return mean, second


@dataclass(eq=False)
class DenoiserSpec:
    """Prior + per-section amplitudes defining one componentwise denoiser."""

    kind: str                 # 'full' | 'or' | 'orplus' | 'pa-full'
    prior: SectionPrior
    phat: np.ndarray          # per-section amplitude-squared, length L
    atoms: np.ndarray = field(init=False)
    probs: np.ndarray = field(init=False)

    def __post_init__(self):
        self.phat = np.atleast_1d(np.asarray(self.phat, dtype=float))
        if self.kind in ("full", "pa-full"):
            self.atoms = self.prior.atoms
            self.probs = self.prior.probs
        elif self.kind == "or":
            if self.prior.kmax < 1:
                raise ValueError("OR denoiser needs kmax >= 1")
            self.atoms, self.probs = or_prior(self.prior.Ka, self.prior.J)
        elif self.kind == "orplus":
            if self.prior.kmax < 2:
                raise ValueError("OR+ denoiser needs kmax >= 2")
            self.atoms, self.probs = orplus_prior(self.prior.Ka, self.prior.J)
        else:
            raise ValueError(f"unknown denoiser kind {self.kind!r}")
        with np.errstate(divide="ignore"):
            self.log_probs = np.log(self.probs)
        self.kmax = int(self.atoms[-1])

    @property
    def L(self):
        return len(self.phat)


def denoise(spec: DenoiserSpec, x, tau2):
    """Posterior mean estimate of theta and its derivative in x.

    x is the effective observation on the theta scale, shaped (L*2^J,)
    (or (L, 2^J), or scalar with L = 1). The derivative is the closed
    form Phat/tau2 * posterior variance of the count.
    """
    x = np.asarray(x, dtype=float)
    scalar = x.ndim == 0
    flat = x.ndim == 1
    L = spec.L
    if scalar:
        xs = x.reshape(1, 1)
    elif flat:
        if x.size % L:
            raise ValueError("input length not divisible by section count")
        xs = x.reshape(L, -1)
    else:
        xs = x
    if not np.all(np.isfinite(xs)):
        raise FloatingPointError("non-finite effective observation")

    sqp = np.sqrt(spec.phat)[:, None]
    val = np.empty_like(xs)
    der = np.empty_like(xs)
    csize = max(1, _CHUNK // max(1, L))
    for lo in range(0, xs.shape[1], csize):
        sl = xs[:, lo:lo + csize]
        shifts = spec.atoms.reshape(-1, 1, 1) * sqp[None, :, :]
        mean, second = posterior_stats(spec.atoms, spec.log_probs, shifts,
                                       tau2, sl)
        val[:, lo:lo + csize] = sqp * mean
        # cancellation can push the computed variance a hair below zero
        var = np.maximum(second - mean ** 2, 0.0)
        der[:, lo:lo + csize] = spec.phat[:, None] / tau2 * var
    if scalar:
        return val[0, 0], der[0, 0]
    if flat:
        return val.ravel(), der.ravel()
    return val, der
