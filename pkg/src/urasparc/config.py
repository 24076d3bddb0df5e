"""System configuration, unit conventions and the per-component count prior.

Conventions used throughout the package:

* Noise is standard normal per real channel use (variance 1, i.e. N0 = 2).
  All powers are relative to unit noise, so SNR = P.
* `power_alloc` holds per-section symbol powers P_l with mean(P_l) = P.
  The amplitude-squared actually placed on a selected column is
  Phat_l = n * P_l / L, so that E||x||^2 = n * P.
* E_in = SNR / (2 R_in) is the energy per coded bit of the inner code,
  equivalently Phat = 2 * J * E_in under uniform allocation.
* Section indices and message indices are 0-based in [0, 2^J).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import gammaln


@dataclass(frozen=True)
class SystemConfig:
    """Static description of one unsourced-random-access system instance."""

    Ka: int            # active users
    J: int             # bits per section (2^J columns each)
    L: int             # sections
    n: int             # real channel uses
    B: int             # message bits carried by the outer code
    power_alloc: tuple # per-section symbol powers P_l, length L
    seed: int = 0

    def __post_init__(self):
        if min(self.Ka, self.J, self.L, self.n, self.B) < 1:
            raise ValueError("Ka, J, L, n, B must all be >= 1")
        pa = tuple(float(p) for p in self.power_alloc)
        if len(pa) != self.L:
            raise ValueError("power_alloc must have length L")
        if not all(math.isfinite(p) and p > 0 for p in pa):
            raise ValueError("per-section powers must be positive and finite")
        object.__setattr__(self, "power_alloc", pa)

    @classmethod
    def uniform(cls, Ka, J, L, n, B, P, seed=0):
        """Uniform power P on every section."""
        return cls(Ka=Ka, J=J, L=L, n=n, B=B, power_alloc=(float(P),) * L,
                   seed=seed)

    # Derived per-section amplitude-squared values.
    @property
    def phat(self):
        return np.array([self.n * p / self.L for p in self.power_alloc])

    @property
    def P(self):
        """Average symbol power (= SNR under unit noise)."""
        return float(np.mean(self.power_alloc))

    # JSON round trip with fixed field names; external tooling relies on them.
    def to_dict(self):
        return {"Ka": self.Ka, "J": self.J, "L": self.L, "n": self.n,
                "B": self.B, "powerAlloc": list(self.power_alloc),
                "seed": self.seed}

    @classmethod
    def from_dict(cls, d):
        return cls(Ka=int(d["Ka"]), J=int(d["J"]), L=int(d["L"]),
                   n=int(d["n"]), B=int(d["B"]),
                   power_alloc=tuple(float(p) for p in d["powerAlloc"]),
                   seed=int(d.get("seed", 0)))

    def to_json(self):
        return json.dumps(self.to_dict())

    @classmethod
    def from_json(cls, s):
        return cls.from_dict(json.loads(s))


@dataclass(frozen=True)
class DerivedParams:
    """Rates and energies implied by a SystemConfig."""

    R_in: float     # inner rate L*J/n
    R_out: float    # outer rate B/(L*J)
    beta: float     # column density L*2^J/n
    S_in: float     # inner sum rate Ka*R_in
    P: float        # average symbol power
    snr: float      # = P under unit noise
    E_in: float     # energy per inner coded bit, SNR/(2 R_in)
    ebn0: float     # energy per information bit, E_in/R_out
    mu: float       # per-user spectral efficiency B/n
    mu_total: float # Ka*B/n
    alpha: float    # sparsity exponent J/log2(Ka); inf for Ka = 1


def derive_params(cfg: SystemConfig) -> DerivedParams:
    R_in = cfg.L * cfg.J / cfg.n
    R_out = cfg.B / (cfg.L * cfg.J)
    beta = cfg.L * 2.0 ** cfg.J / cfg.n
    P = cfg.P
    E_in = P / (2.0 * R_in)
    alpha = cfg.J / math.log2(cfg.Ka) if cfg.Ka > 1 else math.inf
    d = DerivedParams(R_in=R_in, R_out=R_out, beta=beta, S_in=cfg.Ka * R_in,
                      P=P, snr=P, E_in=E_in, ebn0=E_in / R_out,
                      mu=cfg.B / cfg.n, mu_total=cfg.Ka * cfg.B / cfg.n,
                      alpha=alpha)
    for k, v in d.__dict__.items():
        if not (math.isfinite(v) and v > 0) and k != "alpha":
            raise ValueError(f"derived parameter {k} = {v} is not positive finite")
    return d


def power_for_ebn0(cfg: SystemConfig, ebn0_db):
    """Average symbol power P realizing a given Eb/N0 in dB.

    Eb/N0 = E_in/R_out = n*P/(2*B), hence P = 2*(B/n)*Eb/N0.
    """
    return 2.0 * cfg.B / cfg.n * 10.0 ** (ebn0_db / 10.0)


@dataclass(frozen=True)
class SectionPrior:
    """Truncated binomial prior on the per-component count s_i.

    With Ka users each picking one of 2^J columns uniformly, a fixed
    component is selected by k of them with probability
    C(Ka, k) 2^{-kJ} (1 - 2^{-J})^{Ka-k}. Probabilities are computed in
    the log domain and truncated at the smallest kmax whose tail mass is
    below `tol`, then renormalized over the kept range.
    """

    Ka: int
    J: int
    pk: tuple
    kmax: int
    tol: float = 1e-18

    @property
    def atoms(self):
        return np.arange(self.kmax + 1, dtype=float)

    @property
    def probs(self):
        return np.asarray(self.pk)

    @property
    def p0(self):
        return self.pk[0]

    @property
    def mean(self):
        return float(np.dot(self.atoms, self.probs))

    @property
    def second_moment(self):
        return float(np.dot(self.atoms ** 2, self.probs))

    @property
    def variance(self):
        return self.second_moment - self.mean ** 2


def build_section_prior(Ka, J, tol=1e-18) -> SectionPrior:
    if not 0.0 < tol <= 1e-6:
        raise ValueError("tol must be in (0, 1e-6]")
    q = math.log1p(-(2.0 ** -J))  # log(1 - 2^-J)
    k = np.arange(Ka + 1)
    logpk = (gammaln(Ka + 1) - gammaln(k + 1) - gammaln(Ka - k + 1)
             - k * J * math.log(2.0) + (Ka - k) * q)
    pk = np.exp(logpk)
    # smallest kmax with tail mass below tol; tail summed back-to-front
    tails = np.concatenate([np.cumsum(pk[::-1])[::-1][1:], [0.0]])
    kmax = int(np.argmax(tails < tol))
    kept = pk[:kmax + 1]
    kept = kept / kept.sum()
    return SectionPrior(Ka=Ka, J=J, pk=tuple(float(p) for p in kept),
                        kmax=kmax, tol=tol)


def or_prior(Ka, J):
    """Two-point support prior: P(s = 0) = (1 - 2^-J)^Ka, else s = 1.

    The workhorse approximation for sparse sections (Ka << 2^J): column
    multiplicities >= 2 are folded into the active atom.
    """
    p0 = math.exp(Ka * math.log1p(-(2.0 ** -J)))
    return np.array([0.0, 1.0]), np.array([p0, 1.0 - p0])


def orplus_prior(Ka, J):
    """Three-point prior {0, 1, 2}: doubly-and-more occupied columns pooled at 2."""
    full = build_section_prior(Ka, J)
    p0 = full.pk[0]
    p1 = full.pk[1] if full.kmax >= 1 else 0.0
    return np.array([0.0, 1.0, 2.0]), np.array([p0, p1, 1.0 - p0 - p1])
