"""Monte-Carlo harness: end-to-end trials, Eb/N0 sweeps and reporting.

A trial is a pure function of (ExperimentSpec, trial index): message,
noise and parity randomness come from per-purpose seed streams spawned
with the trial index, so any subset of trials is reproducible in
isolation and parallel execution aggregates to exactly the serial
result. Two execution paths produce trials: a per-trial path (one AMP
run at a time) and a lockstep batched path that shares each matrix
product across many trials; the batched path reassociates float sums,
so its results are a declared execution mode, not a bit-identical twin
of the per-trial path.
"""

from __future__ import annotations

import csv
import datetime
import json
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from types import SimpleNamespace

import numpy as np

from .amp import AmpDivergence, amp_run
from .analysis import se_trajectory
from .codebook import GaussianCodebook, superpose, transmit
from .config import SystemConfig, build_section_prior, derive_params, \
    power_for_ebn0
from .decision import lrt_support, qfuncinv, topk_support
from .denoise import DenoiserSpec, denoise
from .tree import ParityProfile, TreeCodebook, TreeDecodeOverload, \
    profile_for, tree_decode, tree_encode


class SweepError(RuntimeError):
    """Target error rate not bracketed by the given Eb/N0 range."""


# Tail-weighted parity for the desk configuration: with 75-entry noisy
# candidate lists, light early parity keeps the survivor set small while
# the heavy late sections kill wandering paths before the final checksum
# (uniform parity here leaves an order-of-magnitude more false paths).
DESK_PROFILE = ParityProfile(J=12, info_bits=(12, 6, 6, 6, 5, 4, 3, 0),
                             parity_bits=(0, 6, 6, 6, 7, 8, 9, 12))


@dataclass(frozen=True)
class ExperimentSpec:
    cfg: SystemConfig
    codebook_seed: int = 1
    noise_seed: int = 2
    message_seed: int = 3
    parity_seed: int = 4
    denoiser: str = "full"
    decision: dict = field(default_factory=lambda: {"rule": "topk",
                                                    "delta": 50})
    parity_profile: ParityProfile = None
    trials: int = 100
    target_pe: float = 0.05
    ebn0_range: tuple = (2.0, 9.0)
    amp_iters: int = 30
    amp_stop_tol: float = 1e-6
    path_budget: int = 10 ** 6
    dtype: str = "float32"
    noiseless: bool = False

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        if self.dtype not in ("float32", "float64"):
            raise ValueError("dtype must be float32 or float64")

    @property
    def profile(self):
        if self.parity_profile is not None:
            return self.parity_profile
        return profile_for(self.cfg.B, self.cfg.L, self.cfg.J)

    def np_dtype(self):
        return np.float32 if self.dtype == "float32" else np.float64

    def to_dict(self):
        prof = self.profile
        return {"cfg": self.cfg.to_dict(),
                "codebookSeed": self.codebook_seed,
                "noiseSeed": self.noise_seed,
                "messageSeed": self.message_seed,
                "paritySeed": self.parity_seed,
                "denoiser": self.denoiser,
                "decision": dict(self.decision),
                "treeProfile": {"J": prof.J,
                                "infoBits": list(prof.info_bits),
                                "parityBits": list(prof.parity_bits)},
                "trials": self.trials,
                "targetPe": self.target_pe,
                "ebn0Range": list(self.ebn0_range),
                "ampIters": self.amp_iters,
                "ampStopTol": self.amp_stop_tol,
                "pathBudget": self.path_budget,
                "dtype": self.dtype,
                "noiseless": self.noiseless}

    @classmethod
    def from_dict(cls, d):
        cfg = SystemConfig.from_dict(d["cfg"])
        prof = None
        if d.get("treeProfile") is not None:
            tp = d["treeProfile"]
            prof = ParityProfile(J=int(tp.get("J", cfg.J)),
                                 info_bits=tuple(tp["infoBits"]),
                                 parity_bits=tuple(tp["parityBits"]))
        return cls(cfg=cfg,
                   codebook_seed=int(d.get("codebookSeed", 1)),
                   noise_seed=int(d.get("noiseSeed", 2)),
                   message_seed=int(d.get("messageSeed", 3)),
                   parity_seed=int(d.get("paritySeed", 4)),
                   denoiser=d.get("denoiser", "full"),
                   decision=dict(d.get("decision",
                                       {"rule": "topk", "delta": 50})),
                   parity_profile=prof,
                   trials=int(d.get("trials", 100)),
                   target_pe=float(d.get("targetPe", 0.05)),
                   ebn0_range=tuple(d.get("ebn0Range", (2.0, 9.0))),
                   amp_iters=int(d.get("ampIters", 30)),
                   amp_stop_tol=float(d.get("ampStopTol", 1e-6)),
                   path_budget=int(d.get("pathBudget", 10 ** 6)),
                   dtype=d.get("dtype", "float32"),
                   noiseless=bool(d.get("noiseless", False)))


def desk_default_spec(Ka=25, trials=100, seed_base=0, **overrides):
    """The minutes-not-hours reference setup: J=12, L=8, n=3200, B=42.

    The configured power corresponds to Eb/N0 = 5 dB; sweep and probe
    entry points rescale it per probe.
    """
    p_5db = 2.0 * 42 / 3200 * 10.0 ** 0.5
    cfg = SystemConfig.uniform(Ka=Ka, J=12, L=8, n=3200, B=42, P=p_5db)
    spec = ExperimentSpec(cfg=cfg, codebook_seed=seed_base + 1,
                          noise_seed=seed_base + 2,
                          message_seed=seed_base + 3,
                          parity_seed=seed_base + 4,
                          parity_profile=DESK_PROFILE, trials=trials)
    return replace(spec, **overrides) if overrides else spec


@dataclass
class TrialResult:
    trial: int
    missed: int
    false_alarms: int
    per_user_error: float
    failure: str = None            # None | 'amp-divergence' | 'tree-overload'
    transmitted: tuple = None      # message bit tuples when keep_sets
    decoded: tuple = None
    trace: list = None             # (iter, tau2, mse) rows when collected


def _scaled_cfg(spec: ExperimentSpec, ebn0_db):
    if ebn0_db is None:
        return spec.cfg
    cfg = spec.cfg
    scale = power_for_ebn0(cfg, ebn0_db) / cfg.P
    return replace(cfg, power_alloc=tuple(p * scale for p in cfg.power_alloc))


def _draw_messages(spec: ExperimentSpec, trial_index, Ka, B):
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
        entropy=spec.message_seed, spawn_key=(trial_index,))))
    msgs = rng.integers(0, 2, size=(Ka, B), dtype=np.uint8)
    while True:
        seen, dup = set(), []
        for i in range(Ka):
            key = msgs[i].tobytes()
            if key in seen:
                dup.append(i)
            else:
                seen.add(key)
        if not dup:
            return msgs
        msgs[dup] = rng.integers(0, 2, size=(len(dup), B), dtype=np.uint8)


def make_codebook(spec: ExperimentSpec):
    return GaussianCodebook(spec.codebook_seed, spec.cfg.n, spec.cfg.L,
                            spec.cfg.J, dtype=spec.np_dtype())


def make_tree(spec: ExperimentSpec):
    return TreeCodebook(spec.profile, parity_seed=spec.parity_seed)


def _decide(spec, cfg, cb, state, prior):
    rule = spec.decision.get("rule", "topk")
    if rule == "topk":
        delta = min(int(spec.decision.get("delta", 50)),
                    2 ** cfg.J - cfg.Ka)
        return topk_support(state.theta, cfg.Ka, delta, cfg.J)
    if rule == "lrt":
        eff = np.asarray(cb.rmatvec(state.residual),
                         dtype=np.float64) + state.theta
        return lrt_support(eff / math.sqrt(state.tau2), prior,
                           cfg.phat / state.tau2,
                           float(spec.decision.get("threshold", 1.0)))
    raise ValueError(f"unknown decision rule {rule!r}")


def _score(trial_index, sent_msgs, decoded, Ka, keep_sets, trace=None):
    sent = {tuple(int(b) for b in m) for m in sent_msgs}
    got = {tuple(int(b) for b in m) for m in decoded}
    missed = len(sent - got)
    false = len(got - sent)
    return TrialResult(
        trial=trial_index, missed=missed, false_alarms=false,
        per_user_error=missed / Ka,
        transmitted=tuple(sorted(sent)) if keep_sets else None,
        decoded=tuple(sorted(got)) if keep_sets else None, trace=trace)


def _failed(trial_index, Ka, label, keep_sets, sent_msgs=None):
    sent = None
    if keep_sets and sent_msgs is not None:
        sent = tuple(sorted(tuple(int(b) for b in m) for m in sent_msgs))
    return TrialResult(trial=trial_index, missed=Ka, false_alarms=0,
                       per_user_error=1.0, failure=label, transmitted=sent,
                       decoded=() if keep_sets else None)


def run_trial(spec: ExperimentSpec, trial_index, ebn0_db=None, cb=None,
              tcb=None, collect_trace=False, keep_sets=False) -> TrialResult:
    """Encode, transmit, AMP-decode, hard-decide and tree-decode one trial."""
    cfg = _scaled_cfg(spec, ebn0_db)
    cb = cb if cb is not None else make_codebook(spec)
    tcb = tcb if tcb is not None else make_tree(spec)
    msgs = _draw_messages(spec, trial_index, cfg.Ka, cfg.B)
    indices = [tree_encode(tcb, m) for m in msgs]
    sig = superpose(indices, cfg.phat, cfg.L, cfg.J)
    y = transmit(cb, sig, noise_seed=[spec.noise_seed, trial_index],
                 noiseless=spec.noiseless)
    prior = build_section_prior(cfg.Ka, cfg.J)
    dspec = DenoiserSpec(kind=spec.denoiser, prior=prior, phat=cfg.phat)
    try:
        state, trace = amp_run(cb, y, dspec, Tmax=spec.amp_iters,
                               stop_tol=spec.amp_stop_tol,
                               truth=sig.theta if collect_trace else None)
        lists = _decide(spec, cfg, cb, state, prior)
        decoded = tree_decode(tcb, lists, cfg.Ka,
                              path_budget=spec.path_budget)
    except AmpDivergence:
        return _failed(trial_index, cfg.Ka, "amp-divergence", keep_sets, msgs)
    except TreeDecodeOverload:
        return _failed(trial_index, cfg.Ka, "tree-overload", keep_sets, msgs)
    return _score(trial_index, msgs, decoded, cfg.Ka, keep_sets,
                  trace if collect_trace else None)


def run_many(spec: ExperimentSpec, ebn0_db=None, trials=None, workers=0,
             keep_sets=False):
    """Per-trial path over trials 0..trials-1; workers > 1 uses threads
    (the per-trial computation is identical, so aggregates match serial
    execution exactly)."""
    trials = spec.trials if trials is None else trials
    cb = make_codebook(spec)
    if cb._dense_ok():
        cb.dense()  # materialize once, before any thread fan-out
    tcb = make_tree(spec)
    idx = range(trials)
    if workers and workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(
                lambda t: run_trial(spec, t, ebn0_db, cb, tcb,
                                    keep_sets=keep_sets), idx))
    return [run_trial(spec, t, ebn0_db, cb, tcb, keep_sets=keep_sets)
            for t in idx]


def run_batch(spec: ExperimentSpec, ebn0_db=None, trials=None, cb=None,
              tcb=None, collect_trace=False, keep_sets=False,
              stop_tol=None):
    """Lockstep batched path: one AMP recursion drives all trials at once,
    sharing each dictionary product as a single matrix multiply. Trials
    whose tau^2 has settled are frozen; a diverging trial is frozen as a
    failure. Returns the same TrialResult list as the per-trial path up
    to float reassociation."""
    trials = spec.trials if trials is None else trials
    stop_tol = spec.amp_stop_tol if stop_tol is None else stop_tol
    cfg = _scaled_cfg(spec, ebn0_db)
    cb = cb if cb is not None else make_codebook(spec)
    tcb = tcb if tcb is not None else make_tree(spec)
    A = cb.dense()               # (cols, n), columns as rows
    fdt = cb.dtype
    cols, n = A.shape
    prior = build_section_prior(cfg.Ka, cfg.J)
    dspec = DenoiserSpec(kind=spec.denoiser, prior=prior, phat=cfg.phat)

    all_msgs = []
    Theta0 = np.empty((cols, trials))
    Y = np.empty((n, trials))
    for t in range(trials):
        msgs = _draw_messages(spec, t, cfg.Ka, cfg.B)
        all_msgs.append(msgs)
        sig = superpose([tree_encode(tcb, m) for m in msgs],
                        cfg.phat, cfg.L, cfg.J)
        Theta0[:, t] = sig.theta
        Y[:, t] = transmit(cb, sig, noise_seed=[spec.noise_seed, t],
                           noiseless=spec.noiseless)

    Theta = np.zeros((cols, trials))
    Z = Y.copy()
    tau2 = (Z * Z).sum(axis=0) / n
    cap = 10.0 * tau2
    beta = cols / n
    failed = np.zeros(trials, dtype=bool)
    active = np.ones(trials, dtype=bool)
    tau2_hist = [tau2.copy()]
    mse_hist = [((Theta - Theta0) ** 2).sum(axis=0) / cols] \
        if collect_trace else None

    for _ in range(spec.amp_iters):
        if not active.any():
            break
        ai = np.nonzero(active)[0]
        Eff = (A @ Z[:, ai].astype(fdt, copy=False)).astype(np.float64)
        Eff += Theta[:, ai]
        ons = np.empty(ai.size)
        for k, t in enumerate(ai):
            th, der = denoise(dspec, Eff[:, k], tau2[t])
            Theta[:, t] = th
            ons[k] = float(np.mean(der))
        Znew = Y[:, ai] \
            - (A.T @ Theta[:, ai].astype(fdt, copy=False)).astype(np.float64)
        Znew += Z[:, ai] * (beta * ons)[None, :]
        t2 = (Znew * Znew).sum(axis=0) / n
        Z[:, ai] = Znew
        prev = tau2[ai].copy()
        tau2[ai] = t2
        died = t2 > cap[ai]
        failed[ai[died]] = True
        active[ai[died]] = False
        settled = np.abs(t2 - prev) < stop_tol * prev
        active[ai[settled & ~died]] = False
        if collect_trace:
            tau2_hist.append(tau2.copy())
            mse_hist.append(((Theta - Theta0) ** 2).sum(axis=0) / cols)

    results = []
    for t in range(trials):
        if failed[t]:
            results.append(_failed(t, cfg.Ka, "amp-divergence", keep_sets,
                                   all_msgs[t]))
            continue
        state = SimpleNamespace(theta=Theta[:, t], residual=Z[:, t],
                                tau2=float(tau2[t]))
        try:
            lists = _decide(spec, cfg, cb, state, prior)
            decoded = tree_decode(tcb, lists, cfg.Ka,
                                  path_budget=spec.path_budget)
        except TreeDecodeOverload:
            results.append(_failed(t, cfg.Ka, "tree-overload", keep_sets,
                                   all_msgs[t]))
            continue
        results.append(_score(t, all_msgs[t], decoded, cfg.Ka, keep_sets))
    if collect_trace:
        return results, np.array(tau2_hist), np.array(mse_hist)
    return results


# ---------------------------------------------------------------------------
# Aggregation and sweeps
# ---------------------------------------------------------------------------

def wilson_interval(k, n, conf=0.95):
    """Wilson score interval for a binomial proportion."""
    if n <= 0:
        raise ValueError("need n > 0")
    z = qfuncinv((1.0 - conf) / 2.0)
    p = k / n
    denom = 1.0 + z * z / n
    center = (p + z * z / (2.0 * n)) / denom
    half = z / denom * math.sqrt(p * (1.0 - p) / n + z * z / (4.0 * n * n))
    return max(0.0, center - half), min(1.0, center + half)


@dataclass(frozen=True)
class Aggregate:
    trials: int
    missed: int
    false_alarms: int
    failures: int
    pe: float
    ci_low: float
    ci_high: float


def aggregate(results, Ka) -> Aggregate:
    """Pool missed counts over trials; Wilson interval on the pooled
    per-user error (user outcomes within a trial are correlated, so the
    interval is nominal, which is how it is reported)."""
    miss = sum(r.missed for r in results)
    slots = Ka * len(results)
    lo, hi = wilson_interval(miss, slots)
    return Aggregate(trials=len(results), missed=miss,
                     false_alarms=sum(r.false_alarms for r in results),
                     failures=sum(1 for r in results if r.failure),
                     pe=miss / slots, ci_low=lo, ci_high=hi)


@dataclass
class SweepProbe:
    ebn0_db: float
    agg: Aggregate


@dataclass
class SweepResult:
    lo_db: float
    hi_db: float
    target_pe: float
    pe_lo: Aggregate
    pe_hi: Aggregate
    probes: list

    @property
    def midpoint_db(self):
        return 0.5 * (self.lo_db + self.hi_db)


def sweep_ebn0(spec: ExperimentSpec, lo_db=None, hi_db=None, trials=None,
               target=None, tol_db=0.1, batch=True) -> SweepResult:
    """Bisect Eb/N0 until the bracket around the target error rate is at
    most tol_db wide. Every probe runs the full trial count. Raises
    SweepError when [lo, hi] does not bracket the target."""
    lo = spec.ebn0_range[0] if lo_db is None else lo_db
    hi = spec.ebn0_range[1] if hi_db is None else hi_db
    target = spec.target_pe if target is None else target
    trials = spec.trials if trials is None else trials
    cb = make_codebook(spec)
    tcb = make_tree(spec)
    probes = []

    def probe(db):
        if batch:
            res = run_batch(spec, ebn0_db=db, trials=trials, cb=cb, tcb=tcb)
        else:
            res = [run_trial(spec, t, db, cb, tcb) for t in range(trials)]
        agg = aggregate(res, spec.cfg.Ka)
        probes.append(SweepProbe(ebn0_db=db, agg=agg))
        return agg

    agg_lo, agg_hi = probe(lo), probe(hi)
    if agg_lo.pe <= target or agg_hi.pe > target:
        raise SweepError(
            f"target {target} not bracketed: Pe({lo} dB) = {agg_lo.pe:.4f}, "
            f"Pe({hi} dB) = {agg_hi.pe:.4f}")
    while hi - lo > tol_db:
        mid = 0.5 * (lo + hi)
        if probe(mid).pe > target:
            lo, agg_lo = mid, probes[-1].agg
        else:
            hi, agg_hi = mid, probes[-1].agg
    return SweepResult(lo_db=lo, hi_db=hi, target_pe=target,
                       pe_lo=agg_lo, pe_hi=agg_hi, probes=probes)


def se_vs_empirical(spec: ExperimentSpec, iters=15, trials=None,
                    ebn0_db=None):
    """Per-iteration (iter, tau2_empirical, tau2_se) table.

    Empirical tau_t^2 averages ||z_t||^2/n over trials with no early
    stopping; the prediction runs the deterministic recursion with the
    same denoiser prior. Also returns the matching per-iteration
    empirical mean MSE for reference.
    """
    trials = spec.trials if trials is None else trials
    run = replace(spec, amp_iters=iters)
    _, tau2_hist, mse_hist = run_batch(run, ebn0_db=ebn0_db, trials=trials,
                                       collect_trace=True, stop_tol=0.0)
    cfg = _scaled_cfg(spec, ebn0_db)
    prior = build_section_prior(cfg.Ka, cfg.J)
    se = se_trajectory(prior, cfg.phat, derive_params(cfg).beta, iters,
                       denoiser_kind=spec.denoiser)
    rows = [(it, float(tau2_hist[it].mean()), float(se[it]))
            for it in range(iters + 1)]
    return rows, mse_hist.mean(axis=1)


def write_se_table(rows, path):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["iter", "tau2_empirical", "tau2_se"])
        for it, emp, se in rows:
            w.writerow([it, f"{emp:.12g}", f"{se:.12g}"])


# ---------------------------------------------------------------------------
# Reporting
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ResultRow:
    Ka: int
    ebn0_db: float
    pe: float
    ci_low: float
    ci_high: float
    trials: int


def _version():
    try:
        from importlib.metadata import version
        return version("urasparc")
    except Exception:
        return "unknown"


def emit_report(spec: ExperimentSpec, rows, outdir, extra=None):
    """Write results.csv (deterministic bytes) and manifest.json (seeds,
    config, version, timestamp) into outdir; returns both paths."""
    os.makedirs(outdir, exist_ok=True)
    csv_path = os.path.join(outdir, "results.csv")
    with open(csv_path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["Ka", "EbN0_dB", "Pe", "CI_low", "CI_high", "trials"])
        for r in rows:
            w.writerow([r.Ka, f"{r.ebn0_db:.6g}", f"{r.pe:.8g}",
                        f"{r.ci_low:.8g}", f"{r.ci_high:.8g}", r.trials])
    manifest = {"spec": spec.to_dict(), "version": _version(),
                "timestamp": datetime.datetime.now(
                    datetime.timezone.utc).isoformat()}
    if extra:
        manifest["extra"] = extra
    man_path = os.path.join(outdir, "manifest.json")
    with open(man_path, "w") as fh:
        json.dump(manifest, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return csv_path, man_path


def load_manifest_spec(path) -> ExperimentSpec:
    with open(path) as fh:
        manifest = json.load(fh)
    return ExperimentSpec.from_dict(manifest["spec"])
