"""Command-line front end.

Eight subcommands, one per experiment family: simulate, sweep, se-curve,
pa-optimize, tradeoff, tree-test, cover-bound, kl-check. Each reads its
parameters (plus an optional JSON experiment document) and writes CSV
and JSON artifacts into --out. Exit status is 0 only when the requested
run fully succeeded.
"""

from __future__ import annotations

import argparse
import json
import math
import os
import sys

import numpy as np

from .amp import write_trace
from .analysis import ConvergenceError, kl_mult_vs_product, \
    required_energy_curve
from .config import or_prior
from .decision import qfuncinv, tradeoff_curve, write_tradeoff_csv
from .harness import ExperimentSpec, ResultRow, SweepError, aggregate, \
    desk_default_spec, emit_report, run_batch, run_trial, se_vs_empirical, \
    sweep_ebn0, write_se_table
from .lp import LpInfeasible
from .powalloc import default_grid, find_p_alg, find_p_opt, materialize, \
    solve_pa_lp, verify_allocation, write_g_curve
from .tree import TreeCodebook, cover_decode_experiment, profile_for, \
    tree_decode, tree_encode


def _load_spec(args) -> ExperimentSpec:
    if getattr(args, "spec", None):
        with open(args.spec) as fh:
            spec = ExperimentSpec.from_dict(json.load(fh))
    else:
        spec = desk_default_spec()
    if getattr(args, "trials", None):
        from dataclasses import replace
        spec = replace(spec, trials=args.trials)
    return spec


def _outdir(args):
    os.makedirs(args.out, exist_ok=True)
    return args.out


def cmd_simulate(args):
    spec = _load_spec(args)
    out = _outdir(args)
    ebn0 = args.ebn0
    if args.trace:
        res0 = run_trial(spec, 0, ebn0_db=ebn0, collect_trace=True)
        write_trace(res0.trace, os.path.join(out, "trace.csv"))
    results = run_batch(spec, ebn0_db=ebn0) if args.batch else \
        [run_trial(spec, t, ebn0_db=ebn0) for t in range(spec.trials)]
    agg = aggregate(results, spec.cfg.Ka)
    rows = [ResultRow(Ka=spec.cfg.Ka, ebn0_db=ebn0, pe=agg.pe,
                      ci_low=agg.ci_low, ci_high=agg.ci_high,
                      trials=agg.trials)]
    if args.se_table:
        table, _ = se_vs_empirical(spec, iters=args.se_iters, ebn0_db=ebn0)
        write_se_table(table, os.path.join(out, "se_table.csv"))
    emit_report(spec, rows, out, extra={"mode": "simulate", "ebn0_db": ebn0,
                                        "failures": agg.failures,
                                        "falseAlarms": agg.false_alarms})
    print(f"Pe = {agg.pe:.4f} [{agg.ci_low:.4f}, {agg.ci_high:.4f}] "
          f"over {agg.trials} trials at {ebn0:g} dB "
          f"({agg.failures} failed decodes)")
    return 0


def cmd_sweep(args):
    spec = _load_spec(args)
    out = _outdir(args)
    res = sweep_ebn0(spec, lo_db=args.lo, hi_db=args.hi, tol_db=args.tol,
                     target=args.target)
    rows = [ResultRow(Ka=spec.cfg.Ka, ebn0_db=p.ebn0_db, pe=p.agg.pe,
                      ci_low=p.agg.ci_low, ci_high=p.agg.ci_high,
                      trials=p.agg.trials) for p in res.probes]
    emit_report(spec, rows, out, extra={
        "mode": "sweep", "bracket_db": [res.lo_db, res.hi_db],
        "targetPe": res.target_pe, "required_db": res.midpoint_db})
    print(f"required Eb/N0 in [{res.lo_db:.2f}, {res.hi_db:.2f}] dB "
          f"for Pe < {res.target_pe}")
    return 0


def cmd_se_curve(args):
    out = _outdir(args)
    s_vals = [float(v) for v in args.s_in.split(",")]
    rows = required_energy_curve(args.j, args.alpha, s_vals,
                                 decoder=args.decoder,
                                 prior_kind=args.prior)
    path = os.path.join(out, "threshold_curve.csv")
    with open(path, "w") as fh:
        fh.write("S_in,E_in_dB,regime\n")
        for s, e, regime in rows:
            fh.write(f"{s:.10g},{10.0 * math.log10(e):.10g},{regime}\n")
    print(f"wrote {len(rows)} points to {path}")
    return 0


def cmd_pa_optimize(args):
    out = _outdir(args)
    target = 10.0 ** (args.target_db / 10.0)
    p_opt = find_p_opt(args.ka, args.j, args.r_in, target, prior_kind=args.prior)
    p_alg = find_p_alg(args.ka, args.j, args.r_in, target, prior_kind=args.prior)
    grid = default_grid(p_opt, n_levels=args.levels,
                        grid_factor=args.grid_factor,
                        eta_points=args.eta_points, eps=args.eps,
                        delta=args.delta)
    sol = solve_pa_lp(args.ka, args.j, args.r_in, grid,
                      prior_kind=args.prior, p_alg=p_alg)
    powers = materialize(sol, args.sections)
    check = verify_allocation(args.ka, args.j, args.r_in, powers,
                              target_eta=1.0 - args.delta,
                              prior_kind=args.prior)
    write_g_curve(check, os.path.join(out, "g_curve.csv"))
    doc = {"pOpt": p_opt, "pAlg": p_alg, "solution": sol.to_dict(),
           "support": sol.support, "perSectionPowers": list(powers),
           "gainDb": 10.0 * math.log10(p_alg / sol.average_power),
           "etaReached": check.eta_star, "targetEta": check.target_eta,
           "passes": bool(check.reached)}
    with open(os.path.join(out, "allocation.json"), "w") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")
    print(f"P_opt = {p_opt:.4g}, P_alg = {p_alg:.4g}, "
          f"average = {sol.average_power:.4g} "
          f"({doc['gainDb']:.2f} dB below flat), "
          f"eta* = {check.eta_star:.4f}")
    return 0 if check.reached else 1


def cmd_tradeoff(args):
    out = _outdir(args)
    t = 10.0 ** (args.strength_db / 10.0)
    curve = tradeoff_curve(t, points=args.points)
    write_tradeoff_csv(curve, os.path.join(out, "tradeoff.csv"))
    if args.mc_samples:
        p0 = or_prior(args.ka, args.j)[1][0]
        rng = np.random.Generator(np.random.PCG64(
            np.random.SeedSequence(args.seed)))
        ns = args.mc_samples
        s = rng.random(ns) >= p0
        r = math.sqrt(t) * s + rng.standard_normal(ns)
        path = os.path.join(out, "tradeoff_mc.csv")
        with open(path, "w") as fh:
            fh.write("p_md,p_fa,p_md_mc,p_fa_mc,samples\n")
            p_md, p_fa, _ = curve
            step = max(1, len(p_md) // 12)
            for i in range(0, len(p_md), step):
                rstar = math.sqrt(t) - qfuncinv(p_md[i])
                md = float(((r <= rstar) & s).sum() / max(1, s.sum()))
                fa = float(((r > rstar) & ~s).sum() / max(1, (~s).sum()))
                fh.write(f"{p_md[i]:.8g},{p_fa[i]:.8g},{md:.8g},{fa:.8g},"
                         f"{ns}\n")
    print(f"wrote tradeoff curve at strength {args.strength_db:g} dB")
    return 0


def cmd_tree_test(args):
    out = _outdir(args)
    profile = profile_for(args.b, args.l, args.j)
    perfect = 0
    rows = []
    for trial in range(args.trials):
        tcb = TreeCodebook(profile, parity_seed=args.seed * 10 ** 6 + trial)
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(
            entropy=args.seed, spawn_key=(trial,))))
        msgs = rng.integers(0, 2, size=(args.ka, profile.B), dtype=np.uint8)
        sent = {m.tobytes() for m in msgs}
        while len(sent) < args.ka:
            msgs = rng.integers(0, 2, size=(args.ka, profile.B),
                                dtype=np.uint8)
            sent = {m.tobytes() for m in msgs}
        lists = [set() for _ in range(args.l)]
        for m in msgs:
            for l, idx in enumerate(tree_encode(tcb, m)):
                lists[l].add(idx)
        decoded = tree_decode(tcb, [sorted(s) for s in lists], args.ka)
        got = {d.tobytes() for d in decoded}
        ok = got == sent
        perfect += ok
        rows.append((trial, len(sent & got), len(got - sent), int(ok)))
    path = os.path.join(out, "tree_trials.csv")
    with open(path, "w") as fh:
        fh.write("trial,recovered,false_positives,perfect\n")
        for row in rows:
            fh.write(",".join(str(v) for v in row) + "\n")
    frac = perfect / args.trials
    with open(os.path.join(out, "tree_summary.json"), "w") as fh:
        json.dump({"Ka": args.ka, "J": args.j, "L": args.l, "B": args.b,
                   "R_out": profile.R_out, "trials": args.trials,
                   "perfectFraction": frac,
                   "parityBits": list(profile.parity_bits)}, fh, indent=2)
        fh.write("\n")
    print(f"perfect decode in {perfect}/{args.trials} trials "
          f"({100.0 * frac:.1f}%)")
    return 0


def cmd_cover_bound(args):
    out = _outdir(args)
    rep = cover_decode_experiment(args.l, args.j, args.ka, args.r_out,
                                  args.trials, seed=args.seed)
    within = rep.p_false_cover <= rep.bound + 3.0 * rep.stderr
    with open(os.path.join(out, "cover_bound.json"), "w") as fh:
        json.dump({"L": args.l, "J": args.j, "Ka": args.ka,
                   "R_out": args.r_out, "trials": rep.trials,
                   "pFalseCover": rep.p_false_cover, "stderr": rep.stderr,
                   "bound": rep.bound,
                   "meanFalseCovers": rep.mean_false_covers,
                   "withinBound": bool(within)}, fh, indent=2)
        fh.write("\n")
    print(f"P(false cover) = {rep.p_false_cover:.5f} (+/- {rep.stderr:.5f})"
          f" vs bound {rep.bound:.5f}")
    return 0 if within else 1


def cmd_kl_check(args):
    out = _outdir(args)
    exact, asym = kl_mult_vs_product(args.ka, args.j)
    with open(os.path.join(out, "kl_check.json"), "w") as fh:
        json.dump({"Ka": args.ka, "J": args.j, "exactBits": exact,
                   "asymptoticBits": asym}, fh, indent=2)
        fh.write("\n")
    msg = f"KL(section || product) ~ {asym:.4f} bits"
    if exact is not None:
        msg += f" (exact {exact:.4f})"
    print(msg)
    return 0


def build_parser():
    p = argparse.ArgumentParser(
        prog="urasparc",
        description="Concatenated sparse-superposition random-access "
                    "experiments")
    sub = p.add_subparsers(dest="cmd", required=True)

    def add(name, fn, doc):
        sp = sub.add_parser(name, help=doc)
        sp.set_defaults(func=fn)
        sp.add_argument("--out", default=".", help="output directory")
        return sp

    sp = add("simulate", cmd_simulate, "Monte-Carlo trials at one Eb/N0")
    sp.add_argument("--spec", help="JSON experiment document")
    sp.add_argument("--ebn0", type=float, default=5.0)
    sp.add_argument("--trials", type=int)
    sp.add_argument("--batch", action=argparse.BooleanOptionalAction,
                    default=True)
    sp.add_argument("--trace", action="store_true",
                    help="write trial-0 AMP trace")
    sp.add_argument("--se-table", action="store_true",
                    help="write the SE-vs-empirical table")
    sp.add_argument("--se-iters", type=int, default=15)

    sp = add("sweep", cmd_sweep, "bisect Eb/N0 to the target error rate")
    sp.add_argument("--spec")
    sp.add_argument("--trials", type=int)
    sp.add_argument("--lo", type=float)
    sp.add_argument("--hi", type=float)
    sp.add_argument("--target", type=float)
    sp.add_argument("--tol", type=float, default=0.1)

    sp = add("se-curve", cmd_se_curve, "required-energy threshold curve")
    sp.add_argument("--j", type=int, default=20)
    sp.add_argument("--alpha", type=float, default=2.0)
    sp.add_argument("--s-in", default="0.6,0.8,1.0,1.2")
    sp.add_argument("--decoder", choices=("alg", "opt"), default="alg")
    sp.add_argument("--prior", default="auto")

    sp = add("pa-optimize", cmd_pa_optimize, "power-allocation LP")
    sp.add_argument("--ka", type=int, default=300)
    sp.add_argument("--j", type=int, default=20)
    sp.add_argument("--r-in", type=float, default=0.0061)
    sp.add_argument("--target-db", type=float, default=15.0)
    sp.add_argument("--eps", type=float, default=0.01)
    sp.add_argument("--delta", type=float, default=0.1)
    sp.add_argument("--levels", type=int, default=33)
    sp.add_argument("--grid-factor", type=float, default=5.0)
    sp.add_argument("--eta-points", type=int, default=200)
    sp.add_argument("--sections", type=int, default=8)
    sp.add_argument("--prior", default="auto")

    sp = add("tradeoff", cmd_tradeoff, "missed-detection/false-alarm curve")
    sp.add_argument("--strength-db", type=float, default=15.0)
    sp.add_argument("--points", type=int, default=101)
    sp.add_argument("--mc-samples", type=int, default=0)
    sp.add_argument("--ka", type=int, default=300)
    sp.add_argument("--j", type=int, default=12)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("tree-test", cmd_tree_test, "noiseless outer-code experiment")
    sp.add_argument("--ka", type=int, default=25)
    sp.add_argument("--j", type=int, default=12)
    sp.add_argument("--l", type=int, default=8)
    sp.add_argument("--b", type=int, default=47)
    sp.add_argument("--trials", type=int, default=500)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("cover-bound", cmd_cover_bound, "random cover-decoder check")
    sp.add_argument("--j", type=int, default=10)
    sp.add_argument("--ka", type=int, default=8)
    sp.add_argument("--l", type=int, default=4)
    sp.add_argument("--r-out", type=float, default=0.5)
    sp.add_argument("--trials", type=int, default=1500)
    sp.add_argument("--seed", type=int, default=0)

    sp = add("kl-check", cmd_kl_check, "section-law vs product diagnostic")
    sp.add_argument("--ka", type=int, default=25)
    sp.add_argument("--j", type=int, default=12)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (SweepError, LpInfeasible, ConvergenceError, ValueError,
            OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
