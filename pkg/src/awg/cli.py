"""Command line entry point: ``awg assemble | solve | sweep | table``."""
from __future__ import annotations

import argparse
import os
import sys

from . import experiment as ex


def _load(args):
    if args.config:
        return ex.ExperimentConfig.from_ini(args.config)
    return ex.builtin(args.builtin)


def cmd_assemble(args):
    cfg = _load(args)
    problem = ex.build_problem(cfg)
    paths = ex.export_problem(problem, args.out, args.stem)
    for k, p in paths.items():
        print(f"{k:10s} {p}")
    print(f"n = {problem.n}, N = {problem.partition.N}")
    return 0


def cmd_solve(args):
    cfg = _load(args)
    res = ex.run(cfg, dense_verify=args.dense_verify, dump_spectra=args.dump_spectra,
                 out_dir=args.out)
    print(res.row.fmt())
    dv = res.report.get("dense_verify")
    if dv:
        print("dense check:", dv)
    return 0 if res.solve.converged else 1


def cmd_sweep(args):
    cfg = _load(args)
    values = ex.parse_axis_values(args.axis, args.values) if args.values else []
    cache = ex.RunCache()
    rows = []
    for v in values:
        res = ex.run(ex.apply_axis(cfg, args.axis, v), dense_verify=args.dense_verify,
                     dump_spectra=args.dump_spectra, cache=cache,
                     out_dir=os.path.join(args.out, "runs") if args.out else None)
        rows.append(res.row)
        print(res.row.fmt(), flush=True)
    if args.out:
        os.makedirs(args.out, exist_ok=True)
        ex.write_rows(os.path.join(args.out, f"sweep_{args.axis}.csv"), rows)
    return 0


def cmd_table(args):
    k = args.number
    print(f"Table {k}: {ex.TABLE_TITLES[k]}")
    ref = {r["label"]: r for r in ex.reference_table(k)}

    def show(row):
        print(row.fmt(), flush=True)
        r = ref.get(row.label)
        if r:
            print(f"{'  reference':<34s} kappa={r['kappa']!s:>10}  It={r['iterations']!s:>4}  "
                  f"#V0={r['coarse_dim']!s:>4}  n-={r['n_minus']!s:>4}", flush=True)

    ex.run_table(k, out_dir=args.out, dense_verify=args.dense_verify, progress=show)
    for r in ref.values():
        if r.get("skipped"):
            print(f"{r['label']:<34s} skipped (needs element-level Neumann matrices)")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="awg", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, needs_config=True):
        if needs_config:
            g = sp.add_mutually_exclusive_group()
            g.add_argument("--config", help="INI experiment file")
            g.add_argument("--builtin", default="headline", choices=sorted(ex.BUILTINS),
                           help="named built-in configuration (default: headline)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--dense-verify", action="store_true",
                        help="cross-check Ritz values with a dense eigensolve (n <= 2000)")
        sp.add_argument("--dump-spectra", action="store_true",
                        help="write the local pencil spectra to CSV")

    a = sub.add_parser("assemble", help="write matrix, rhs, partition and dof map files")
    common(a)
    a.add_argument("--stem", default="problem")
    a.set_defaults(func=cmd_assemble, out=None)

    s = sub.add_parser("solve", help="run one configuration")
    common(s)
    s.set_defaults(func=cmd_solve)

    w = sub.add_parser("sweep", help="run one configuration over a parameter axis")
    common(w)
    w.add_argument("--axis", required=True, choices=ex.SWEEP_AXES)
    w.add_argument("--values", default="",
                   help="comma separated values; E takes e1:e2 pairs, layers takes 3,6,9 or E=<value>")
    w.set_defaults(func=cmd_sweep)

    t = sub.add_parser("table", help="reproduce one of the reference tables")
    t.add_argument("number", type=int, choices=range(1, 8))
    common(t, needs_config=False)
    t.set_defaults(func=cmd_table)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    if args.command == "assemble" and not args.out:
        args.out = "."
    try:
        return args.func(args)
    except ex.PipelineError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
