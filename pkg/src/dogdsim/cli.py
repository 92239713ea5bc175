"""Command-line front end: ``run``, ``verify`` and ``plotdata``."""

import argparse
import sys
from pathlib import Path

import numpy as np

from . import harness
from ._io import read_csv, write_csv
from .verify import SUITES, run_suite


def _print_summary(res, out=None):
    out = sys.stdout if out is None else out
    print(f"experiment {res.config['name']}: n={res.config['n']} d={res.config['d']} "
          f"T={res.config['T']} sigma={res.config['sigma']} topology={res.config['topology.kind']} "
          f"slem={res.consensus.slem:.4f} L={res.spec.L:.4g}", file=out)
    header = f"{'algorithm':<12} {'T':>6} {'worst_gap':>12} {'regret/T':>12} {'slope':>8}"
    print(header, file=out)
    for alg, T, worst, _, reg, slope in res.summary_rows():
        reg_s = f"{reg:12.5g}" if reg != "" else f"{'-':>12}"
        slope_s = f"{slope:8.3f}" if slope != "" else f"{'-':>8}"
        print(f"{alg:<12} {T:>6} {worst:12.5g} {reg_s} {slope_s}", file=out)
    for alg, G in res.replicate_gaps.items():
        print(f"{alg}: mean final worst gap over {G.shape[0]} noise seeds {G[:, -1].mean():.5g}",
              file=out)
    if "dogd" in res.series and "dda" in res.series:
        smaller = res.final_gap("dogd") < res.final_gap("dda")
        print(f"final gap dogd < dda: {'yes' if smaller else 'no'}", file=out)
    for name, (ok, detail) in res.checks.items():
        label = "reduction check" if name == "reduction" else name
        print(f"{label}: {'PASS' if ok else 'FAIL'} ({detail})", file=out)


def cmd_run(args):
    try:
        if args.preset is not None:
            if args.config is not None:
                print("error: give either a config file or --preset, not both", file=sys.stderr)
                return 2
            cfg = harness.preset(args.preset)
        elif args.config is not None:
            cfg = harness.ExperimentConfig.from_file(args.config)
        else:
            print("error: give a config file or --preset", file=sys.stderr)
            return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except harness.ConfigError as exc:
        print(f"error: invalid config: {exc}", file=sys.stderr)
        return 1
    try:
        res = harness.run_experiment(cfg, args.out)
    except harness.StageError as exc:
        print(harness.format_stage_error(exc), file=sys.stderr)
        return 1
    _print_summary(res)
    if args.out is not None:
        print(f"outputs written to {args.out}")
    return 0 if res.passed else 1


def cmd_verify(args):
    checks = run_suite(args.suite, seed=args.seed)
    for c in checks:
        print(c.line())
    failed = [c for c in checks if not c.passed]
    print(f"suite {args.suite}: {'PASS' if not failed else 'FAIL'} "
          f"({len(checks) - len(failed)}/{len(checks)} checks passed)")
    return 0 if not failed else 1


def plot_series(path, y="gap", max_rows=600):
    """Two-column ``(steps, y)`` series from a trace CSV.

    ``gap`` is the worst node's gap at each step, ``regret`` the cumulative
    network regret. Long series are thinned to ``max_rows`` evenly spaced
    rows, always keeping the last one.
    """
    header, rows = read_csv(path)
    need = ["step", "node", "gap", "regret_inc"]
    if any(c not in header for c in need):
        raise ValueError(f"{path}: not a trace CSV (columns {header})")
    if not rows:
        raise ValueError(f"{path}: trace has no rows")
    col = {c: header.index(c) for c in need}
    try:
        steps = np.array([int(r[col["step"]]) for r in rows])
        vals = np.array([float(r[col[y if y == "gap" else "regret_inc"]]) for r in rows])
    except (ValueError, IndexError) as exc:
        raise ValueError(f"{path}: malformed row ({exc})") from None
    uniq, inv = np.unique(steps, return_inverse=True)
    if y == "gap":
        out = np.full(len(uniq), -np.inf)
        np.maximum.at(out, inv, vals)
    else:
        if not np.array_equal(uniq, np.arange(1, len(uniq) + 1)):
            raise ValueError("cumulative regret needs an unsubsampled trace (every step present)")
        per_step = np.zeros(len(uniq))
        np.add.at(per_step, inv, vals)
        out = np.cumsum(per_step)
    if max_rows and len(uniq) > max_rows:
        idx = np.unique(np.linspace(0, len(uniq) - 1, max_rows).round().astype(int))
        uniq, out = uniq[idx], out[idx]
    return uniq, out


def cmd_plotdata(args):
    if args.x != "steps":
        print("error: only --x steps is supported", file=sys.stderr)
        return 1
    try:
        xs, ys = plot_series(args.trace, args.y, args.max_rows)
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    rows = [[int(x), float(v)] for x, v in zip(xs, ys)]
    if args.out is not None:
        write_csv(Path(args.out), ["steps", args.y], rows)
    else:
        print(f"steps,{args.y}")
        for x, v in rows:
            print(f"{x},{v!r}")
    return 0


def build_parser():
    p = argparse.ArgumentParser(prog="dogdsim",
                                description="Distributed strongly convex optimisation simulator")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser("run", help="run a config file or a compiled-in preset")
    r.add_argument("config", nargs="?", help="flat key = value config file")
    r.add_argument("--preset", choices=sorted(harness.PRESETS))
    r.add_argument("--out", help="output directory (nothing is written without it)")
    r.set_defaults(func=cmd_run)

    v = sub.add_parser("verify", help="run an invariant suite")
    v.add_argument("--suite", required=True, choices=SUITES)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    pd = sub.add_parser("plotdata", help="two-column plot data from a trace CSV")
    pd.add_argument("trace")
    pd.add_argument("--x", default="steps")
    pd.add_argument("--y", default="gap", choices=("gap", "regret"))
    pd.add_argument("--max-rows", type=int, default=600)
    pd.add_argument("--out", help="write CSV here instead of stdout")
    pd.set_defaults(func=cmd_plotdata)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
