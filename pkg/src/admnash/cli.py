"""Command line entry point: ``admnash {run,tune,check,compare}``."""

from __future__ import annotations

import argparse
import json
import math
import sys

from .algorithms import TuningError, tune_parameters
from .config import ConfigError, ExperimentConfig, StepConfig


def _load_config(args):
    cfg = ExperimentConfig.load(args.config)
    if args.seed is not None:
        cfg.seed = args.seed
    return cfg


def cmd_run(args):
    from .experiment import resolve_output_dir, run_experiment

    cfg = _load_config(args)
    rows = run_experiment(cfg, output_dir=args.output_dir, jobs=args.jobs)
    out = resolve_output_dir(cfg, args.output_dir)
    for r in rows:
        print(f"{r['algorithm']:>10}  alpha={r['alpha']!s:<24} iterations={r['iterations_to_tol']!s:<12} "
              f"status={r['status']}")
    print(f"wrote {out}")
    return 0


def parse_grid(text):
    """``lo:hi:steps`` (multiples of 1/L) or ``lo:hi:steps:abs`` (absolute)."""
    parts = text.split(":")
    if len(parts) not in (3, 4) or (len(parts) == 4 and parts[3] not in ("abs", "rel")):
        raise argparse.ArgumentTypeError("grid must look like lo:hi:steps[:abs|rel]")
    try:
        lo, hi, steps = float(parts[0]), float(parts[1]), int(parts[2])
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad grid {text!r}") from None
    if not (0 < lo <= hi and steps >= 1):
        raise argparse.ArgumentTypeError("grid needs 0 < lo <= hi and steps >= 1")
    return StepConfig(source="grid", lo=lo, hi=hi, steps=steps,
                      relative=len(parts) == 3 or parts[3] == "rel")


def cmd_compare(args):
    from .experiment import compare, resolve_output_dir

    cfg = _load_config(args)
    rows, best = compare(cfg, grid=args.grid, output_dir=args.output_dir, jobs=args.jobs)
    for tag, r in best.items():
        print(f"best {tag}: alpha={r['alpha']!r} iterations={r['iterations_to_tol']}")
    missing = {a.tag for a in cfg.algorithms} - set(best)
    for tag in sorted(missing):
        print(f"best {tag}: tolerance not reached for any step size")
    print(f"wrote {resolve_output_dir(cfg, args.output_dir) / 'sweep.csv'}")
    return 0


def cmd_tune(args):
    if not 0 <= args.sigma < 1:
        print(f"error: sigma must be < 1 and >= 0 (got {args.sigma})", file=sys.stderr)
        return 2
    if args.L < args.mu:
        print(f"warning: L < mu (gamma = {args.L / args.mu:.6g} < 1); proceeding", file=sys.stderr)
    try:
        p = tune_parameters(args.mu, args.L, args.n, args.sigma, args.q, args.safety)
    except TuningError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    if args.json:
        print(json.dumps(p.to_dict(), indent=2))
        return 0
    names = [("g1", p.g[0]), ("g2", p.g[1]), ("g3", p.g[2]), ("g4", p.g[3]),
             ("alpha", p.alpha), ("eta", p.eta), ("epsilon", p.epsilon), ("lambda", p.lam),
             ("a1", p.prop[0]), ("a2", p.prop[1]), ("b1", p.prop[2]), ("b2", p.prop[3]), ("c", p.c)]
    for name, v in names:
        print(f"{name:>8} = {v:.15g}")
    return 0


def cmd_check(args):
    from .checks import run_checks

    samples = int(float(args.samples))
    reports = run_checks(samples=samples, seed=args.seed or 0)
    failed = 0
    for rep in reports:
        status = "PASS" if rep.passed else "FAIL"
        print(f"{status}  {rep.name:<12} {rep.samples - len(rep.failures)}/{rep.samples} passed")
        if not rep.passed:
            failed += 1
            for cx in rep.failures[: args.max_dump]:
                print("  counterexample: " + json.dumps(cx, default=float))
    print(f"{len(reports) - failed}/{len(reports)} checks passed")
    return 1 if failed else 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="admnash",
        description="Distributed Nash equilibrium seeking: accelerated direct method vs gradient play.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("config", help="experiment config (JSON)")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--output-dir", help="override the output directory "
                       "(also settable through $ADMNASH_OUTPUT_DIR)")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")

    p = sub.add_parser("run", help="run the configured algorithms and write traces")
    common(p)
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="step-size sweep; writes sweep.csv")
    common(p)
    p.add_argument("--grid", type=parse_grid,
                   help="lo:hi:steps log grid in units of 1/L (append ':abs' for absolute steps)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("tune", help="print the certified step-size parameters")
    p.add_argument("--mu", type=float, required=True)
    p.add_argument("--L", type=float, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--sigma", type=float, required=True, help="second singular value of W, in [0, 1)")
    p.add_argument("--q", type=float, required=True, help="spectral norm ||I - W||, in (0, 2]")
    p.add_argument("--safety", type=float, default=1.0, help="fraction of the step budget, in (0, 1]")
    p.add_argument("--json", action="store_true", help="emit JSON instead of a table")
    p.set_defaults(func=cmd_tune)

    p = sub.add_parser("check", help="run the randomized self-check suite")
    p.add_argument("--samples", default="1e4", help="fuzz samples for the scalar checks (e.g. 1e6)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--max-dump", type=int, default=5, help="counterexamples printed per failed check")
    p.set_defaults(func=cmd_check)
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
