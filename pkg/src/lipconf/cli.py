"""lipconf command line: gen, bounds, verify, improve.

Exit codes: 0 success, 2 usage or schema error, 3 generation failure, 4 mathematical check failure.
"""

from __future__ import annotations

import argparse
import csv
import io as _io
import json
import sys
import time
from importlib.metadata import PackageNotFoundError, version

import numpy as np

from . import verify as verify_mod
from .bounds import BOUND_TOL, Comparison, all_reports
from .errors import ConsistencyFailure, ContractionUnreachable, InstanceFormatError, NoApplicableCandidate, SingularSystem
from .generators import METRIC_KINDS, GeneratorSpec, random_comparison
from .improvement import BOUNDS, DEFAULT_GRID, DEFAULT_MIN_BOUND, spci_run
from .io import Instance, content_hash, dumps, instance_to_dict, load_instance
from .metric import random_lipschitz_function

EXIT_OK, EXIT_USAGE, EXIT_GENERATION, EXIT_MATH = 0, 2, 3, 4
MATH_ERRORS = (ConsistencyFailure, SingularSystem, NoApplicableCandidate, ArithmeticError)


def toolkit_version() -> str:
    try:
        return version("lipconf")
    except PackageNotFoundError:
        return "unknown"


class UsageError(Exception):
    pass


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _fmt(x) -> str:
    return "-" if x is None else f"{x:.6g}"


def cmd_gen(args) -> int:
    try:
        spec = GeneratorSpec(args.states, args.actions, args.gamma, args.smoothing, args.metric, args.seed)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    c, pi, p, pi_new, p_new, mu = random_comparison(spec)
    _emit(dumps(instance_to_dict(Instance(c, pi, p, mu, pi_new, p_new))), args.out)
    return EXIT_OK


def cmd_bounds(args) -> int:
    inst, raw = load_instance(args.input)
    if not inst.has_second_pair:
        raise UsageError("bounds needs policy_new and configuration_new in the instance file")
    start = time.perf_counter()
    cmp = Comparison(inst.c, inst.pi, inst.p, inst.pi_new, inst.p_new, inst.mu)
    f = random_lipschitz_function(inst.c.states, np.random.default_rng(args.seed))
    reports = all_reports(cmp, f, use_theoretical_seminorm=args.mode == "theoretical")
    elapsed = time.perf_counter() - start

    rows = [{**r.to_dict(), "passed": r.holds(_tol(r.name))} for r in reports]
    report = {
        "version": 1,
        "toolkit_version": toolkit_version(),
        "instance_digest": content_hash(raw),
        "mode": args.mode,
        "seed": args.seed,
        "timing_seconds": elapsed,
        "bounds": [r for r in rows if not r["name"].startswith(("lemma_", "advantage_"))],
        "lemma_checks": [r for r in rows if r["name"].startswith(("lemma_", "advantage_"))],
        "passed": all(r["passed"] for r in rows),
    }
    # stdout carries one format: the table when --out or --csv is given, else the JSON report
    table = _csv_table(rows) if args.csv else _text_table(rows)
    if args.out or args.csv:
        if args.out:
            _emit(json.dumps(report, indent=1) + "\n", args.out)
        sys.stdout.write(table)
    else:
        _emit(json.dumps(report, indent=1) + "\n", None)
        sys.stderr.write(table)
    failed = [r["name"] for r in rows if not r["passed"]]
    if failed:
        print(f"violated: {', '.join(failed)}", file=sys.stderr)
        return EXIT_MATH
    return EXIT_OK


def _tol(name: str) -> float:
    return 1e-10 if name == "advantage_decomposition" else BOUND_TOL


def _csv_table(rows) -> str:
    buf = _io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["name", "kind", "applicable", "bound_value", "exact_value", "slack", "passed"])
    for r in rows:
        w.writerow([r["name"], r["kind"], r["applicable"], r["bound_value"], r["exact_value"], r["slack"], r["passed"]])
    return buf.getvalue()


def _text_table(rows) -> str:
    lines = [f"{'check':34} {'bound':>12} {'exact':>12} {'slack':>12}  status"]
    for r in rows:
        status = ("ok" if r["passed"] else "FAIL") if r["applicable"] else "n/a"
        lines.append(f"{r['name']:34} {_fmt(r['bound_value']):>12} {_fmt(r['exact_value']):>12} "
                     f"{_fmt(r['slack']):>12}  {status}")
    return "\n".join(lines) + "\n"


def cmd_verify(args) -> int:
    if args.trials < 1:
        raise UsageError("--trials must be at least 1")
    try:
        sizes = verify_mod.parse_sizes(args.sizes) if args.sizes else list(verify_mod.DEFAULT_SIZES)
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    if any(s > 20 or a > 5 for s, a in sizes):
        print("warning: sizes beyond 20 states or 5 actions may be slow", file=sys.stderr)
    start = time.perf_counter()
    results = verify_mod.run_suite(args.trials, args.seed, sizes, args.workers)
    elapsed = time.perf_counter() - start
    summary = verify_mod.summarize(results)

    print(f"{'property':36} {'checks':>7} {'min slack':>12} {'mean slack':>12}  failures")
    for row in summary:
        print(f"{row['property']:36} {row['checks']:>7} {_fmt(row['min_slack']):>12} "
              f"{_fmt(row['mean_slack']):>12}  {row['failures']}")
    print(f"{len(results)} trials in {elapsed:.1f}s")

    failure = verify_mod.first_failure(results)
    if args.out:
        report = {
            "version": 1,
            "toolkit_version": toolkit_version(),
            "seed": args.seed,
            "trials": args.trials,
            "sizes": [list(s) for s in sizes],
            "timing_seconds": elapsed,
            "properties": summary,
            "passed": failure is None,
        }
        with open(args.out, "w") as fh:
            json.dump(report, fh, indent=1)
    if failure is not None:
        trial, prop = failure
        if prop is None:
            print(f"FAIL trial {trial.trial} (seed {trial.seed}): generation failed: {trial.error}", file=sys.stderr)
        else:
            detail = prop.error or f"min slack {min(prop.slacks):.6g}"
            print(f"FAIL trial {trial.trial} (seed {trial.seed}, {trial.size[0]}x{trial.size[1]}): "
                  f"property {prop.name}: {detail}", file=sys.stderr)
        return EXIT_MATH
    return EXIT_OK


def cmd_improve(args) -> int:
    inst, raw = load_instance(args.input)
    if args.iters < 1 or args.grid < 2 or args.min_bound < 0:
        raise UsageError("need --iters >= 1, --grid >= 2 and --min-bound >= 0")
    trace = spci_run(inst.c, inst.pi, inst.p, inst.mu, max_iters=args.iters, grid=args.grid,
                     min_bound=args.min_bound, bound=args.bound)
    data = {"instance_digest": content_hash(raw), "bound": args.bound, "grid": args.grid, **trace.to_dict()}
    _emit(json.dumps(data, indent=1) + "\n", args.out)
    stream = sys.stderr if args.out is None else sys.stdout
    print(f"initial J       {trace.j_initial:.10g}", file=stream)
    print(f"final J         {trace.j_final:.10g}", file=stream)
    print(f"accepted steps  {len(trace.steps)}", file=stream)
    print(f"terminated      {trace.terminated_reason}", file=stream)

    bad = [k for k, s in enumerate(trace.steps) if s.realized_improvement < s.predicted_bound - BOUND_TOL]
    if bad:
        print(f"safety violated at steps {bad}", file=sys.stderr)
        return EXIT_MATH
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="lipconf", description="Exact Lipschitz bounds for configurable MDPs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {toolkit_version()}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    g = sub.add_parser("gen", help="generate a random instance with two contractive pairs")
    g.add_argument("--states", type=int, required=True)
    g.add_argument("--actions", type=int, required=True)
    g.add_argument("--gamma", type=float, default=0.9)
    g.add_argument("--smoothing", type=float, default=0.5)
    g.add_argument("--metric", choices=METRIC_KINDS, default="line")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out")
    g.set_defaults(func=cmd_gen)

    b = sub.add_parser("bounds", help="evaluate every bound and lemma on an instance")
    b.add_argument("--in", dest="input", required=True)
    b.add_argument("--mode", choices=("exact", "theoretical"), default="exact")
    b.add_argument("--csv", action="store_true", help="print the table to stdout as CSV")
    b.add_argument("--seed", type=int, default=0, help="seed for the Lipschitz test function")
    b.add_argument("--out", help="write the JSON report here (table goes to stdout)")
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("verify", help="run the property suite on generated instances")
    v.add_argument("--trials", type=int, default=20)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--sizes", help="comma separated SxA list, e.g. 2x2,4x3")
    v.add_argument("--workers", type=int, default=1)
    v.add_argument("--out", help="write the aggregate JSON report here")
    v.set_defaults(func=cmd_verify)

    i = sub.add_parser("improve", help="run safe policy-configuration improvement")
    i.add_argument("--in", dest="input", required=True)
    i.add_argument("--iters", type=int, default=50)
    i.add_argument("--grid", type=int, default=DEFAULT_GRID)
    i.add_argument("--min-bound", type=float, default=DEFAULT_MIN_BOUND)
    i.add_argument("--bound", choices=BOUNDS, default="decoupled")
    i.add_argument("--out")
    i.set_defaults(func=cmd_improve)
    return parser


def main(argv: list[str] | None = None) -> int:
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as exc:  # --help, --version and usage errors
        return exc.code if isinstance(exc.code, int) else EXIT_USAGE
    try:
        return args.func(args)
    except (UsageError, InstanceFormatError) as exc:
        print(f"lipconf {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ContractionUnreachable as exc:
        print(f"lipconf {args.command}: generation failed: {exc}", file=sys.stderr)
        return EXIT_GENERATION
    except MATH_ERRORS as exc:
        print(f"lipconf {args.command}: check failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_MATH


if __name__ == "__main__":
    sys.exit(main())
