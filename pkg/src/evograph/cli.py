"""Command-line interface: ``evograph {graph,exact,simulate,sweep,verify}``."""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from datetime import datetime, timezone

import numpy as np

from . import __version__, exact
from .errors import EstimateUnavailable, EvographError, InvalidParameter, SizeLimitError, UnsupportedParameter
from .estimate import CSV_COLUMNS, default_workers, estimate_fixation, estimates_to_csv, parse_policy
from .experiments import ExperimentSpec, sweep
from .graphs import FAMILIES, make_family
from .verification import parse_suite, run_check

EXIT_OK, EXIT_FAIL, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _positive_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 1:
        raise argparse.ArgumentTypeError(f"expected a positive integer, got {value}")
    return value


def _nonneg_int(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value < 0:
        raise argparse.ArgumentTypeError(f"expected a non-negative integer, got {value}")
    return value


def _positive_float(text: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number, got {text!r}") from None
    if not value > 0 or not np.isfinite(value):
        raise argparse.ArgumentTypeError(f"expected a positive finite number, got {text}")
    return value


def _level(text: str) -> float:
    value = _positive_float(text)
    if not value < 1:
        raise argparse.ArgumentTypeError(f"confidence level must be in (0, 1), got {text}")
    return value


def _family_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--family", required=True, choices=FAMILIES)
    p.add_argument("--n", type=_positive_int, help="vertex count (complete graphs)")
    p.add_argument("--k", type=_positive_int)
    p.add_argument("--l", type=_positive_int, help="leaves (star) or branch count")
    p.add_argument("--m", type=_positive_int)


def _common(p: argparse.ArgumentParser, formats=("human", "json")) -> None:
    p.add_argument("--format", choices=formats, default="human")
    p.add_argument("--no-meta", action="store_true", help="omit the metadata footer line")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="evograph", description=__doc__)
    parser.add_argument("--version", action="version", version=f"evograph {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("graph", help="build a graph and write it as JSON")
    _family_args(p)
    p.add_argument("--out", help="output path (default: stdout)")
    _common(p)

    p = sub.add_parser("exact", help="exact fixation probabilities")
    _family_args(p)
    p.add_argument("--r", type=_positive_float, required=True)
    p.add_argument("--cap", type=_positive_int, default=exact.DEFAULT_EXACT_CAP,
                   help="largest n for the 2^n solver")
    _common(p)

    p = sub.add_parser("simulate", help="Monte Carlo fixation estimate")
    _family_args(p)
    p.add_argument("--r", type=_positive_float, required=True)
    p.add_argument("--trials", type=_positive_int, default=10_000)
    p.add_argument("--seed", type=_nonneg_int, help="master seed (generated and reported if absent)")
    p.add_argument("--workers", type=_positive_int, default=None)
    p.add_argument("--initial", default="uniform-singleton",
                   help="uniform-singleton, vertex:V, or set:A,B,...")
    p.add_argument("--max-steps", type=_positive_int, default=10**9)
    p.add_argument("--level", type=_level, default=0.95)
    p.add_argument("--engine", choices=("auto", "graph", "lumped"), default="auto")
    _common(p, ("human", "json", "csv"))

    p = sub.add_parser("sweep", help="run an experiment spec")
    p.add_argument("--spec", required=True, help="experiment spec JSON")
    p.add_argument("--out", help="output CSV or JSON-lines path (default: stdout)")
    p.add_argument("--workers", type=_positive_int, default=None)
    _common(p, ("csv", "json"))

    p = sub.add_parser("verify", help="run the acceptance checks")
    p.add_argument("--suite", default="all", help="all, quick, or comma-separated check ids")
    _common(p)
    return parser


def _graph_from(args):
    kw = {name: getattr(args, name) for name in ("n", "k", "l", "m") if getattr(args, name) is not None}
    return make_family(args.family, **kw)


def _footer(out, args, started: float, extra: str = "") -> None:
    if args.no_meta:
        return
    stamp = datetime.now(timezone.utc).isoformat(timespec="seconds")
    out.write(f"# evograph {__version__} | {stamp} | {time.perf_counter() - started:.2f}s{extra}\n")


def cmd_graph(args, out) -> int:
    g = _graph_from(args)
    text = g.to_json()
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(text + "\n")
        if args.format == "human":
            out.write(f"wrote {g.family} graph with n={g.n}, {g.n_edges} edges to {args.out}\n")
        else:
            out.write(json.dumps({"n": g.n, "edges": g.n_edges, "out": args.out}) + "\n")
    else:
        out.write(text + "\n")
    return EXIT_OK


def cmd_exact(args, out) -> int:
    g = _graph_from(args)
    if g.family == "star" and g.n > args.cap:
        centre, leaf, uniform = exact.star_fixation_exact(g.n - 1, args.r)
        singles = [centre] + [leaf] * (g.n - 1)
        method = "lumped star chain"
    else:
        sol = exact.solve_fixation(g, args.r, cap=args.cap)
        singles = sol.singletons.tolist()
        uniform = sol.uniform_fixation
        method = sol.method
    if args.format == "json":
        out.write(json.dumps({"graph": {"family": g.family, "n": g.n, **g.params}, "r": args.r,
                              "method": method, "singletons": singles, "uniform": uniform}) + "\n")
    else:
        out.write(f"{g.family} n={g.n} r={args.r:g} ({method})\n")
        for v, p in enumerate(singles):
            out.write(f"  vertex {v:>3} {g.labels[v]:<16} {p:.16g}\n")
        out.write(f"uniform fixation {uniform:.16g}\n")
    return EXIT_OK


def cmd_simulate(args, out) -> int:
    g = _graph_from(args)
    seed = args.seed
    if seed is None:
        seed = int(np.random.SeedSequence().generate_state(1, np.uint32)[0])
        sys.stderr.write(f"no --seed given; using generated seed {seed}\n")
    try:
        policy = parse_policy(args.initial)
    except (InvalidParameter, ValueError) as exc:
        raise UsageError(str(exc)) from None
    workers = args.workers or default_workers()
    est = estimate_fixation(g, args.r, policy, args.trials, seed, args.max_steps, workers,
                            level=args.level, engine=args.engine)
    if args.format == "json":
        out.write(est.to_json() + "\n")
    elif args.format == "csv":
        out.write(estimates_to_csv([est]))
    else:
        lo, hi = est.ci
        out.write(f"{g.family} n={g.n} r={args.r:g} policy={est.policy} seed={seed}\n")
        out.write(f"trials {est.trials}: fixation {est.fixations}, extinction {est.extinctions}, "
                  f"censored {est.censored}\n")
        out.write(f"fixation {est.point:.6f}  {est.level:.0%} CI [{lo:.6f}, {hi:.6f}]\n")
        out.write(f"extinction {est.extinction:.6f}  mean steps {est.mean_steps:.1f}\n")
    return EXIT_OK


def cmd_sweep(args, out) -> int:
    try:
        spec = ExperimentSpec.from_json(args.spec)
    except (OSError, json.JSONDecodeError, TypeError) as exc:
        raise UsageError(f"cannot read spec {args.spec}: {exc}") from None
    workers = args.workers or default_workers()
    fmt = args.format
    if args.out and args.out.endswith((".jsonl", ".json")):
        fmt = "json"
    sink = open(args.out, "w", newline="") if args.out else out
    try:
        writer = None
        for row in sweep(spec, workers):
            if fmt == "json":
                sink.write(json.dumps(row) + "\n")
            else:
                if writer is None:
                    writer = csv.DictWriter(sink, fieldnames=("status",) + CSV_COLUMNS + ("scenario", "verdict", "bound", "reason"),
                                            extrasaction="ignore", lineterminator="\n")
                    writer.writeheader()
                flat = dict(row)
                for key in ("graph", "ci"):
                    if key in flat:
                        flat[key] = json.dumps(flat[key], sort_keys=True)
                writer.writerow(flat)
            sink.flush()
    finally:
        if args.out:
            sink.close()
    return EXIT_OK


def cmd_verify(args, out) -> int:
    try:
        ids = parse_suite(args.suite)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    quick = args.suite == "quick"
    results = []
    for cid in ids:
        res = run_check(cid, quick=quick)
        results.append(res)
        if args.format == "human":
            out.write(res.line() + "\n")
            out.flush()
    failed = [r for r in results if not r.passed]
    if args.format == "json":
        out.write(json.dumps({"suite": args.suite, "passed": not failed,
                              "checks": [r.to_dict() for r in results]}, default=float) + "\n")
    else:
        out.write(f"{len(results) - len(failed)}/{len(results)} checks passed\n")
    return EXIT_FAIL if failed else EXIT_OK


COMMANDS = {"graph": cmd_graph, "exact": cmd_exact, "simulate": cmd_simulate,
            "sweep": cmd_sweep, "verify": cmd_verify}


def run(argv=None, out=None) -> int:
    out = out if out is not None else sys.stdout
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse exits 2 on bad arguments, 0 on --help
        return int(exc.code or 0)
    command = args.command
    started = time.perf_counter()
    try:
        code = COMMANDS[command](args, out)
    except (UsageError, InvalidParameter, SizeLimitError, UnsupportedParameter) as exc:
        parser.print_usage(sys.stderr)
        sys.stderr.write(f"evograph {command}: error: {exc}\n")
        return EXIT_USAGE
    except EstimateUnavailable as exc:
        sys.stderr.write(f"evograph {command}: {exc} {exc.diagnostics}\n")
        return EXIT_FAIL
    except EvographError as exc:
        sys.stderr.write(f"evograph {command}: {exc}\n")
        return EXIT_FAIL
    _footer(out, args, started)
    return code


def main() -> None:
    sys.exit(run())


if __name__ == "__main__":
    main()
