"""``limuon`` command line.

Exit codes: 0 ok, 2 usage/config error, 3 insufficient data, 4 divergence.
"""

from __future__ import annotations

import argparse
import json
import sys

from limuon import harness
from limuon.objectives import PROBLEMS, ProblemSpec

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INSUFFICIENT = 3
EXIT_DIVERGED = 4


def _add_config_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="experiment JSON document")
    p.add_argument(
        "--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
        help="override a (dotted) config key, e.g. optimizer.T=300; repeatable",
    )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="limuon", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write CSV results")
    _add_config_args(run)
    run.add_argument("--out", help="output CSV path (overrides config 'output')")
    run.add_argument("--seeds", type=int, help="number of seeds (overrides config 'repeats')")

    gc = sub.add_parser("gradcheck", help="finite-difference check of a problem's gradient")
    _add_config_args(gc)
    gc.add_argument("--problem", help=f"problem kind, one of {', '.join(PROBLEMS)}")

    rr = sub.add_parser("rate-report", help="fit the stationarity decay rate across horizons")
    rr.add_argument("files", nargs="*", help="result CSV files")

    mr = sub.add_parser("memory-report", help="persistent optimizer state per variant")
    _add_config_args(mr)
    mr.add_argument("--m", type=int)
    mr.add_argument("--n", type=int)
    mr.add_argument("--r-hat", type=int)
    mr.add_argument("--s", type=int)
    return parser


def _cmd_run(args) -> int:
    overrides = list(args.overrides)
    if args.out:
        overrides.append(("output", args.out))
    if args.seeds is not None:
        overrides.append(("repeats", args.seeds))
    spec = harness.load_spec(args.config, overrides)
    paths, diverged = harness.run_experiment(spec)
    for p in paths:
        print(p)
    if diverged:
        print("at least one run diverged", file=sys.stderr)
        return EXIT_DIVERGED
    return EXIT_OK


def _problem_from_args(args) -> ProblemSpec:
    overrides = list(args.overrides)
    if args.problem:
        if args.problem not in PROBLEMS:
            raise harness.ConfigError(
                f"unknown problem {args.problem!r}; expected one of {', '.join(PROBLEMS)}"
            )
        overrides.append(("problem.kind", args.problem))
    return harness.load_spec(args.config, overrides).problem


def _cmd_gradcheck(args) -> int:
    report = harness.gradcheck(_problem_from_args(args))
    print(json.dumps(report, indent=2))
    return EXIT_OK if report["ok"] else 1


def _cmd_rate_report(args) -> int:
    if not args.files:
        raise harness.InsufficientData("no result files given")
    print(json.dumps(harness.rate_report(args.files), indent=2))
    return EXIT_OK


def _cmd_memory_report(args) -> int:
    spec = harness.load_spec(args.config, args.overrides)
    m = args.m if args.m is not None else spec.problem.m
    n = args.n if args.n is not None else spec.problem.n
    r_hat = args.r_hat if args.r_hat is not None else spec.optimizer.r_hat
    s = args.s if args.s is not None else spec.optimizer.s
    if r_hat + s > min(m, n):
        raise harness.ConfigError(f"r_hat + s = {r_hat + s} exceeds min(m, n) = {min(m, n)}")
    print(json.dumps(harness.memory_report(m, n, r_hat, s), indent=2))
    return EXIT_OK


COMMANDS = {
    "run": _cmd_run,
    "gradcheck": _cmd_gradcheck,
    "rate-report": _cmd_rate_report,
    "memory-report": _cmd_memory_report,
}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return COMMANDS[args.command](args)
    except harness.ConfigError as exc:
        print(f"limuon: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except harness.InsufficientData as exc:
        print(f"limuon: error: {exc}", file=sys.stderr)
        return EXIT_INSUFFICIENT


if __name__ == "__main__":
    sys.exit(main())
