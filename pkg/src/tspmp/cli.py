"""Command-line front end: ``tspmp run | sweep | compare``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path

import numpy as np

from .errors import MissingResult, ParseError, SolveError
from .scenario import Scenario, compare_golden, run_scenario, sweep_lambda


def _cmd_run(args) -> int:
    code = 0
    for path in args.scenario:
        c, lines = run_scenario(path, args.out)
        for line in lines:
            print(line)
        code = max(code, c)
    return code


def _cmd_sweep(args) -> int:
    try:
        sc = Scenario.load(args.base)
        grid = np.linspace(args.lam_from, args.lam_to, args.steps)
        res = sweep_lambda(sc, grid, args.saturation)
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    except SolveError as exc:
        print(f"solve error: {exc}", file=sys.stderr)
        return 3
    text = res.to_csv()
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    for name, value in res.thresholds.items():
        shown = "none" if value is None else f"{value:.17g}"
        print(f"threshold {name} = {shown}", file=sys.stderr if not args.out else sys.stdout)
    return 0


def _cmd_compare(args) -> int:
    try:
        code, lines = compare_golden(args.results, args.golden)
    except MissingResult as exc:
        print(f"missing result: {exc}", file=sys.stderr)
        return 2
    except ParseError as exc:
        print(f"parse error: {exc}", file=sys.stderr)
        return 2
    print("\n".join(lines))
    return code


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="tspmp", description="Sampled-data optimal control on time scales.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log solver diagnostics")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="solve and certify scenario files")
    run.add_argument("scenario", nargs="+")
    run.add_argument("--out", default="results", help="output directory (default: results)")
    run.set_defaults(func=_cmd_run)

    sw = sub.add_parser("sweep", help="optimal controls over the extra controlling time λ")
    sw.add_argument("--base", required=True)
    sw.add_argument("--from", dest="lam_from", type=float, default=0.05)
    sw.add_argument("--to", dest="lam_to", type=float, default=11.95)
    sw.add_argument("--steps", type=int, default=239)
    sw.add_argument("--saturation", type=float, default=0.01,
                    help="distance to a bound under which a control counts as saturated")
    sw.add_argument("--out", help="CSV output file (default: stdout)")
    sw.set_defaults(func=_cmd_sweep)

    cmp_ = sub.add_parser("compare", help="check results against a golden file")
    cmp_.add_argument("--results", required=True)
    cmp_.add_argument("--golden", required=True)
    cmp_.set_defaults(func=_cmd_compare)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
