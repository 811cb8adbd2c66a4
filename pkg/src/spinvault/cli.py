"""Command-line front end.

    spinvault optimize --preset fig4 --out runs/fig4
    spinvault sweep --scenario map.json --out runs/map --workers 4

Exit status: 0 on success, 2 on a validation error, 3 on a numerical failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
import warnings
from typing import Sequence

from .errors import DomainError, NumericalError, ScenarioError, UndefinedRatioError
from .scenario import MODES, PRESETS, dump_scenario, load_scenario, preset

__all__ = ["EXIT_NUMERIC", "EXIT_VALIDATION", "build_parser", "main"]

EXIT_VALIDATION = 2
EXIT_NUMERIC = 3

log = logging.getLogger("spinvault")


def _positive_int(text: str) -> int:
    try:
        n = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if n < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return n


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="spinvault", description="Optical memory in alkali and noble-gas spins.")
    sub = parser.add_subparsers(dest="command", required=True, metavar="{" + ",".join(MODES) + "}")
    for mode in MODES:
        p = sub.add_parser(mode, help=f"run a scenario in {mode} mode")
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--scenario", metavar="PATH", help="JSON scenario file")
        src.add_argument("--preset", metavar="NAME", choices=PRESETS, help="built-in scenario: " + ", ".join(PRESETS))
        p.add_argument("--out", metavar="DIR", help="output directory (default: print records only)")
        p.add_argument("--workers", type=_positive_int, metavar="N",
                       help="sweep worker processes (default: $SPINVAULT_WORKERS or the core count)")
        p.add_argument("--max-iters", type=_positive_int, metavar="N", help="override the optimizer iteration budget")
        p.add_argument("--no-plots", action="store_true", help="skip the PNG figures")
        p.add_argument("--dump", action="store_true", help="print the resolved scenario JSON and exit")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_VALIDATION if exc.code not in (0, None) else 0
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    logging.captureWarnings(True)
    warnings.simplefilter("default")
    try:
        scenario = load_scenario(args.scenario) if args.scenario else preset(args.preset)
        if scenario.mode != args.command:
            scenario = scenario.with_mode(args.command)
        if args.max_iters is not None:
            scenario = scenario.with_max_iters(args.max_iters)
    except (ScenarioError, DomainError) as exc:
        print(f"spinvault: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    if args.dump:
        sys.stdout.write(dump_scenario(scenario))
        return 0

    from .runner import run

    try:
        out = run(scenario, args.out, args.workers, plots=not args.no_plots)
    except (ScenarioError, DomainError) as exc:
        print(f"spinvault: {scenario.id}: invalid input: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except (NumericalError, UndefinedRatioError, ArithmeticError) as exc:
        print(f"spinvault: {scenario.id}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as exc:
        print(f"spinvault: {scenario.id}: {exc}", file=sys.stderr)
        return 1
    for r in out:
        fmt = lambda v: "-" if v is None else f"{v:.6g}"  # noqa: E731
        print(f"{r.scenario_id}  eta_in={fmt(r.eta_in)}  eta_out={fmt(r.eta_out)}  "
              f"eta_tot={fmt(r.eta_tot)}  max_S2={fmt(r.max_S2)}  {r.regime}")
    for f in out.files:
        log.info("wrote %s", f)
    return 0


if __name__ == "__main__":
    sys.exit(main())
