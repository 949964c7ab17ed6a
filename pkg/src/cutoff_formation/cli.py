"""Command line interface.

Exit codes: 0 success (or feasible gains), 1 usage, parse or I/O error,
2 infeasible gains, 3 run halted by a collision.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import CollisionError, InfeasibleGainsError, ScenarioError
from .potential import potential_table
from .reports import atomic_write, format_table, write_reports
from .scenario_file import BUILTIN, builtin_scenario_text, dump_scenario, parse_scenario
from .simulator import Scenario, run
from .stability import StabilityReport

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INFEASIBLE = 2
EXIT_COLLISION = 3

BUILTIN_PREFIX = "builtin:"


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # argparse exits with 2 by default
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _load(ref: str) -> Scenario:
    if ref.startswith(BUILTIN_PREFIX):
        name = ref[len(BUILTIN_PREFIX):]
        if name not in BUILTIN:
            raise ScenarioError(f"unknown built-in scenario {name!r}; choose from {list(BUILTIN)}")
        return parse_scenario(builtin_scenario_text(name))
    path = Path(ref)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ScenarioError(f"cannot read {path}: {exc.strerror or exc}") from None
    try:
        return parse_scenario(text)
    except ScenarioError as exc:
        raise ScenarioError(f"{path}: {exc}") from None


def _print_report(report: StabilityReport, as_json: bool) -> None:
    if as_json:
        print(json.dumps(report.as_dict(), indent=2, sort_keys=True))
        return
    d = report.as_dict()
    print(f"feasible: {'yes' if report.feasible else 'no'}")
    for key in ("connected", "has_leader", "lemma1", "condition_mu", "condition_p",
                "condition_v", "condition_pv", "p_positive_definite"):
        print(f"  {key}: {'ok' if d[key] else 'FAIL'}")
    if d["condition_mu_failed_pairs"]:
        print(f"  condition_mu fails for pairs: {', '.join(d['condition_mu_failed_pairs'])}")
    print(f"  margin_p: {report.margin_p:.6g}")
    print(f"  margin_v: {report.margin_v:.6g}")
    print(f"  margin_pv: {report.margin_pv:.6g}")
    print(f"  eigenvalues(L+Delta): {', '.join(f'{x:.6g}' for x in report.eigenvalues)}")
    print(f"  lambda_min(MM): {report.lambda_min_M:.6g}")
    print(f"  lambda_max(P): {report.lambda_max_P:.6g}")
    print(f"  zeta: {report.zeta:.6g} 1/s")


def _simulate(sc: Scenario, out: Path, force: bool, attitude: bool) -> int:
    try:
        trace = run(sc, force=force)
    except InfeasibleGainsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        if exc.report is not None:
            _print_report(exc.report, as_json=False)
        return EXIT_INFEASIBLE
    except CollisionError as exc:
        write_reports(exc.trace, out, attitude=attitude)
        print(f"error: {exc}; partial reports in {out}", file=sys.stderr)
        return EXIT_COLLISION
    write_reports(trace, out, attitude=attitude)
    print((out / "summary.txt").read_text(encoding="utf-8"), end="")
    return EXIT_OK


def cmd_simulate(args) -> int:
    return _simulate(_load(args.scenario), Path(args.out), args.force, not args.no_attitude)


def cmd_demo_paper(args) -> int:
    out = Path(args.out)
    text = builtin_scenario_text("demo_paper")
    sc = parse_scenario(text)
    atomic_write(out / "scenario.toml", text)
    return _simulate(sc, out, args.force, not args.no_attitude)


def cmd_check_gains(args) -> int:
    report = _load(args.scenario).stability_report()
    _print_report(report, args.json)
    return EXIT_OK if report.feasible else EXIT_INFEASIBLE


def cmd_validate(args) -> int:
    sc = _load(args.scenario)
    print(f"ok: {sc.name or args.scenario} ({sc.n_agents} agents, {sc.n_steps} steps, "
          f"{len(sc.obstacles)} obstacle(s))")
    if args.print:
        print(dump_scenario(sc), end="")
    return EXIT_OK


def cmd_potential_table(args) -> int:
    sc = _load(args.scenario)
    if args.pair is None:
        params = sc.potential.default
    else:
        i, j = args.pair
        n = sc.n_agents
        if not (0 <= i < n and 0 <= j < n and i != j):
            raise ScenarioError(f"--pair needs two distinct agent indices below {n}")
        params = sc.potential.for_pair(i, j)
    if args.points < 2:
        raise ScenarioError("--points must be at least 2")
    if args.d_max is not None and not args.d_max > 0:
        raise ScenarioError("--d-max must be positive")
    rows = potential_table(params, args.d_max, args.points)
    atomic_write(Path(args.out), format_table(("d", "f", "g", "phi", "dphi_dd"), rows))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="cutoff-formation",
                description="Formation control simulator with finite cut-off potentials. "
                            f"Scenarios are TOML files or {BUILTIN_PREFIX}<name> "
                            f"(built-ins: {', '.join(BUILTIN)}).")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true", help="log warnings and progress")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="run a scenario and write CSV reports")
    s.add_argument("scenario")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--force", action="store_true", help="simulate even if gains are infeasible")
    s.add_argument("--no-attitude", action="store_true", help="skip attitude.csv")
    s.set_defaults(func=cmd_simulate)

    s = sub.add_parser("demo-paper", help="run the built-in four-agent re-creation")
    s.add_argument("--out", required=True, help="output directory")
    s.add_argument("--force", action="store_true", help=argparse.SUPPRESS)
    s.add_argument("--no-attitude", action="store_true", help="skip attitude.csv")
    s.set_defaults(func=cmd_demo_paper)

    s = sub.add_parser("check-gains", help="evaluate the stability conditions (exit 2 if infeasible)")
    s.add_argument("scenario")
    s.add_argument("--json", action="store_true", help="print the report as JSON")
    s.set_defaults(func=cmd_check_gains)

    s = sub.add_parser("validate", help="parse and check a scenario without running it")
    s.add_argument("scenario")
    s.add_argument("--print", action="store_true", help="echo the normalised scenario")
    s.set_defaults(func=cmd_validate)

    s = sub.add_parser("potential-table", help="tabulate f, g, phi and dphi/dd")
    s.add_argument("scenario")
    s.add_argument("--out", required=True, help="output CSV file")
    s.add_argument("--d-max", type=float, default=None,
                   help="grid end in m (default 1.5 x cautionary radius)")
    s.add_argument("--points", type=int, default=401, help="grid size (default 401)")
    s.add_argument("--pair", type=int, nargs=2, metavar=("I", "J"),
                   help="use the parameters of this agent pair")
    s.set_defaults(func=cmd_potential_table)
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.ERROR,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ScenarioError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
