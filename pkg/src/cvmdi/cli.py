"""Command-line entry point.

Exit codes: 0 success, 1 validation error, 2 numerical error.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from itertools import product

from . import estimation as est
from .errors import NumericalError, ValidationError
from .pipeline import (
    SWEEP_COLUMNS,
    ExperimentConfig,
    run_equivalence_sweep,
    run_experiment,
    serialize,
    to_csv,
)

EXIT_OK, EXIT_VALIDATION, EXIT_NUMERICAL = 0, 1, 2


def _write(text: str, path: str) -> None:
    if path == "-":
        sys.stdout.write(text)
    else:
        with open(path, "w") as fh:
            fh.write(text)


def _parse_grid(text: str) -> list:
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError as exc:
        raise ValidationError(f"bad grid {text!r}") from exc


def cmd_run(args) -> int:
    overrides = {f.name: getattr(args, f.name) for f in fields(ExperimentConfig) if getattr(args, f.name) is not None}
    if args.output is not None:
        overrides["output_path"] = args.output
    if args.config:
        cfg = ExperimentConfig.from_file(args.config, overrides)
    else:
        cfg = ExperimentConfig.from_mapping(overrides)
    report = run_experiment(cfg)
    _write(serialize(report, cfg.report_format), cfg.output_path)
    return EXIT_OK


def cmd_sweep(args) -> int:
    if args.v_grid is not None:
        rows = run_equivalence_sweep(V_grid=_parse_grid(args.v_grid))
    else:
        rows = run_equivalence_sweep(r_grid=_parse_grid(args.r_grid))
    if args.format == "json":
        text = json.dumps(rows, indent=2) + "\n"
    else:
        text = to_csv(rows) if rows else ",".join(SWEEP_COLUMNS) + "\n"
    _write(text, args.output)
    return EXIT_OK


def cmd_dv(args) -> int:
    p1, p2 = est.dv_marginal_counterexample()
    lines = ["x,y,z,P1,P2"]
    for x, y, z in product(range(2), range(2), range(4)):
        lines.append(f"{x},{y},{z},{p1.probs[x, y, z]:.17g},{p2.probs[x, y, z]:.17g}")
    lines.append(f"max|P1(XZ)-P2(XZ)| = {abs(p1.marginal_xz() - p2.marginal_xz()).max():.17g}")
    lines.append(f"max|P1(YZ)-P2(YZ)| = {abs(p1.marginal_yz() - p2.marginal_yz()).max():.17g}")
    lines.append(f"TV(P1, P2) = {p1.total_variation(p2):.17g}")
    lines.append(f"P1(X=Y) = {p1.prob_x_equals_y():.17g}, P2(X=Y) = {p2.prob_x_equals_y():.17g}")
    _write("\n".join(lines) + "\n", args.output)
    return EXIT_OK


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on bad flags; bad flags are validation errors here
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_VALIDATION, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="cvmdi", description="CV MDI QKD parameter-estimation simulator")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one seeded experiment")
    run.add_argument("--config", help="flat key = value config file")
    run.add_argument("--output", help="report path, '-' for stdout")
    for f in fields(ExperimentConfig):
        typ = {"int": int, "float": float}.get(f.type, str)
        run.add_argument(f"--{f.name}", type=typ, default=None)
    run.set_defaults(func=cmd_run)

    sweep = sub.add_parser("sweep-equivalence", help="tabulate scheme differences over squeezing")
    grid = sweep.add_mutually_exclusive_group()
    grid.add_argument("--r-grid", default="0,0.5,1,2,4,10")
    grid.add_argument("--v-grid", default=None, help="modulation variances instead of squeezing")
    sweep.add_argument("--format", choices=("csv", "json"), default="csv")
    sweep.add_argument("--output", default="-")
    sweep.set_defaults(func=cmd_sweep)

    dv = sub.add_parser("dv-counterexample", help="print the discrete-variable marginal counterexample")
    dv.add_argument("--output", default="-")
    dv.set_defaults(func=cmd_dv)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ValidationError as exc:
        print(f"validation error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except OSError as exc:
        print(f"I/O error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
