"""Command-line front end.

Exit codes: 0 success, 1 validation or parse failure, 2 runtime failure,
3 I/O failure.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import os
import sys

from . import __version__
from .errors import InconsistentParams, ParseError, RateNegative, TactsimError, ValidationError
from .model import (
    DriveParams,
    ExperimentalConstraints,
    effective_coeffs,
    solve_experimental_params,
    validate_regime,
)
from .runner import (
    run_scenario,
    run_sweep,
    write_record_json,
    write_series_csv,
    write_sweep_csv,
    write_sweep_json,
)
from .scenario import load_scenario

EXIT_OK = 0
EXIT_VALIDATION = 1
EXIT_RUNTIME = 2
EXIT_IO = 3


def _threads(args) -> int:
    if args.threads is not None:
        return args.threads
    env = os.environ.get("TACTSIM_THREADS")
    if env:
        try:
            return max(1, int(env))
        except ValueError:
            raise ValidationError(f"TACTSIM_THREADS={env!r} is not an integer") from None
    return 1


def _print_coeffs(sc, fmt: str):
    p = sc.drive_params()
    out = {}
    for mode in ("approx", "exact"):
        out[mode] = dataclasses.asdict(effective_coeffs(p, mode=mode))
    report = validate_regime(p, effective_coeffs(p, mode="approx"))
    out["regime"] = dataclasses.asdict(report)
    out["regime"]["passed"] = report.passed
    if fmt == "json":
        print(json.dumps(out, indent=2))
        return
    for mode in ("approx", "exact"):
        c = out[mode]
        print(f"[{mode}]")
        for key in ("A", "B", "c_z", "c_z_prime", "c_x", "c_y", "chi",
                    "delta_prime", "gamma_prime"):
            print(f"  {key:12s} = {c[key]:.6e}")
    print(f"[regime] threshold={report.threshold:g} passed={report.passed}")
    for name, val in report.eq_detuning_ratios.items():
        print(f"  detuning {name:24s} = {val:10.3f}")
    for name, val in report.eq_coupling_ratios.items():
        print(f"  coupling {name:24s} = {val:10.3f}")


def _emit_run(record, args):
    if args.out:
        if args.format == "json":
            write_record_json(args.out, record)
        else:
            write_series_csv(args.out, record)
        print(f"wrote {args.out}")
    summary = ", ".join(f"{k}={v:.6g}" for k, v in record.summary.items())
    print(f"scenario={record.scenario_hash} solver={record.solver} "
          f"wall={record.wall_time:.2f}s {summary}")
    for w in record.warnings:
        print(f"warning: {w}", file=sys.stderr)


def _emit_sweep(result, args):
    if args.out:
        if args.format == "json":
            write_sweep_json(args.out, result)
        else:
            write_sweep_csv(args.out, result)
        print(f"wrote {args.out}")
    for row in result.rows:
        if row["error"]:
            print(f"{result.axis}={row['value']:g}: ERROR {row['error']}")
        else:
            rest = ", ".join(
                f"{k}={v:.6g}" for k, v in row.items()
                if k not in ("axis", "value", "error") and v is not None
            )
            print(f"{result.axis}={row['value']:g}: {rest}")


def _cmd_solve_params(args):
    path = args.config
    with open(path, encoding="utf-8") as fh:
        doc = json.load(fh)
    known = {"start", "delta_splitting", "chi_target", "enforce_cz_zero",
             "enforce_cx_equals_cy", "fixed", "residual_tol", "max_iter"}
    unknown = doc.keys() - known
    if unknown:
        raise ValidationError(f"{path}: unknown key(s) {sorted(unknown)}")
    start = DriveParams(**doc.pop("start"))
    fixed = tuple(doc.pop("fixed", ()))
    constraints = ExperimentalConstraints(start=start, fixed=fixed, **doc)
    result = solve_experimental_params(constraints)
    out = {
        "params": dataclasses.asdict(result.params),
        "residuals": result.residuals,
        "coeffs": dataclasses.asdict(effective_coeffs(result.params)),
    }
    if args.format == "json":
        print(json.dumps(out, indent=2))
    else:
        for k, v in out["params"].items():
            print(f"  {k:13s} = {v:.10e}" if isinstance(v, float) else f"  {k:13s} = {v}")
        for k, v in out["residuals"].items():
            print(f"  residual {k:12s} = {v:.3e}")
        print(f"  chi = {out['coeffs']['chi']:.6e}")


def make_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tactsim", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    def add(name, help_text, needs_config=True, runs=False):
        p = sub.add_parser(name, help=help_text)
        if needs_config:
            p.add_argument("--config", required=True, help="scenario JSON file")
        p.add_argument("--format", choices=("csv", "json"), default=None)
        if runs:
            p.add_argument("--out", default=None, help="output file path")
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--threads", type=int, default=None,
                           help="worker count (default: TACTSIM_THREADS or 1)")
        return p

    add("coeffs", "print effective coefficients and the regime report")
    add("validate", "check a scenario file and print its hash")
    add("run", "execute a scenario and write its time series", runs=True)
    add("sweep", "execute a parameter sweep and write its summary", runs=True)
    add("solve-params", "fit drive parameters to coefficient targets")
    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = make_parser().parse_args(argv)
    try:
        if args.command == "version":
            print(__version__)
            return EXIT_OK
        if args.command == "solve-params":
            _cmd_solve_params(args)
            return EXIT_OK
        sc = load_scenario(args.config)
        if args.command == "validate":
            print(f"OK {sc.hash}")
            return EXIT_OK
        if args.command == "coeffs":
            _print_coeffs(sc, args.format or "text")
            return EXIT_OK
        fmt = args.format
        if fmt is None:
            fmt = (sc.output or {}).get("format", "csv")
        args.format = fmt
        if args.out is None and sc.output is not None:
            args.out = sc.output["path"]
        threads = _threads(args)
        if args.command == "run":
            _emit_run(run_scenario(sc, seed=args.seed, threads=threads), args)
        else:
            _emit_sweep(run_sweep(sc, seed=args.seed, threads=threads), args)
        return EXIT_OK
    except (ParseError, ValidationError, InconsistentParams, RateNegative,
            json.JSONDecodeError, TypeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return EXIT_IO
    except TactsimError as exc:
        print(f"runtime error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
