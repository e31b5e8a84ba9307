"""Command-line entry point.

    subdiff simulate [options]
    subdiff verify {subordinator,pd,tail,mlt,occupation,rayknight,fracpde,laplace} [options]
    subdiff price {direct,decomposition} [options]

Exit codes: 0 success, 1 usage error, 2 a verification was rejected.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import sys

import numpy as np

from .experiments import (PRICE_METHODS, SCHEMA_VERSION, VERIFY, VERIFY_TARGETS, ExperimentConfig, UsageError,
                          run_price)
from .harness import TestReport
from .pathlab import simulate_time_changed_bm

EXIT_OK, EXIT_USAGE, EXIT_REJECTED = 0, 1, 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(message)


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".17g")
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if v is None:
        return ""
    return str(v)


def _json_value(v):
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        return f if math.isfinite(f) else format(f, ".17g")
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    return v


def flatten_row(row) -> dict:
    """Turn a TestReport or an object with to_row() into a flat mapping."""
    if hasattr(row, "to_row"):
        row = row.to_row()
    out = {}
    for k, v in dict(row).items():
        if isinstance(v, dict):
            for kk, vv in v.items():
                out[f"{k}.{kk}"] = vv
        elif isinstance(v, (list, tuple)):
            out[k] = ";".join(_fmt(x) for x in v)
        else:
            out[k] = v
    return out


def write_report(rows, fmt: str = "csv", path: str | None = None, columns=None) -> str:
    """Serialize rows as CSV (header plus fixed column order) or a JSON array.

    Floats carry 17 significant digits.  Every row is stamped with the schema
    version.  Returns the text and writes it to ``path`` when given.
    """
    flat = [flatten_row(r) for r in rows]
    if columns is None:
        columns = []
        for r in flat:
            for k in r:
                if k not in columns:
                    columns.append(k)
    columns = list(columns)
    if "schema_version" not in columns:
        columns.append("schema_version")
    for r in flat:
        r["schema_version"] = SCHEMA_VERSION
    if fmt == "csv":
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(columns)
        for r in flat:
            w.writerow([_fmt(r.get(k)) for k in columns])
        text = buf.getvalue()
    elif fmt == "json":
        objs = [{k: _json_value(r.get(k)) for k in columns} for r in flat]
        text = json.dumps(objs, indent=1, allow_nan=False) + "\n"
    else:
        raise UsageError(f"unknown format {fmt!r}")
    if path:
        with open(path, "w", newline="") as fh:
            fh.write(text)
    return text


def read_report(text: str, fmt: str = "csv") -> list[dict]:
    """Inverse of write_report up to types: CSV cells come back as strings."""
    if fmt == "json":
        return json.loads(text)
    return list(csv.DictReader(io.StringIO(text)))


PRICE_COLUMNS = ("value", "stderr", "n_paths", "method", "censored_fraction")


def _add_common(p):
    p.add_argument("--config", help="JSON configuration; flags override its values")
    p.add_argument("--seed", type=int)
    p.add_argument("--workers", type=int)
    p.add_argument("--format", choices=("csv", "json"))
    p.add_argument("--out")
    p.add_argument("--paths", type=int)
    p.add_argument("--inner-step", dest="inner_step", type=float)
    p.add_argument("--outer-step", dest="outer_step", type=float)
    p.add_argument("--nodes", type=int)
    p.add_argument("--order", type=int)
    p.add_argument("--exponent", choices=("stable", "drift", "driftPlusJumps"))
    p.add_argument("--tail", choices=("stable", "truncated_stable", "exponential", "unit_mass"))
    for name in ("c", "beta", "kappa", "sigma", "x", "L", "D", "T", "alpha", "start",
                 "payoff-center", "payoff-radius", "g-lo", "g-hi", "g-level"):
        p.add_argument(f"--{name}", dest=name.replace("-", "_"), type=float)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="subdiff", description="Subdiffusive processes: simulation, verification and pricing.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    p = sub.add_parser("simulate", help="simulate one time-changed Brownian path and emit its vertices")
    _add_common(p)
    p = sub.add_parser("verify", help="run an acceptance check and emit test reports")
    p.add_argument("target", choices=VERIFY_TARGETS)
    _add_common(p)
    p = sub.add_parser("price", help="price a down-and-in Parisian option")
    p.add_argument("method", choices=PRICE_METHODS)
    p.add_argument("--bypass", action="store_true", help="drop the time change (drift regression mode)")
    _add_common(p)
    return parser


def make_config(args) -> ExperimentConfig:
    base = ExperimentConfig.from_file(args.config) if args.config else {}
    skip = {"config", "command", "target", "method"}
    for k, v in vars(args).items():
        if k not in skip and v is not None and not (k == "bypass" and v is False):
            base[k] = v
    name = args.command
    if name != "simulate":
        name += "." + (args.target if name == "verify" else args.method)
    base["experiment"] = name
    return ExperimentConfig.from_dict(base).validate()


def _simulate(cfg: ExperimentConfig):
    tc = simulate_time_changed_bm(cfg.make_exponent(), cfg.T, cfg.step(1e-3), cfg.stream("simulate").generator())
    keep = tc.outer_times <= cfg.T
    rows = [{"t": float(t), "E": float(e), "value": float(v)}
            for t, e, v in zip(tc.outer_times[keep], tc.inner_times[keep], tc.values[keep])]
    return rows, ("t", "E", "value")


def dispatch(argv=None) -> int:
    parser = build_parser()
    argv = sys.argv[1:] if argv is None else list(argv)
    if not argv:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            parser.print_help(sys.stderr)
            return EXIT_USAGE
        cfg = make_config(args)
    except UsageError as exc:
        print(f"subdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, json.JSONDecodeError, TypeError, ValueError) as exc:
        print(f"subdiff: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    code = EXIT_OK
    if args.command == "simulate":
        rows, cols = _simulate(cfg)
    elif args.command == "verify":
        rows = VERIFY[args.target](cfg)
        cols = None
        if any(isinstance(r, TestReport) and r.rejected for r in rows):
            code = EXIT_REJECTED
    else:
        try:
            rows = [run_price(cfg, args.method)]
        except (ValueError, NotImplementedError) as exc:
            print(f"subdiff: error: {exc}", file=sys.stderr)
            return EXIT_USAGE
        cols = PRICE_COLUMNS
    try:
        text = write_report(rows, cfg.format, cfg.out, cols)
    except OSError as exc:
        print(f"subdiff: error: cannot write report: {exc}", file=sys.stderr)
        return EXIT_USAGE
    if not cfg.out:
        sys.stdout.write(text)
    return code


def main() -> None:
    sys.exit(dispatch())


if __name__ == "__main__":
    main()
