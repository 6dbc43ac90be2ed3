"""Command-line interface: ``mixedpl fit | simulate | summary``."""
from __future__ import annotations

import argparse
import json
import os
import sys
import warnings
from dataclasses import replace
from pathlib import Path

from . import __version__
from .data import DataError, load_csv, write_csv
from .estimation import FitConfig, FitResult, fit
from .formula import FormulaError, parse_formula
from .model import ModelSpec, ParameterError, ParameterSet
from .report import render_report
from .simulate import SimConfig, SimulationError, simulate, toy_generator, toy_spec

EXIT_OK, EXIT_INPUT, EXIT_NOT_CONVERGED = 0, 2, 3


class InputError(Exception):
    pass


def _write(path: str | None, text: str) -> None:
    if path is None or path == "-":
        sys.stdout.write(text)
    else:
        Path(path).write_text(text, encoding="utf-8")


def _parse_rates(text: str | None, names: tuple[str, ...]) -> dict[str, float]:
    if not text:
        return {}
    parts = [p.strip() for p in text.split(",") if p.strip()]
    try:
        if all("=" in p for p in parts):
            rates = {k.strip(): float(v) for k, v in (p.split("=", 1) for p in parts)}
        elif len(parts) == 1:
            rates = {nm: float(parts[0]) for nm in names}
        elif len(parts) == len(names):
            rates = dict(zip(names, map(float, parts)))
        else:
            raise InputError(f"--missing-rate needs 1 or {len(names)} values, got {len(parts)}")
    except ValueError:
        raise InputError(f"cannot parse --missing-rate {text!r}") from None
    return rates


def cmd_fit(args) -> int:
    fspec = parse_formula(args.formula)
    types = [t for t in args.types.split(",") if t.strip()]
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        data, spec = load_csv(args.data, fspec, types, na_policy=args.na,
                              standardize_covariates=args.standardize)
        if args.threads > 1:
            warnings.warn("more than one thread gives results reproducible to tolerance, not bit for bit")
        if not fspec.intercept_suppressed and spec.ordinal_indices:
            warnings.warn("ordinal responses are fitted without intercepts; gaussian responses always get one")
        config = FitConfig(solver=args.solver, compute_se=args.se, threads=args.threads, seed=args.seed)
        result = fit(spec, data, config)
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    result = replace(result, formula=fspec.render())
    if args.out:
        _write(args.out, result.to_json(indent=2) + "\n")
    _write(args.report, render_report(result))
    if not result.converged:
        print(f"error: optimizer did not converge ({result.message})", file=sys.stderr)
        return EXIT_NOT_CONVERGED
    return EXIT_OK


def _load_sim_source(path: str) -> tuple[ModelSpec, ParameterSet, dict]:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
        spec = ModelSpec.from_dict(doc["spec"])
        params = ParameterSet.from_dict(doc["parameters"], spec)
    except (OSError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read parameters from {path}: {exc}") from None
    return spec, params, doc


def cmd_simulate(args) -> int:
    if args.toy == bool(args.params):
        raise InputError("give exactly one of --toy or --params")
    if args.toy:
        spec = toy_spec()
        n = 1000 if args.n is None else args.n
        rates = _parse_rates(args.missing_rate, spec.names)
        if n < 1:
            raise InputError(f"--n must be positive, got {n}")
        data = toy_generator(args.seed, n, rates)
    else:
        spec, params, doc = _load_sim_source(args.params)
        n = args.n if args.n is not None else doc.get("n")
        if n is None:
            raise InputError("--n is required unless the parameter file has an 'n' field")
        rates = _parse_rates(args.missing_rate, spec.names)
        data = simulate(SimConfig(spec, params, int(n), args.seed, rates))
    write_csv(args.out, data, spec)
    return EXIT_OK


def cmd_summary(args) -> int:
    try:
        result = FitResult.from_json(Path(args.input).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"cannot read fit result {args.input}: {exc}") from None
    _write(args.out, render_report(result))
    return EXIT_OK


def _bool_flag(parser, name: str, default: bool, help: str) -> None:
    parser.add_argument(f"--{name}", action=argparse.BooleanOptionalAction, default=default, help=help)


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="mixedpl", description="Pairwise-likelihood models for mixed ordinal and gaussian responses.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    f = sub.add_parser("fit", help="fit a model to a CSV file")
    f.add_argument("--data", required=True, help="input CSV")
    f.add_argument("--formula", required=True, help="e.g. 'y1 + y2 + z1 ~ 0 + X1 + X2'")
    f.add_argument("--types", required=True, help="comma list of ordinal|gaussian, one per response")
    f.add_argument("--na", choices=("fail", "pass"), default="fail", help="missing-response policy")
    f.add_argument("--solver", choices=("bfgs", "cg"), default="bfgs")
    _bool_flag(f, "se", True, "compute sandwich standard errors")
    _bool_flag(f, "standardize", True, "standardize covariates before fitting")
    f.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    f.add_argument("--seed", type=int, default=0)
    f.add_argument("--out", help="fit result JSON")
    f.add_argument("--report", help="text report (default: stdout)")
    f.set_defaults(func=cmd_fit)

    s = sub.add_parser("simulate", help="simulate a dataset to CSV")
    s.add_argument("--params", help="JSON with 'spec' and 'parameters' (a fit result works)")
    s.add_argument("--toy", action="store_true", help="use the built-in four-response toy model")
    s.add_argument("--n", type=int)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--missing-rate", help="one rate, one per response, or name=rate pairs")
    s.add_argument("--out", required=True)
    s.set_defaults(func=cmd_simulate)

    m = sub.add_parser("summary", help="render the report stored in a fit JSON")
    m.add_argument("--in", dest="input", required=True)
    m.add_argument("--out", help="text report (default: stdout)")
    m.set_defaults(func=cmd_summary)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 1) < 1:
        print("error: --threads must be at least 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.func(args)
    except (InputError, DataError, FormulaError, ParameterError, SimulationError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
