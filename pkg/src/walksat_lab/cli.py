"""Command-line entry point: ``walksat-lab <verb> [flags]``.

Exit status is 0 on success, 1 when a solve trial fails or a replay departs
from its expected trace, and 2 on bad input.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import asdict
from fractions import Fraction

from . import SWEEP_SCHEMA
from .formula import DimacsError
from .harness import (
    ExperimentConfig,
    ScriptError,
    bounds,
    density,
    drift,
    instrument,
    lazy_equivalence,
    load_choice_script,
    load_formula,
    replay,
    solve,
    sweep,
    sweep_csv,
)
from .pi_process import InvalidChoice, ProcessParams

VERBS = ("solve", "instrument", "sweep", "drift", "replay", "bounds", "lazy-equivalence")


def _fractions(text: str) -> list[Fraction]:
    try:
        vals = [Fraction(part.strip()) for part in text.split(",") if part.strip()]
    except (ValueError, ZeroDivisionError):
        raise argparse.ArgumentTypeError(f"not a number or list of numbers: {text!r}") from None
    if not vals:
        raise argparse.ArgumentTypeError("empty density list")
    return vals


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="walksat-lab", description="Walksat experiments on random k-CNF formulas.")
    p.add_argument("verb", choices=VERBS)
    p.add_argument("--k", type=int, default=5, help="clause width")
    p.add_argument("--n", type=int, default=1000, help="number of variables")
    dens = p.add_mutually_exclusive_group()
    dens.add_argument("--r", type=_fractions, help="clause density m/n (comma list for sweep)")
    dens.add_argument("--rho", type=_fractions, help="density as a multiple of 2^k/k (default 1/25)")
    p.add_argument("--trials", type=int, default=1)
    p.add_argument("--tmax", type=int, default=None, help="flip budget (default n)")
    p.add_argument("--cap", type=int, default=None, help="step cap for instrumented runs (default t_star)")
    p.add_argument("--seed", type=int, default=0, help="master seed")
    p.add_argument("--k1", type=int)
    p.add_argument("--k2", type=int)
    p.add_argument("--k3", type=int)
    p.add_argument("--lambda", dest="lam", type=int)
    p.add_argument("--epsilon", type=float)
    p.add_argument("--theta", type=float)
    p.add_argument("--rich-fraction", type=float)
    p.add_argument("--match-fraction", type=float)
    p.add_argument("--out", help="output file (default stdout)")
    p.add_argument("--format", choices=("csv", "json"), default=None)
    p.add_argument("--formula", help="DIMACS file to use instead of a generated formula")
    p.add_argument("--script", help="JSON choice script for replay")
    p.add_argument("--expected", help="expected (possibly partial) trace JSON for replay")
    p.add_argument("--occurrence-bias", type=float, default=1.0, help=argparse.SUPPRESS)
    return p


def _config(args: argparse.Namespace) -> ExperimentConfig:
    if args.r is not None:
        dens = tuple(density(args.k, r=r) for r in args.r)
    elif args.rho is not None:
        dens = tuple(density(args.k, rho=x) for x in args.rho)
    else:
        dens = (density(args.k),)
    overrides = {
        "k1": args.k1, "k2": args.k2, "k3": args.k3, "lam": args.lam, "epsilon": args.epsilon,
        "theta": args.theta, "rich_fraction": args.rich_fraction, "match_fraction": args.match_fraction,
    }
    return ExperimentConfig(
        mode=args.verb, k=args.k, n=args.n, densities=dens, trials=args.trials, t_max=args.tmax,
        cap=args.cap, seed=args.seed, overrides={k: v for k, v in overrides.items() if v is not None},
        formula_path=args.formula, script_path=args.script, expected_path=args.expected,
        occurrence_bias=args.occurrence_bias,
    )


def _emit(text: str, out: str | None) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _dump(doc) -> str:
    return json.dumps(doc, indent=2) + "\n"


def _replay(cfg: ExperimentConfig) -> tuple[int, str]:
    if not cfg.formula_path or not cfg.script_path:
        raise ScriptError("replay needs --formula and --script")
    f = load_formula(cfg.formula_path)
    with open(cfg.script_path, encoding="utf-8") as fh:
        script = load_choice_script(fh.read())
    expected = None
    if cfg.expected_path:
        with open(cfg.expected_path, encoding="utf-8") as fh:
            expected = json.load(fh)
    params = ProcessParams.for_instance(f.k, f.n, **cfg.overrides)
    doc, mismatch = replay(f, script, params, cfg.seed, expected)
    if mismatch is not None:
        print(f"trace mismatch at {mismatch}", file=sys.stderr)
        return 1, _dump(doc)
    return 0, _dump(doc)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    fmt = args.format or ("csv" if args.verb == "sweep" else "json")
    if fmt == "csv" and args.verb != "sweep":
        print("error: --format csv is only available for sweep", file=sys.stderr)
        return 2
    try:
        cfg = _config(args)
        status = 0
        if args.verb == "solve":
            status, doc = solve(cfg)
            text = _dump(doc)
        elif args.verb == "instrument":
            text = _dump(instrument(cfg))
        elif args.verb == "sweep":
            rows = sweep(cfg)
            text = sweep_csv(rows) if fmt == "csv" else _dump(
                {"schema": SWEEP_SCHEMA, "rows": [asdict(r) for r in rows]})
        elif args.verb == "drift":
            text = _dump(drift(cfg))
        elif args.verb == "bounds":
            text = _dump(bounds(cfg))
        elif args.verb == "lazy-equivalence":
            text = _dump(lazy_equivalence(cfg))
        else:
            status, text = _replay(cfg)
    except (ValueError, OSError, DimacsError, ScriptError, InvalidChoice) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    _emit(text, args.out)
    return status


if __name__ == "__main__":
    sys.exit(main())
