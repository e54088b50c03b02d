"""Command-line front end.

Usage::

    dshadow <verb> [--config PATH] [--seed N] [--out DIR] [--tol X] [--full]

Verbs: simulate, spectrum, dichotomy, shadow, perron, resonate, verify-all.
Exit codes: 0 success, 1 numeric failure (or a failed suite), 2 invalid input.
"""

from __future__ import annotations

import argparse
import json
import sys
import traceback

from dshadow.errors import ArgumentError, DimensionError, DomainError, DShadowError, ValidationError
from dshadow.scenario import TASKS, run, validate

EXIT_OK, EXIT_NUMERIC, EXIT_INVALID = 0, 1, 2
_INPUT_ERRORS = (ValidationError, DimensionError, DomainError, ArgumentError)


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="dshadow", description="Shadowing and hyperbolicity toolkit for delay difference equations.")
    ap.add_argument("verb", choices=TASKS, help="task to run")
    ap.add_argument("--config", help="scenario JSON file (optional for verify-all)")
    ap.add_argument("--seed", type=int, help="seed for all random draws (overrides the scenario)")
    ap.add_argument("--out", default=None, help="output directory (default: ./dshadow-<verb>)")
    ap.add_argument("--tol", type=float, help="numerical tolerance override")
    ap.add_argument("--full", action="store_true", help="include full residual tables where available")
    return ap


def _origin(exc: BaseException) -> str:
    tb = exc.__traceback__
    name = "dshadow"
    while tb is not None:
        mod = tb.tb_frame.f_globals.get("__name__", "")
        if mod.startswith("dshadow"):
            name = mod
        tb = tb.tb_next
    return name


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    doc = None
    try:
        if args.config:
            try:
                with open(args.config, encoding="utf-8") as fh:
                    doc = json.load(fh)
            except OSError as exc:
                raise ValidationError([("--config", f"cannot read {args.config}: {exc.strerror}")]) from None
            except json.JSONDecodeError as exc:
                raise ValidationError([("--config", f"invalid JSON: {exc.msg} at line {exc.lineno}")]) from None
        elif args.verb != "verify-all":
            raise ValidationError([("--config", f"required for {args.verb}")])
        seed = args.seed if args.seed is None or args.seed >= 0 else None
        if args.seed is not None and seed is None:
            raise ValidationError([("--seed", "must be a nonnegative integer")])
        scenario = validate(doc, task=args.verb, seed=seed, tol=args.tol)
    except ValidationError as exc:
        print("dshadow: invalid input:", file=sys.stderr)
        for path, msg in exc.fields:
            print(f"  {path}: {msg}", file=sys.stderr)
        return EXIT_INVALID

    out = args.out or f"dshadow-{args.verb}"
    try:
        record = run(scenario, out, full=args.full)
    except _INPUT_ERRORS as exc:
        print(f"dshadow: {args.verb} rejected by {_origin(exc)}: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except (DShadowError, ArithmeticError, ValueError, FloatingPointError) as exc:
        print(f"dshadow: {args.verb} failed in {_origin(exc)} ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except Exception:  # pragma: no cover - unexpected bug
        traceback.print_exc()
        return EXIT_NUMERIC
    print(f"{args.verb}: wrote {', '.join(record.result_files)} and manifest.json to {out}")
    if record.status != "ok":
        print(f"{args.verb}: some checks failed (see summary.json)", file=sys.stderr)
        return EXIT_NUMERIC
    return EXIT_OK
