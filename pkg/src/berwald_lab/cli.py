"""Command-line front end: ``berwald-lab analyze | catalog | verify``."""

from __future__ import annotations

import argparse
import os
import sys
from pathlib import Path

from . import catalog, report, verify
from .expr import DomainError
from .finsler import InadmissibleError
from .mkropina import NumericalError, analyze
from .pseudo_riemann import ChartBoundaryError
from .specfile import SpecError, load_spec
from .tensor import SingularMatrixError

EXIT_OK = 0
EXIT_VERIFY_FAILED = 1
EXIT_SPEC = 2
EXIT_NUMERIC = 3

NUMERIC_ERRORS = (SingularMatrixError, DomainError, ChartBoundaryError, NumericalError, InadmissibleError,
                  ZeroDivisionError, OverflowError, FloatingPointError)


def _err(msg: str) -> None:
    print(f"berwald-lab: {msg}", file=sys.stderr)


def _emit(text: str, output: str | None) -> None:
    if output is None:
        sys.stdout.write(text)
    else:
        Path(output).write_text(text, encoding="utf-8")


def cmd_analyze(args) -> int:
    try:
        sf = load_spec(args.file)
        spec = sf.to_mkropina()
    except SpecError as e:
        _err(str(e))
        return EXIT_SPEC
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    try:
        rep = analyze(spec, sf.options(threads))
    except NUMERIC_ERRORS as e:
        _err(f"numerical failure: {type(e).__name__}: {e}")
        return EXIT_NUMERIC
    fmt = "json" if args.json else args.format
    text = report.to_json(rep, sf) if fmt == "json" else report.to_text(rep, sf)
    try:
        _emit(text, args.output)
    except OSError as e:
        _err(f"cannot write {args.output}: {e.strerror}")
        return EXIT_SPEC
    return EXIT_OK


def cmd_catalog(args) -> int:
    if args.action == "list":
        width = max(len(n) for n in catalog.names())
        for e in catalog.entries():
            print(f"{e.name:<{width}}  {e.description}")
        return EXIT_OK
    if args.name is None:
        _err(f"catalog {args.action} needs an entry name")
        return EXIT_SPEC
    try:
        entry = catalog.get(args.name)
    except catalog.UnknownEntryError as e:
        _err(e.args[0])
        return EXIT_SPEC
    if args.action == "export":
        sys.stdout.write(entry.export())
        return EXIT_OK
    sf = entry.specfile
    print(f"{entry.name}: {entry.description}")
    print(f"provenance: {entry.provenance}")
    print(f"coords: {' '.join(sf.coords)}   m = {sf.m!r}   simply_connected = {str(sf.simply_connected).lower()}")
    for k, v in sf.params.items():
        print(f"  {k} = {v!r}")
    print("metric a:")
    for (i, j), s in sorted(sf.metric.items()):
        print(f"  a[{sf.coords[i]} {sf.coords[j]}] = {s}")
    print("1-form b:")
    for i, s in sorted(sf.oneform.items()):
        print(f"  b[{sf.coords[i]}] = {s}")
    print("box: " + " ".join(f"{c}:[{lo}, {hi}]" for c, (lo, hi) in zip(sf.coords, sf.box)))
    print("expected:")
    for k, v in entry.expected.items():
        print(f"  {k} = {str(v).lower() if isinstance(v, bool) else v}")
    return EXIT_OK


def cmd_verify(args) -> int:
    names = args.suite or None
    unknown = [s for s in names or [] if s not in verify.SUITES]
    if unknown:
        _err(f"unknown suite {unknown[0]!r}; known: {', '.join(verify.SUITES)}")
        return EXIT_SPEC
    threads = args.threads if args.threads else (os.cpu_count() or 1)
    ctx = verify.Context(args.tol, seed=args.seed, threads=threads)
    try:
        results = verify.run(names, ctx=ctx)
    except NUMERIC_ERRORS as e:
        _err(f"numerical failure: {type(e).__name__}: {e}")
        return EXIT_NUMERIC
    print(verify.summary_table(results))
    failed = [r for r in results if not r.passed]
    if not failed:
        print("ALL PASS")
        return EXIT_OK
    first = failed[0].first_failure()
    detail = f"{failed[0].name}: {first.name}"
    if first.value is not None:
        detail += f" = {first.value:.3e} (tol {first.tol:.1e})"
    if first.detail:
        detail += f" [{first.detail}]"
    print(f"FAIL {detail}")
    return EXIT_VERIFY_FAILED


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="berwald-lab", description="Analyzer for m-Kropina Finsler metrics.")
    sub = p.add_subparsers(dest="command", required=True)

    a = sub.add_parser("analyze", help="analyze a spec file")
    a.add_argument("file")
    a.add_argument("--json", action="store_true", help="shorthand for --format json")
    a.add_argument("--format", choices=("text", "json"), default="text")
    a.add_argument("--output", "-o", help="write the report here instead of stdout")
    a.add_argument("--threads", type=int, default=0, help="worker threads (default: number of processors)")
    a.set_defaults(func=cmd_analyze)

    c = sub.add_parser("catalog", help="list, show or export built-in examples")
    c.add_argument("action", choices=("list", "show", "export"))
    c.add_argument("name", nargs="?")
    c.set_defaults(func=cmd_catalog)

    v = sub.add_parser("verify", help="run the built-in verification suites")
    v.add_argument("--suite", action="append", help="run only this suite (repeatable)")
    v.add_argument("--tol", type=float, help="override every suite tolerance")
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--threads", type=int, default=0)
    v.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "threads", 0) and args.threads < 0:
        _err("--threads must be positive")
        return EXIT_SPEC
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
