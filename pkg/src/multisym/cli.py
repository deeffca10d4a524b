"""Command-line interface: derive, constraints, noether, verify-paper, init."""

from __future__ import annotations

import argparse
import sys
import time
from pathlib import Path

from . import __version__
from .bundle import BundleError
from .constraints import ConstraintError
from .dsl import DslError, load_theory
from .exterior import ExteriorError
from .geometry import GeometryError
from .lifts import LiftError
from .linalg import InconsistentSystem
from .noether import NoetherError
from .reference import FIXTURES, fixture_text, run_checks
from .report import constraints_payload, derive_payload, envelope, noether_payload, render, verify_payload
from .session import SPACES, TheorySession
from .symkernel import KernelError, max_rewrite_depth

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DERIVATION = 2
EXIT_INCONSISTENT = 3
EXIT_VERIFICATION = 4

DERIVATION_ERRORS = (BundleError, ConstraintError, ExteriorError, GeometryError, KernelError, LiftError,
                     NoetherError, ArithmeticError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    """Argument parser that reports usage errors with the input exit code."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def _load(path: str):
    try:
        source = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc.strerror or exc}") from exc
    return load_theory(source), source


def _emit(report: dict, args) -> None:
    text = render(report, args.format)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
        print(f"report written to {args.out}", file=sys.stderr)
    else:
        sys.stdout.write(text)


def cmd_derive(args) -> int:
    theory, source = _load(args.file)
    session = TheorySession(theory)
    payload, assumptions = derive_payload(session, args.side)
    report = envelope("derive", payload, {"side": args.side}, theory, source, assumptions)
    _emit(report, args)
    return EXIT_OK


def cmd_constraints(args) -> int:
    theory, source = _load(args.file)
    session = TheorySession(theory)
    max_iter = session.max_iter if args.max_iter is None else args.max_iter
    if max_iter < 1:
        raise UsageError("--max-iter must be positive")
    result = session.constraint_report(args.side, max_iter)
    payload = constraints_payload(result)
    report = envelope("constraints", payload, {"side": args.side, "max_iter": max_iter}, theory, source,
                      list(theory.assumptions) + list(result.assumptions))
    _emit(report, args)
    return EXIT_OK


def cmd_noether(args) -> int:
    theory, source = _load(args.file)
    session = TheorySession(theory)
    if args.generator is None:
        generators = sorted(theory.generators)
    elif args.generator not in theory.generators:
        raise UsageError(f"unknown generator {args.generator!r}; declared: {', '.join(sorted(theory.generators))}")
    else:
        generators = [args.generator]
    payload, assumptions = noether_payload(session, generators, args.space)
    options = {"space": args.space, "generator": args.generator or "all"}
    report = envelope("noether", payload, options, theory, source, assumptions)
    _emit(report, args)
    return EXIT_OK


def cmd_verify_paper(args) -> int:
    started = time.perf_counter()

    def progress(result):
        if args.verbose:
            mark = "PASS" if result.passed else "FAIL"
            print(f"{mark} {result.name} ({result.seconds:.2f}s)", file=sys.stderr)

    sources = None
    if args.fixtures:
        directory = Path(args.fixtures)
        if not directory.is_dir():
            raise UsageError(f"{directory} is not a directory")
        sources = {name: (directory / f"{name}.thy").read_text(encoding="utf-8")
                   for name in FIXTURES if (directory / f"{name}.thy").is_file()}
    results = run_checks(args.filter, sources=sources, seed=args.seed, progress=progress)
    if not results:
        raise UsageError(f"no checks match filter {args.filter!r}")
    payload = verify_payload(results)
    options = {"filter": args.filter or "", "seed": args.seed, "fixtures": "custom" if sources else "built-in"}
    report = envelope("verify-paper", payload, options)
    _emit(report, args)
    print(f"verify-paper finished in {time.perf_counter() - started:.1f}s", file=sys.stderr)
    return EXIT_OK if payload["failed"] == 0 else EXIT_VERIFICATION


def cmd_init(args) -> int:
    target = Path(args.out or f"{args.example}.thy")
    if target.exists() and not args.force:
        raise UsageError(f"{target} exists; pass --force to overwrite")
    target.write_text(fixture_text(args.example), encoding="utf-8")
    print(f"wrote {target}", file=sys.stderr)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="multisym", description="Symbolic multisymplectic field theory toolkit.")
    parser.add_argument("--version", action="version", version=f"multisym {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def output_options(p):
        p.add_argument("--format", choices=("text", "json", "latex"), default="text")
        p.add_argument("--out", metavar="PATH", help="write the report to PATH instead of stdout")

    side = dict(choices=("lagrangian", "hamiltonian"), default="lagrangian")

    p = sub.add_parser("derive", help="forms, Legendre map, Hamiltonian and field equations")
    p.add_argument("file")
    p.add_argument("--side", **side)
    output_options(p)
    p.set_defaults(handler=cmd_derive)

    p = sub.add_parser("constraints", help="staged constraint algorithm")
    p.add_argument("file")
    p.add_argument("--side", **side)
    p.add_argument("--max-iter", type=int, default=None, dest="max_iter")
    output_options(p)
    p.set_defaults(handler=cmd_constraints)

    p = sub.add_parser("noether", help="lifts, symmetry verdicts and multimomentum maps")
    p.add_argument("file")
    p.add_argument("--generator", default=None, help="generator name; all generators when omitted")
    p.add_argument("--space", choices=SPACES, default="J1")
    output_options(p)
    p.set_defaults(handler=cmd_noether)

    p = sub.add_parser("verify-paper", help="run the built-in reference checks")
    p.add_argument("--filter", default=None, help="group name or check-name substring")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--fixtures", metavar="DIR", help="read NAME.thy overrides for the built-in examples from DIR")
    p.add_argument("--verbose", action="store_true", help="print per-check progress to stderr")
    output_options(p)
    p.set_defaults(handler=cmd_verify_paper)

    p = sub.add_parser("init", help="write a built-in example theory")
    p.add_argument("--example", choices=FIXTURES, required=True)
    p.add_argument("--out", metavar="PATH")
    p.add_argument("--force", action="store_true")
    p.set_defaults(handler=cmd_init)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        max_rewrite_depth()
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.handler(args)
    except (DslError, UsageError, UnicodeDecodeError) as exc:
        where = f"{args.file}:" if getattr(args, "file", None) else ""
        print(f"error: {where}{exc}", file=sys.stderr)
        return EXIT_INPUT
    except InconsistentSystem as exc:
        print(f"error: inconsistent theory: {exc}", file=sys.stderr)
        return EXIT_INCONSISTENT
    except DERIVATION_ERRORS as exc:
        print(f"error: derivation failed ({type(exc).__name__}): {exc}", file=sys.stderr)
        return EXIT_DERIVATION


if __name__ == "__main__":
    sys.exit(main())
