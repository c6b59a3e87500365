"""Command-line entry point.

Exit status: 0 when every check passes, 1 when a mathematical check fails,
2 on usage, schema or budget errors. Artifacts go to ``--out`` (or stdout)
and never contain timings; human-readable reports and timings go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from contextlib import contextmanager
from fractions import Fraction
from importlib import resources
from pathlib import Path
from typing import Optional

from . import __version__, chernoff, construct, norms, params, refine
from ._jit import backend
from .bitspace import CubeDomain, PartialPattern, SubsetC
from .distrib import BlockProduct
from .rational import RationalFormatError, format_rational, parse_rational
from .report import Check, Report, SchemaError, check_version, child, field

EXIT_PASS, EXIT_FAIL, EXIT_ERROR = 0, 1, 2


class UsageError(Exception):
    def __init__(self, code: str, message: str):
        super().__init__(message)
        self.code = code


def _err(msg: str) -> None:
    print(msg, file=sys.stderr)


@contextmanager
def _timed(label: str):
    t0 = time.perf_counter()
    yield
    _err(f"time {label}: {time.perf_counter() - t0:.3f} s")


def _rational(text: str) -> Fraction:
    try:
        return parse_rational(text)
    except RationalFormatError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _emit(text: str, out: Optional[str]) -> None:
    if out is None or out == "-":
        sys.stdout.write(text)
    else:
        Path(out).write_text(text, encoding="utf-8")
        _err(f"wrote {out}")


def _read_json(path: str) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise UsageError("io", str(exc)) from None
    except json.JSONDecodeError as exc:
        raise SchemaError("<root>", f"invalid JSON: {exc}") from None


def _bundled(name: str) -> str:
    return resources.files("cubecomb.data").joinpath(name).read_text(encoding="utf-8")


def _print_report(report: Report) -> None:
    for c in report.checks:
        line = f"{'PASS' if c.passed else 'FAIL'} {c.name} (checked {c.checked})"
        if not c.passed and c.witness is not None:
            line += f" witness={c.witness}"
        if c.detail:
            line += f" {c.detail}"
        print(line)


# --------------------------------------------------------------------------
# subcommands
# --------------------------------------------------------------------------


def cmd_construct(args) -> int:
    spec = construct.ConstructionSpec(
        CubeDomain(args.width), args.eps, args.delta, args.m, args.seed, args.max_attempts
    )
    _err(f"backend {backend()}, jobs {args.jobs}")
    try:
        with _timed("construct"):
            cert = construct.construct_certified(spec, jobs=args.jobs, budget=args.budget)
    except construct.ConstructionExhausted as exc:
        _err(f"fail[construct.exhausted]: {exc}")
        return EXIT_FAIL
    _emit(cert.dumps(), args.out)
    bridge = cert.worst_pattern.deviation < 2**spec.m * spec.delta
    _err(
        f"attempt {cert.attempt_used}: density {format_rational(cert.density)}, "
        f"worst set deviation {format_rational(cert.worst_set.deviation)} at {list(cert.worst_set.witness)}, "
        f"worst pattern deviation {format_rational(cert.worst_pattern.deviation)} "
        f"(below 2^m delta: {bridge})"
    )
    return EXIT_PASS


def cmd_verify(args) -> int:
    raw = Path(args.file).read_text(encoding="utf-8") if Path(args.file).exists() else None
    if raw is None:
        raise UsageError("io", f"no such file {args.file}")
    data = _read_json(args.file)
    kind = data.get("kind") if isinstance(data, dict) else None
    with _timed("verify"):
        if kind == "certificate":
            cert = construct.parse_certificate(data)
            roundtrip = cert.dumps() == raw
            report = construct.verify_certificate(cert, data, jobs=args.jobs, budget=args.budget)
        elif kind == "refinement":
            refine.parse_outcome(data)
            roundtrip = json.dumps(data, indent=2) + "\n" == raw
            report = refine.verify_refinement(data, budget=args.budget)
        else:
            raise SchemaError("kind", f"unknown artifact kind {kind!r}")
    report = Report((Check("roundtrip", roundtrip, 1, None, "parse and re-serialize is byte-identical"),) + report.checks)
    _print_report(report)
    print("VERIFIED" if report.passed else "REJECTED")
    return EXIT_PASS if report.passed else EXIT_FAIL


def cmd_params(args) -> int:
    text = Path(args.file).read_text(encoding="utf-8") if args.file else _bundled("toy_cascade.json")
    try:
        cascade = params.Cascade.loads(text)
    except (KeyError, TypeError, json.JSONDecodeError) as exc:
        raise SchemaError("<cascade>", str(exc)) from None
    results = params.validate_cascade(cascade)
    for name, res in results.items():
        line = f"{res.status.upper():7s} {name}"
        if res.first_violation is not None:
            line += f" first violation at level {res.first_violation}"
        if res.detail:
            line += f" ({res.detail})"
        print(line)
    if args.derive is not None:
        N = args.derive
        cascade.check_level(N)
        try:
            m = params.m_of(cascade, N)
            print(f"m_{N} = {m}")
            print(f"delta_{N} = {format_rational(params.delta_of(cascade, N))}")
        except params.CascadeOverflow as exc:
            print(f"m_{N}: overflow ({exc})")
        profile = params.StepProfile.from_cascade(cascade, N)
        print(f"u_{N} = {profile.u}, v_{N} = {profile.v}, l_{N} = {profile.l}")
        print("k\tsbar\tstilde\ts")
        for k in args.k_values:
            row = [str(k)]
            for kind in ("sbar", "stilde", "s"):
                try:
                    row.append(str(profile.iterate(kind, 1, k)))
                except params.CascadeOverflow:
                    row.append("budget")
            print("\t".join(row))
    core = [results[f"P{i}"] for i in range(1, 8)]
    return EXIT_PASS if all(r.passed for r in core) else EXIT_FAIL


def cmd_chernoff(args) -> int:
    spec = chernoff.BernoulliSpec.of(args.n, args.p, args.delta)
    bound = chernoff.tail_bound(spec)
    lower = chernoff.tail_bound_lower(spec)
    print(f"bound 2exp(-n delta^2/4) = {bound:.6g}")
    if args.empirical:
        with _timed("empirical"):
            freq = chernoff.empirical_tail(spec, args.trials, args.seed, jobs=args.jobs)
        print(f"empirical tail = {format_rational(freq)} (~{float(freq):.6g}) over {args.trials} trials")
        ok = freq <= lower
    else:
        with _timed("exact"):
            tail = chernoff.exact_tail(spec)
        print(f"exact tail ~ {float(tail):.6g}")
        ok = tail <= lower
    print("HOLDS" if ok else "VIOLATED")
    return EXIT_PASS if ok else EXIT_FAIL


def _load_problem(path: Optional[str]) -> refine.Problem:
    data = _read_json(path) if path else json.loads(_bundled("toy_product_problem.json"))
    check_version(data, 1, "refinement_problem")
    return refine.Problem.from_json_dict(field(data, "problem", "dict"))


def cmd_refine(args) -> int:
    problem = _load_problem(args.file)
    with _timed("refine"):
        outcome = refine.solve(problem, budget=args.budget)
    _emit(outcome.dumps(), args.out)
    for c in outcome.report.checks:
        _err(f"{'PASS' if c.passed else 'FAIL'} {c.name} (checked {c.checked})")
    if outcome.out_of_regime:
        _err("note: out-of-regime step profile; the exhaustive checks above are the ground truth")
    return EXIT_PASS if outcome.report.passed else EXIT_FAIL


def _load_norm_problem(data: dict):
    check_version(data, 1, "norm_problem")
    sets = []
    for i, s in enumerate(field(data, "sets", "list")):
        path = child("sets", i)
        try:
            dom = CubeDomain(field(s, "width", "int", path))
            sets.append(SubsetC.from_hex(dom, field(s, "bitset_hex", "str", path)))
        except ValueError as exc:
            if isinstance(exc, SchemaError):
                raise
            raise SchemaError(path, str(exc)) from None
    product = BlockProduct(tuple(sets))
    raw = field(data, "patterns", "list")
    if len(raw) != len(sets):
        raise SchemaError("patterns", "expected one pattern per block")
    try:
        F = [PartialPattern(C.domain, tuple((int(p), int(b)) for p, b in pat)) for C, pat in zip(sets, raw)]
    except (TypeError, ValueError) as exc:
        raise SchemaError("patterns", str(exc)) from None
    h = field(data, "h", "list")
    if len(h) != len(sets) or not all(isinstance(x, int) for x in h):
        raise SchemaError("h", "expected one integer per block")
    return product, F, h, field(data, "N", "int")


def cmd_norm(args) -> int:
    tree_text = Path(args.tree).read_text(encoding="utf-8") if args.tree else _bundled("toy_tree.txt")
    data = _read_json(args.file) if args.file else json.loads(_bundled("toy_norm_problem.json"))
    try:
        tree = norms.BlockTree.parse(tree_text)
    except norms.TreeError as exc:
        raise SchemaError("<tree>", str(exc)) from None
    product, F, h, N = _load_norm_problem(data)
    print("truncated norms are upper bounds on the untruncated norm (deeper M can only lower them)")
    print("M\tnorm\t~\tfamily\tskipped\twitness")
    with _timed("norm"):
        table = norms.norm_table(tree, product, F, h, N, budget=args.budget)
    for M, res in table:
        witness = [list(g.assignments) for g in res.witness]
        print(f"{M}\t{format_rational(res.value)}\t{float(res.value):.6g}\t{res.family_size}\t{res.skipped}\t{witness}")
    values = [res.value for _, res in table]
    ok = all(a >= b for a, b in zip(values, values[1:]))
    return EXIT_PASS if ok else EXIT_FAIL


# --------------------------------------------------------------------------
# parser
# --------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cubecomb", description="Finite translation-independence toolkit.")
    parser.add_argument("--version", action="version", version=f"cubecomb {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, jobs=True):
        p.add_argument("--budget", type=int, default=None, help="enumeration ceiling")
        if jobs:
            p.add_argument("--jobs", type=int, default=1)

    p = sub.add_parser("construct", help="sample and certify a set")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--eps", type=_rational, required=True)
    p.add_argument("--delta", type=_rational, required=True)
    p.add_argument("--m", type=int, required=True)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--max-attempts", type=int, default=20)
    p.add_argument("--out")
    common(p)
    p.set_defaults(func=cmd_construct, budget_default=construct.DEFAULT_SUBSET_BUDGET)

    p = sub.add_parser("verify", help="re-verify a certificate or refinement outcome")
    p.add_argument("file")
    common(p)
    p.set_defaults(func=cmd_verify, budget_default=construct.DEFAULT_SUBSET_BUDGET)

    p = sub.add_parser("params", help="validate a cascade and tabulate derived values")
    p.add_argument("--file")
    p.add_argument("--derive", type=int)
    p.add_argument("--k", dest="k_values", type=int, nargs="+", default=[1, 10, 100, 1000, 10**6])
    p.set_defaults(func=cmd_params, budget=None, budget_default=None)

    p = sub.add_parser("chernoff", help="compare the tail bound with the exact or empirical tail")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--p", type=_rational, required=True)
    p.add_argument("--delta", type=_rational, required=True)
    mode = p.add_mutually_exclusive_group()
    mode.add_argument("--exact", action="store_true", default=True)
    mode.add_argument("--empirical", action="store_true")
    p.add_argument("--trials", type=int, default=100000)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_chernoff, budget=None, budget_default=None)

    p = sub.add_parser("refine", help="run a refinement problem")
    p.add_argument("--file")
    p.add_argument("--out")
    common(p, jobs=False)
    p.set_defaults(func=cmd_refine, budget_default=refine.DEFAULT_EVAL_BUDGET)

    p = sub.add_parser("norm", help="truncated norm table of a block tree")
    p.add_argument("--tree")
    p.add_argument("--file")
    common(p, jobs=False)
    p.set_defaults(func=cmd_norm, budget_default=norms.DEFAULT_NORM_BUDGET)
    return parser


_ERROR_CODES = (
    (SchemaError, "schema"),
    (construct.BudgetError, "budget"),
    (refine.BudgetError, "budget"),
    (norms.NormBudgetError, "budget"),
    (params.CascadeOverflow, "overflow"),
    (refine.PreconditionError, "precondition"),
    (refine.RefinementError, "refinement"),
    (norms.TreeError, "tree"),
    (params.CascadeError, "cascade"),
    (chernoff.ChernoffError, "input"),
    (construct.SpecError, "input"),
    (ValueError, "input"),
)


def main(argv: Optional[list[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_PASS if exc.code == 0 else EXIT_ERROR
    if args.budget is None:
        args.budget = args.budget_default
    try:
        return args.func(args)
    except UsageError as exc:
        _err(f"error[{args.command}.{exc.code}]: {exc}")
        return EXIT_ERROR
    except Exception as exc:  # noqa: BLE001 - mapped to module-qualified codes
        for kind, code in _ERROR_CODES:
            if isinstance(exc, kind):
                _err(f"error[{args.command}.{code}]: {exc}")
                return EXIT_ERROR
        raise


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
