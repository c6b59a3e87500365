"""Refinement algorithms on one level and on block products.

The weight of a pattern ``g`` at level ``N`` under a distribution ``m`` on
``2^{I_N}`` is ``W(g) = total(m_{(C_N)^g})``; it is 0 when ``(C_N)^g`` is
empty. Four procedures are provided, each deterministic (the first candidate
in canonical order wins every choice) and each logging its choices to a
transcript:

``monotone_extend``  greedy one-point extensions pushing ``W`` down or up.
``stabilize``        extend until every small further extension keeps ``W``
                     above ``(1-ϵ)W(f)`` (or below ``(1+ϵ)W(f)``).
``balance``          bisection on ``W`` over ``u`` rounds of ``stabilize``.
``refine_product``   induction over the blocks of a product.

Every result is checked by exhaustive enumeration of the family it claims
to control; the check is the ground truth, whatever regime the parameters
are in.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from fractions import Fraction
from math import prod
from typing import Optional, Sequence

from .bitspace import CubeDomain, PartialPattern, SubsetC, count_extensions, enumerate_extensions, pattern_set
from .distrib import (
    BlockProduct,
    Distribution,
    collapse_prefix,
    mask,
    mass,
    project_last,
    restricted_total,
    slice_prefix,
    stats,
)
from .params import Cascade, StepProfile, m_of, delta_of
from .rational import format_rational, parse_rational
from .report import Check, Report, SchemaError, check_version, child, digest_check, field, seal

DEFAULT_EVAL_BUDGET = 10**7
OUTCOME_VERSION = 1


class RefinementError(RuntimeError):
    pass


class PreconditionError(RefinementError):
    pass


class BudgetError(RefinementError):
    pass


class StabilizeError(RefinementError):
    """No growth witness was found in a stabilization step.

    ``c_certified`` tells apart a set ``C_N`` whose independence was never
    certified (the step relies on it) from a genuine failure.
    """

    def __init__(self, message: str, c_certified: bool):
        prefix = "genuine failure" if c_certified else "precondition on C_N unverified"
        super().__init__(f"{prefix}: {message}")
        self.c_certified = c_certified


class PostconditionError(RefinementError):
    def __init__(self, message: str, report: "Report"):
        super().__init__(message)
        self.report = report


# --------------------------------------------------------------------------
# level context
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class TableStep:
    """Toy step function ``k -> table[min(k, len-1)]`` (serializable)."""

    table: tuple[int, ...]

    def __post_init__(self):
        object.__setattr__(self, "table", tuple(int(x) for x in self.table))
        if not self.table or self.table[0] != 0:
            raise ValueError("a step table must start with 0")
        if any(a > b for a, b in zip(self.table, self.table[1:])):
            raise ValueError("a step table must be nondecreasing")

    def __call__(self, k: int) -> int:
        return self.table[min(int(k), len(self.table) - 1)]


@dataclass(frozen=True)
class LevelContext:
    """Everything a single-level refinement needs about level ``N``."""

    C: SubsetC
    eps_major: Fraction
    eps_minor: Fraction
    delta: Fraction
    m_cap: int
    profile: StepProfile
    certified: bool = False

    @classmethod
    def from_cascade(
        cls,
        cascade: Cascade,
        N: int,
        C: SubsetC,
        *,
        sbar_table: Optional[Sequence[int]] = None,
        u: Optional[int] = None,
        m_cap: Optional[int] = None,
        certified: bool = False,
    ) -> "LevelContext":
        if C.domain.width != cascade.widths[N]:
            raise RefinementError(f"C has width {C.domain.width}, level {N} has width {cascade.widths[N]}")
        override = TableStep(tuple(sbar_table)) if sbar_table is not None else None
        profile = StepProfile.from_cascade(cascade, N, override, u)
        cap = m_of(cascade, N) if m_cap is None else int(m_cap)
        return cls(C, cascade.eps_major[N], cascade.eps_minor[N], delta_of(cascade, N), cap, profile, certified)

    @property
    def out_of_regime(self) -> bool:
        return self.profile.out_of_regime

    @property
    def domain(self) -> CubeDomain:
        return self.C.domain

    def sbar(self, k: int) -> int:
        return self.profile.sbar(k)

    def stilde(self, k: int, n: int = 1) -> int:
        return self.profile.iterate("stilde", n, k)

    def s(self, k: int) -> int:
        return self.profile.iterate("s", 1, k)

    def to_json_dict(self) -> dict:
        p = self.profile
        out = {
            "level": p.N,
            "width": self.C.domain.width,
            "bitset_hex": self.C.to_hex(),
            "certified": self.certified,
            "eps_major": format_rational(self.eps_major),
            "eps_minor": format_rational(self.eps_minor),
            "delta": format_rational(self.delta),
            "m_cap": self.m_cap,
            "u": p.u,
            "v": p.v,
            "l": p.l,
            "out_of_regime": p.out_of_regime,
        }
        if p.sbar_override is not None:
            out["sbar_table"] = list(p.sbar_override.table)
        return out

    @classmethod
    def from_json_dict(cls, d: dict, path: str = "level") -> "LevelContext":
        get = lambda key, kind: field(d, key, kind, path)  # noqa: E731
        width = get("width", "int")
        try:
            dom = CubeDomain(width)
            C = SubsetC.from_hex(dom, get("bitset_hex", "str"))
        except ValueError as exc:
            raise SchemaError(child(path, "bitset_hex"), str(exc)) from None
        override = None
        if "sbar_table" in d:
            try:
                override = TableStep(tuple(get("sbar_table", "list")))
            except (TypeError, ValueError) as exc:
                raise SchemaError(child(path, "sbar_table"), str(exc)) from None
        eps_major, eps_minor = get("eps_major", "rational"), get("eps_minor", "rational")
        profile = StepProfile(
            get("level", "int"),
            eps_major,
            eps_minor,
            get("u", "int"),
            get("v", "int"),
            get("l", "int"),
            override,
            get("out_of_regime", "bool"),
        )
        return cls(C, eps_major, eps_minor, get("delta", "rational"), get("m_cap", "int"), profile, get("certified", "bool"))


@dataclass(frozen=True)
class RefinementBudget:
    """Per-block budgets ``h0`` against the caps ``m_i``, and what a result used."""

    h0: tuple[int, ...]
    caps: tuple[int, ...]

    def check(self, F: Sequence[PartialPattern]) -> None:
        if not len(F) == len(self.h0) == len(self.caps):
            raise RefinementError("budget, caps and patterns need one entry per block")
        for i, (f, h, cap) in enumerate(zip(F, self.h0, self.caps)):
            if h < 0 or len(f) + h > cap:
                raise PreconditionError(f"block {i}: |dom F| + h0 = {len(f) + h} exceeds m = {cap}")
            if len(f) + h > f.domain.size:
                raise PreconditionError(f"block {i}: |dom F| + h0 = {len(f) + h} exceeds the {f.domain.size} coordinates")

    def used(self, F: Sequence[PartialPattern], F_star: Sequence[PartialPattern]) -> tuple[int, ...]:
        return tuple(new_points(g, f) for f, g in zip(F, F_star))


# --------------------------------------------------------------------------
# transcripts and reports
# --------------------------------------------------------------------------


def _jsonable(value):
    if isinstance(value, Fraction):
        return format_rational(value)
    if isinstance(value, PartialPattern):
        return [list(a) for a in value.assignments]
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    return value


class Transcript:
    def __init__(self):
        self.records: list[dict] = []

    def add(self, op: str, case: str, block: Optional[int] = None, point=None, bit=None, **totals) -> None:
        self.records.append(
            {
                "step": len(self.records),
                "op": op,
                "case": case,
                "block": block,
                "point": point,
                "bit": bit,
                "totals": _jsonable(totals),
            }
        )

    def __len__(self) -> int:
        return len(self.records)


def _log(transcript: Optional[Transcript], *args, **kwargs) -> None:
    if transcript is not None:
        transcript.add(*args, **kwargs)


def report_json(report: Report) -> list:
    return [
        {"name": c.name, "passed": c.passed, "checked": c.checked, "witness": _jsonable(c.witness), "detail": c.detail}
        for c in report.checks
    ]


# --------------------------------------------------------------------------
# weights
# --------------------------------------------------------------------------


def weight(m: Distribution, C: SubsetC, g: PartialPattern) -> Fraction:
    """``total(m_{(C)^g})``, or 0 for an empty pattern set."""
    return restricted_total(m, pattern_set(C, g).points())


def lift(d: Distribution, size: int) -> Distribution:
    """Extend a distribution on ``Y ⊆ range(size)`` to the whole cube so that
    its restriction back to ``Y`` (or any subset) is unchanged."""
    factor = Fraction(len(d.ground), size)
    weights = dict(d.items())
    return Distribution(tuple(range(size)), tuple(factor * weights.get(x, Fraction(0)) for x in range(size)))


def new_points(f: PartialPattern, base: PartialPattern) -> int:
    return len(f) - len(base)


def _check_extends(f: PartialPattern, base: PartialPattern, budget: int, what: str) -> None:
    if not base.issubpattern(f):
        raise RefinementError(f"{what} does not extend its input pattern")
    if new_points(f, base) > budget:
        raise RefinementError(f"{what} adds {new_points(f, base)} points, budget {budget}")


def _guard(count: int, budget: int, what: str) -> None:
    if count > budget:
        raise BudgetError(f"{what}: {count:.3e} evaluations exceed the budget {budget:.3e}")


# --------------------------------------------------------------------------
# one level
# --------------------------------------------------------------------------


def monotone_extend(
    m: Distribution,
    C: SubsetC,
    f: PartialPattern,
    k0: int,
    *,
    capacity: Optional[int] = None,
    transcript: Optional[Transcript] = None,
    block: Optional[int] = None,
) -> tuple[PartialPattern, PartialPattern]:
    """``(f0, f1)`` extending ``f`` by exactly ``k0`` points with
    ``W(f0) <= W(f) <= W(f1)``."""
    cap = C.domain.size if capacity is None else capacity
    if k0 < 0 or len(f) + k0 > cap or len(f) + k0 > C.domain.size:
        raise RefinementError(f"cannot extend a pattern of size {len(f)} by {k0} points (capacity {cap})")

    def run(up: bool) -> PartialPattern:
        h = f
        for _ in range(k0):
            taken = set(h.points)
            x = next(s for s in C.domain.points() if s not in taken)
            w0 = weight(m, C, h.extend([(x, 0)]))
            w1 = weight(m, C, h.extend([(x, 1)]))
            bit = (1 if w1 > w0 else 0) if up else (1 if w1 < w0 else 0)
            h = h.extend([(x, bit)])
            _log(transcript, "monotone_extend", "up" if up else "down", block, x, bit, w0=w0, w1=w1)
        return h

    return run(False), run(True)


def stabilize(
    m: Distribution,
    f: PartialPattern,
    k0: int,
    ctx: LevelContext,
    *,
    upper: bool = False,
    transcript: Optional[Transcript] = None,
    block: Optional[int] = None,
    budget: int = DEFAULT_EVAL_BUDGET,
) -> PartialPattern:
    """``f̃`` with at most ``k0 - sbar(k0)`` new points such that every ``g``
    extending ``f̃`` by at most ``sbar(k0)`` points has
    ``W(g) >= W(f)(1-ϵ)`` (or, with ``upper``, ``W(g) <= W(f)(1+ϵ)``)."""
    C, eps = ctx.C, ctx.eps_minor
    base = weight(m, C, f)
    if base < eps:
        raise PreconditionError(f"W(f) = {base} < eps_minor = {eps}")
    if len(f) + k0 > ctx.m_cap:
        raise PreconditionError(f"|dom f| + k0 = {len(f) + k0} exceeds m_N = {ctx.m_cap}")
    sb = ctx.sbar(k0)
    op = "stabilize_upper" if upper else "stabilize_lower"
    if sb == 0:
        _log(transcript, op, "delegate", block, W_f=base)
        f0, f1 = monotone_extend(m, C, f, k0, capacity=ctx.m_cap, transcript=transcript, block=block)
        return f0 if upper else f1

    limit_lo = base * (1 - eps)
    limit_hi = base * (1 + eps)
    bad = (lambda w: w > limit_hi) if upper else (lambda w: w < limit_lo)
    growth = eps * ctx.eps_major**sb
    max_steps = Fraction(k0, sb) - 2
    fn, n = f, 0
    while True:
        if new_points(fn, f) > k0 - sb:
            raise StabilizeError(
                f"after {n} steps the pattern used {new_points(fn, f)} points, more than k0 - sbar = {k0 - sb}",
                ctx.certified,
            )
        _guard(count_extensions(C.domain.size, len(fn), sb), budget, "stabilize case check")
        violator = next((h for h in enumerate_extensions(fn, sb) if bad(weight(m, C, h))), None)
        if violator is None:
            _log(transcript, op, "case1", block, steps=n, W=weight(m, C, fn))
            return fn
        if n >= max_steps:
            raise StabilizeError(
                f"step bound k0/sbar - 2 = {max_steps} reached without stabilizing", ctx.certified
            )
        # pad the violator to exactly sbar new points in the violating direction
        missing = len(fn) + sb - len(violator)
        lo, hi = monotone_extend(m, C, violator, missing, capacity=C.domain.size)
        h = hi if upper else lo
        D = [s for s in h.points if s not in set(fn.points)]
        own = tuple(h.as_dict()[s] for s in D)
        if upper:
            target = base * (1 - (n + 1) * growth / 2)
            good = lambda w: w <= target  # noqa: E731
        else:
            target = base * (1 + (n + 1) * growth / 2)
            good = lambda w: w >= target  # noqa: E731
        chosen = None
        for bits in itertools.product((0, 1), repeat=len(D)):
            if bits == own:
                continue
            cand = fn.extend(zip(D, bits))
            if good(weight(m, C, cand)):
                chosen = cand
                break
        if chosen is None:
            raise StabilizeError(
                f"no piece of the partition by {list(h.assignments)} reaches {target} at step {n}", ctx.certified
            )
        fn = chosen
        n += 1
        _log(transcript, op, "case2", block, steps=n, W=weight(m, C, fn), target=target)


@dataclass(frozen=True)
class BalanceResult:
    f_star: PartialPattern
    rounds: tuple[tuple[Fraction, Fraction], ...]
    report: Optional[Report]
    out_of_regime: bool


def _normalize_on(m: Distribution, Y: Sequence[int]) -> Distribution:
    """``alpha_{m_Y} * m`` on ``Y`` and 0 elsewhere (still a distribution)."""
    top = max((m(y) for y in Y), default=Fraction(0))
    if top == 0:
        return mask(m, ())
    a = 1 / (len(m.ground) * top)
    keep = set(Y)
    return Distribution(m.ground, tuple(v * a if x in keep else Fraction(0) for x, v in m.items()))


def balance(
    m: Distribution,
    f: PartialPattern,
    k0: int,
    ctx: LevelContext,
    *,
    transcript: Optional[Transcript] = None,
    block: Optional[int] = None,
    budget: int = DEFAULT_EVAL_BUDGET,
    verify: bool = True,
) -> BalanceResult:
    """``f*`` extending ``f`` by at most ``k0 - s̃(k0)`` points with
    ``W(f*)(1+2ϵ) >= W(g) >= W(f*)(1-2ϵ)`` and ``W(g) >= W(f)(1-2ϵ)`` for all
    ``g`` extending ``f*`` by at most ``s̃(k0)`` points."""
    C, eps = ctx.C, ctx.eps_minor
    Y = pattern_set(C, f).points()
    if not Y:
        raise PreconditionError("the pattern set of f is empty")
    mY_mass = mass(Distribution(tuple(Y), tuple(Fraction(len(m.ground), len(Y)) * m(y) for y in Y)))
    if mY_mass < 2 * eps:
        raise PreconditionError(f"mass of m on (C_N)^f is {mY_mass} < 2 eps_minor = {2 * eps}")
    if len(f) + k0 > ctx.m_cap:
        raise PreconditionError(f"|dom f| + k0 = {len(f) + k0} exceeds m_N = {ctx.m_cap}")

    mn = _normalize_on(m, Y)
    a = weight(mn, C, f)
    b = Fraction(1)
    _log(transcript, "balance", "start", block, a=a, b=b)
    fi = stabilize(mn, f, k0, ctx, transcript=transcript, block=block, budget=budget)
    rounds = [(a, b)]
    k_i = k0
    for i in range(ctx.profile.u):
        k_i = ctx.sbar(k_i)  # sbar^(i+1)(k0)
        c = weight(mn, C, fi)
        if abs(c - a) <= Fraction(1, 2 ** (i + 1)):
            b = c
            case = "upper"
        else:
            a = c
            case = "lower"
        fi = stabilize(mn, fi, k_i, ctx, upper=(case == "upper"), transcript=transcript, block=block, budget=budget)
        rounds.append((a, b))
        _log(transcript, "balance", case, block, round=i + 1, a=a, b=b, c=c)
    report = verify_balance(m, f, fi, k0, ctx, budget=budget) if verify else None
    if report is not None and not report.passed and not ctx.out_of_regime:
        raise PostconditionError("balance postcondition failed", report)
    return BalanceResult(fi, tuple(rounds), report, ctx.out_of_regime)


def verify_balance(
    m: Distribution, f: PartialPattern, f_star: PartialPattern, k0: int, ctx: LevelContext, *, budget: int = DEFAULT_EVAL_BUDGET
) -> Report:
    C, eps = ctx.C, ctx.eps_minor
    radius = ctx.stilde(k0)
    checks = []
    member = f.issubpattern(f_star) and new_points(f_star, f) <= k0 - radius
    checks.append(Check("membership", member, 1, list(f_star.assignments), f"radius {radius}"))
    count = count_extensions(C.domain.size, len(f_star), radius)
    _guard(count, budget, "balance verification")
    w_star = weight(m, C, f_star)
    w_f = weight(m, C, f)
    sandwich_bad = floor_bad = None
    for g in enumerate_extensions(f_star, radius):
        w = weight(m, C, g)
        if sandwich_bad is None and not (w_star * (1 + 2 * eps) >= w >= w_star * (1 - 2 * eps)):
            sandwich_bad = g
        if floor_bad is None and not (w >= w_f * (1 - 2 * eps)):
            floor_bad = g
        if sandwich_bad is not None and floor_bad is not None:
            break
    checks.append(Check("sandwich", sandwich_bad is None, count, sandwich_bad))
    checks.append(Check("floor", floor_bad is None, count, floor_bad))
    return Report(tuple(checks))


# --------------------------------------------------------------------------
# block products
# --------------------------------------------------------------------------


def _prod(values) -> Fraction:
    return prod(values, start=Fraction(1))


def mass_threshold(eps: Sequence[Fraction]) -> Fraction:
    """``2 Σ ϵ_i / Π (1 - 8 ϵ_i)``."""
    den = _prod(1 - 8 * e for e in eps)
    if den <= 0:
        return Fraction(10**9)  # unattainable: some 8ϵ_i >= 1
    return 2 * sum(eps, Fraction(0)) / den


@dataclass(frozen=True)
class ProductResult:
    F_star: tuple[PartialPattern, ...]
    U_star: tuple[int, ...]
    report: Optional[Report]
    out_of_regime: bool


def _pattern_total(m: Distribution, product: BlockProduct, F, n: int) -> Fraction:
    return restricted_total(m, product.pattern_set(F, 0, n))


def _prefix_product(product: BlockProduct, n: int) -> BlockProduct:
    return BlockProduct(product.sets[:n])


def refine_product(
    m: Distribution,
    product: BlockProduct,
    F: Sequence[PartialPattern],
    h0: Sequence[int],
    N0: int,
    levels: Sequence[LevelContext],
    eps_beyond: Fraction,
    *,
    transcript: Optional[Transcript] = None,
    budget: int = DEFAULT_EVAL_BUDGET,
    verify: bool = True,
) -> ProductResult:
    """Refine ``F`` on blocks ``[N0, n)`` of an ``n``-block product.

    ``levels[j]`` describes block ``j``; ``eps_beyond`` is the minor epsilon of
    the level following the last block, which enters the mass precondition.
    """
    n = product.nblocks
    if len(levels) != n or len(F) != n or len(h0) != n:
        raise RefinementError("levels, F and h0 need one entry per block")
    if not 0 <= N0 <= n:
        raise RefinementError(f"N0 = {N0} outside [0, {n}]")
    for j in range(n):
        if levels[j].C.domain.width != product.widths[j]:
            raise RefinementError(f"level context {j} does not match block {j}")
    RefinementBudget(tuple(h0), tuple(lv.m_cap for lv in levels)).check(F)
    if len(m.ground) != 1 << sum(product.widths):
        raise RefinementError("m must live on the full product cube")
    total = _pattern_total(m, product, F, n)
    eps_list = [lv.eps_minor for lv in levels[N0:]] + [parse_rational(eps_beyond)]
    need = mass_threshold(eps_list)
    if N0 < n and total < need:
        raise PreconditionError(f"total(m on (C)^F) = {total} < {need}")

    F_star, U_star = _refine(m, product, list(F), list(h0), N0, n, levels, transcript, budget)
    oor = any(lv.out_of_regime for lv in levels[N0:])
    report = verify_product(m, product, F, F_star, U_star, h0, N0, levels, budget=budget) if verify else None
    if report is not None and not report.passed and not oor:
        raise PostconditionError("refine_product conclusion failed", report)
    return ProductResult(tuple(F_star), tuple(U_star), report, oor)


def _refine(m, product: BlockProduct, F, h0, N0: int, n: int, levels, transcript, budget):
    if n == N0:
        _log(transcript, "refine_product", "base", n)
        return list(F), list(range(1 << sum(product.widths[:n])))
    sub = _prefix_product(product, n)
    last = n - 1
    ctx = levels[last]
    C, eps = ctx.C, ctx.eps_minor
    k0 = h0[last]
    size_last = C.domain.size
    # the recursion's own mass requirement (sum over the blocks present)
    need = mass_threshold([lv.eps_minor for lv in levels[N0:n]])
    got = _pattern_total(m, sub, F, n)
    if got < need:
        raise PreconditionError(f"step at {n} blocks: total {got} < {need}")

    mplus = project_last(m, sub, F)
    f_t = balance(lift(mplus, size_last), F[last], k0, ctx, transcript=transcript, block=last, budget=budget, verify=False).f_star
    _log(transcript, "refine_product", "marginal", last, W=weight(lift(mplus, size_last), C, f_t))

    w_n = sub.w(F, last)
    thr = 2 * eps / w_n
    prefixes = sub.pattern_set(F, 0, last)
    for i, s in enumerate(prefixes):
        radius = ctx.stilde(k0, 2 * i + 3)
        _guard(count_extensions(size_last, len(f_t), radius), budget, "prefix scan")
        chosen = None
        for g in enumerate_extensions(f_t, radius):
            Fg = F[:last] + [g]
            if not sub.pattern_set(Fg, last):
                continue
            if slice_prefix(m, sub, Fg, last, s).total >= thr:
                chosen = g
                break
        if chosen is None:
            _log(transcript, "refine_product", "prefix_small", last, s)
            continue
        k_t = k0 - new_points(chosen, F[last])
        sl = slice_prefix(m, sub, F[:last] + [chosen], last, s)
        f_t = balance(lift(sl, size_last), chosen, k_t, ctx, transcript=transcript, block=last, budget=budget, verify=False).f_star
        _log(transcript, "refine_product", "prefix_balanced", last, s, None, total=sl.total)

    F_n = F[:last] + [f_t]
    if last == 0:
        minus = {0: _pattern_total(m, sub, F_n, n)}
    else:
        minus = collapse_prefix(m, sub, F_n).weights
    U = [t for t in prefixes if minus[t] >= thr]
    _log(transcript, "refine_product", "threshold", last, None, None, kept=len(U), of=len(prefixes), thr=thr)
    prefix_cube = 1 << sum(product.widths[:last])
    kept = {t: minus[t] for t in U}
    m_star_on = Distribution(tuple(prefixes), tuple(kept.get(t, Fraction(0)) for t in prefixes))
    m_star = lift(m_star_on, prefix_cube)
    F_prev, V = _refine(m_star, product, F[:last], h0[:last], N0, last, levels, transcript, budget)
    keep = set(V) & set(U)
    off = product.offset(last)
    U_star = [x for x in range(1 << sum(product.widths[:n])) if (x & ((1 << off) - 1)) in keep]
    return F_prev + [f_t], U_star


def family(F_star: Sequence[PartialPattern], radii: Sequence[int], N0: int):
    """All ``G`` with ``G(i) = F*(i)`` for ``i < N0`` and ``G(i)`` extending
    ``F*(i)`` by at most ``radii[i]`` points otherwise, in canonical order."""
    per_block = [
        [F_star[i]] if i < N0 else list(enumerate_extensions(F_star[i], radii[i])) for i in range(len(F_star))
    ]
    return itertools.product(*per_block)


def verify_product(
    m: Distribution,
    product: BlockProduct,
    F: Sequence[PartialPattern],
    F_star: Sequence[PartialPattern],
    U_star: Sequence[int],
    h0: Sequence[int],
    N0: int,
    levels: Sequence[LevelContext],
    *,
    budget: int = DEFAULT_EVAL_BUDGET,
) -> Report:
    n = product.nblocks
    eps = [lv.eps_minor for lv in levels]
    radii = [levels[i].s(h0[i]) for i in range(n)]
    checks = []

    bad_block = None
    for i in range(n):
        limit = 0 if i < N0 else h0[i] - radii[i]
        if not F[i].issubpattern(F_star[i]) or new_points(F_star[i], F[i]) > limit:
            bad_block = i
            break
    checks.append(Check("membership", bad_block is None, n, bad_block, f"radii {radii}"))

    mU = mask(m, U_star)
    lhs = _pattern_total(mU, product, F_star, n)
    rhs = _pattern_total(m, product, F, n) * _prod(1 - 8 * e for e in eps[N0:n]) - sum(eps[N0 : n - 1], Fraction(0))
    checks.append(Check("mask_total", lhs >= rhs, 1, None, f"{lhs} >= {rhs}"))

    size = prod(count_extensions(levels[i].C.domain.size, len(F_star[i]), radii[i]) for i in range(N0, n))
    evaluations = size * sum(product.w(F_star, M0) for M0 in range(N0, n))
    _guard(evaluations, budget, "refine_product verification")

    factors = {M0: _prod(1 - 4 * e for e in eps[M0:n]) for M0 in range(N0, n)}
    star_slices: dict = {}
    witness = None
    checked = 0
    for G in family(F_star, radii, N0):
        G = list(G)
        G_set = product.pattern_set(G)
        for M0 in range(N0, n):
            for t in product.pattern_set(G, 0, M0):
                checked += 1
                left = _slice_total(mU, product, G, G_set, M0, t)
                key = (M0, t)
                if key not in star_slices:
                    star_slices[key] = _slice_total(mU, product, F_star, product.pattern_set(F_star), M0, t)
                if not left >= star_slices[key] * factors[M0]:
                    witness = {"G": [list(g.assignments) for g in G], "M0": M0, "t": t}
                    break
            if witness:
                break
        if witness:
            break
    checks.append(Check("slices", witness is None, checked, witness))
    return Report(tuple(checks))


def _slice_total(m: Distribution, product: BlockProduct, G, G_set, M0: int, t: int) -> Fraction:
    """``total((m_{(C)^G})^t)`` over the tail from block ``M0``."""
    if not G_set:
        return Fraction(0)
    off = product.offset(M0)
    low = (1 << off) - 1
    acc = sum((m(x) for x in G_set if x & low == t), Fraction(0))
    return Fraction(len(m.ground), len(G_set)) * acc


# --------------------------------------------------------------------------
# problems, outcomes and replay
# --------------------------------------------------------------------------


def _pattern_json(f: PartialPattern) -> list:
    return [list(a) for a in f.assignments]


def _pattern_from(dom: CubeDomain, data) -> PartialPattern:
    return PartialPattern(dom, tuple((int(p), int(b)) for p, b in data))


@dataclass(frozen=True)
class Problem:
    """A serializable refinement task: ``balance`` (one level) or ``product``."""

    kind: str
    levels: tuple[LevelContext, ...]
    weights: tuple[Fraction, ...]
    patterns: tuple[PartialPattern, ...]
    budgets: tuple[int, ...]
    N0: int = 0
    eps_beyond: Optional[Fraction] = None

    def distribution(self) -> Distribution:
        return Distribution(tuple(range(len(self.weights))), self.weights)

    def product(self) -> BlockProduct:
        return BlockProduct(tuple(lv.C for lv in self.levels))

    def to_json_dict(self) -> dict:
        out = {
            "kind": self.kind,
            "levels": [lv.to_json_dict() for lv in self.levels],
            "weights": [format_rational(w) for w in self.weights],
            "patterns": [_pattern_json(f) for f in self.patterns],
            "budgets": list(self.budgets),
            "N0": self.N0,
        }
        if self.eps_beyond is not None:
            out["eps_beyond"] = format_rational(self.eps_beyond)
        return out

    @classmethod
    def from_json_dict(cls, d: dict, path: str = "problem") -> "Problem":
        kind = field(d, "kind", "str", path)
        raw_levels = field(d, "levels", "list", path)
        levels = tuple(LevelContext.from_json_dict(x, child(child(path, "levels"), i)) for i, x in enumerate(raw_levels))
        weights = _rationals(field(d, "weights", "list", path), child(path, "weights"))
        patterns = _patterns(levels, field(d, "patterns", "list", path), child(path, "patterns"))
        budgets = field(d, "budgets", "list", path)
        if len(budgets) != len(levels) or not all(isinstance(b, int) and b >= 0 for b in budgets):
            raise SchemaError(child(path, "budgets"), "expected one nonnegative integer per level")
        N0 = field(d, "N0", "int", path)
        eb = field(d, "eps_beyond", "rational", path) if "eps_beyond" in d else None
        try:
            return cls(kind, levels, weights, patterns, tuple(budgets), N0, eb)
        except ValueError as exc:
            raise SchemaError(path, str(exc)) from None


def _rationals(values: list, path: str) -> tuple[Fraction, ...]:
    out = []
    for i, v in enumerate(values):
        if not isinstance(v, str):
            raise SchemaError(child(path, i), "rationals are stored as \"num/den\" strings")
        try:
            out.append(parse_rational(v))
        except ValueError as exc:
            raise SchemaError(child(path, i), str(exc)) from None
    return tuple(out)


def _patterns(levels, values: list, path: str) -> tuple[PartialPattern, ...]:
    if len(values) != len(levels):
        raise SchemaError(path, "expected one pattern per level")
    out = []
    for i, (lv, data) in enumerate(zip(levels, values)):
        try:
            out.append(_pattern_from(lv.C.domain, data))
        except (TypeError, ValueError) as exc:
            raise SchemaError(child(path, i), str(exc)) from None
    return tuple(out)


def parse_outcome(d: dict) -> tuple[Problem, tuple[PartialPattern, ...], Optional[tuple[int, ...]]]:
    check_version(d, OUTCOME_VERSION, "refinement")
    problem = Problem.from_json_dict(field(d, "problem", "dict"))
    result = field(d, "result", "dict")
    patterns = _patterns(problem.levels, field(result, "patterns", "list", "result"), "result.patterns")
    raw_mask = result.get("mask")
    if raw_mask is not None and not (isinstance(raw_mask, list) and all(isinstance(x, int) for x in raw_mask)):
        raise SchemaError("result.mask", "expected a list of integers or null")
    field(d, "transcript", "list")
    return problem, patterns, None if raw_mask is None else tuple(raw_mask)


@dataclass(frozen=True)
class RefinementOutcome:
    problem: Problem
    patterns: tuple[PartialPattern, ...]
    mask: Optional[tuple[int, ...]]
    transcript: tuple[dict, ...]
    report: Report
    out_of_regime: bool

    def to_json_dict(self) -> dict:
        return seal({
            "version": OUTCOME_VERSION,
            "kind": "refinement",
            "problem": self.problem.to_json_dict(),
            "result": {
                "patterns": [_pattern_json(f) for f in self.patterns],
                "mask": None if self.mask is None else list(self.mask),
                "out_of_regime": self.out_of_regime,
                "passed": self.report.passed,
            },
            "report": report_json(self.report),
            "transcript": list(self.transcript),
        })

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def solve(problem: Problem, *, budget: int = DEFAULT_EVAL_BUDGET) -> RefinementOutcome:
    """Run a problem; postcondition failures are recorded, not raised."""
    m = problem.distribution()
    tr = Transcript()
    if problem.kind == "balance":
        ctx = problem.levels[0]
        try:
            res = balance(m, problem.patterns[0], problem.budgets[0], ctx, transcript=tr, block=0, budget=budget)
            report = res.report
        except PostconditionError as exc:
            report = exc.report
            res = None
        f_star = res.f_star if res is not None else None
        if f_star is None:
            raise RefinementError(f"balance failed its postconditions: {report.failures()}")
        return RefinementOutcome(problem, (f_star,), None, tuple(tr.records), report, ctx.out_of_regime)
    if problem.kind == "product":
        if problem.eps_beyond is None:
            raise RefinementError("a product problem needs eps_beyond")
        res = refine_product(
            m,
            problem.product(),
            problem.patterns,
            problem.budgets,
            problem.N0,
            problem.levels,
            problem.eps_beyond,
            transcript=tr,
            budget=budget,
        )
        return RefinementOutcome(problem, res.F_star, res.U_star, tuple(tr.records), res.report, res.out_of_regime)
    raise RefinementError(f"unknown problem kind {problem.kind!r}")


def _first_difference(a, b, path: str) -> Optional[str]:
    if isinstance(a, dict) and isinstance(b, dict):
        for key in sorted(set(a) | set(b)):
            if key not in a or key not in b:
                return f"{path}.{key}"
            d = _first_difference(a[key], b[key], f"{path}.{key}")
            if d is not None:
                return d
        return None
    if isinstance(a, list) and isinstance(b, list):
        for i, (x, y) in enumerate(zip(a, b)):
            d = _first_difference(x, y, f"{path}[{i}]")
            if d is not None:
                return d
        return None if len(a) == len(b) else f"{path}[{min(len(a), len(b))}]"
    return None if a == b else path


def verify_refinement(outcome_data: dict, *, budget: int = DEFAULT_EVAL_BUDGET) -> Report:
    """Replay a stored outcome and re-run its exhaustive checks on the stored result."""
    problem, patterns, stored_mask = parse_outcome(outcome_data)
    m = problem.distribution()
    stored = outcome_data["result"]
    checks = [digest_check(outcome_data)]
    try:
        replay = solve(problem, budget=budget).to_json_dict()
        diff = _first_difference(replay["result"], stored, "result")
        if diff is None:
            diff = _first_difference(replay["transcript"], outcome_data["transcript"], "transcript")
        if diff is None:
            diff = _first_difference(replay["report"], outcome_data["report"], "report")
        checks.append(Check("replay", diff is None, 1, diff, "" if diff is None else "replayed outcome differs"))
    except (RefinementError, ValueError) as exc:
        checks.append(Check("replay", False, 1, None, str(exc)))
    if problem.kind == "balance":
        rep = verify_balance(m, problem.patterns[0], patterns[0], problem.budgets[0], problem.levels[0], budget=budget)
    else:
        if stored_mask is None:
            raise SchemaError("result.mask", "a product outcome needs a mask")
        rep = verify_product(
            m,
            problem.product(),
            problem.patterns,
            patterns,
            stored_mask,
            problem.budgets,
            problem.N0,
            problem.levels,
            budget=budget,
        )
    return Report(tuple(checks) + rep.checks)
