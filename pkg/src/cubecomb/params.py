"""The parameter cascade: level sequences, step functions and their iterates.

Level 0 is the trivial level (width 0, minor epsilon 1, delta 1, m 0). For a
level ``N >= 1`` with major ``ε = eps_major[N]`` and minor ``ϵ = eps_minor[N]``::

    sbar(k) = max{l : k/(l+1) * ϵ^2 * ε^l > 4}   if k ϵ^2 > 4, else 0
    stilde  = sbar iterated 2u times,  u = min{u : 2^u ϵ^2 >= 8}
    s       = stilde iterated 2v+1 times,  v = 2^(sum of earlier widths)

``sbar(k) < k`` for every ``k >= 1``, so each iterate reaches the fixed point
0 after at most ``k`` steps and long iteration counts collapse. The least
``m`` with ``s^(N l)(m) > 0`` is found through the inverse
``g(y) = min{k : sbar(k) >= y}``, whose iterates grow like a tower; when
they outgrow the exponent budget a :class:`CascadeOverflow` reports where.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

from .rational import format_rational, parse_rational

CASCADE_VERSION = 1
DEFAULT_EXPONENT_CAP = 1 << 16
DEFAULT_STEP_BUDGET = 10**6
DEFAULT_SCAN_BUDGET = 10**6


class CascadeError(ValueError):
    pass


class CascadeOverflow(ArithmeticError):
    """A faithful quantity is too large to represent; carries a sized report."""

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class IterationBudgetExceeded(CascadeOverflow):
    pass


# --------------------------------------------------------------------------
# the scalar step function and its inverse
# --------------------------------------------------------------------------


def sbar_value(k: int, eps_major: Fraction, eps_minor: Fraction) -> int:
    """Upward scan for ``sbar`` in integer arithmetic.

    ``l`` qualifies iff ``k a^2 c^l > 4 (l+1) b^2 d^l`` with ``ϵ = a/b`` and
    ``ε = c/d``; qualification is downward closed in ``l``.
    """
    k = int(k)
    a, b = eps_minor.numerator, eps_minor.denominator
    c, d = eps_major.numerator, eps_major.denominator
    if k * a * a <= 4 * b * b:
        return 0
    lhs, rhs = k * a * a, 4 * b * b
    l = 0
    while lhs * c > (l + 2) * rhs * d:
        lhs *= c
        rhs *= d
        l += 1
    return l


def sbar_inverse(y: int, eps_major: Fraction, eps_minor: Fraction, exponent_cap: int = DEFAULT_EXPONENT_CAP) -> int:
    """Smallest ``k`` with ``sbar(k) >= y``."""
    y = int(y)
    if y <= 0:
        return 0
    if y > exponent_cap:
        raise CascadeOverflow(
            f"inverse step needs eps_major^{y}; the exponent exceeds the cap {exponent_cap}",
            exponent=y,
        )
    a, b = eps_minor.numerator, eps_minor.denominator
    c, d = eps_major.numerator, eps_major.denominator
    # smallest k with k a^2 c^y > 4 (y+1) b^2 d^y
    num = 4 * (y + 1) * b * b * d**y
    den = a * a * c**y
    return num // den + 1


# --------------------------------------------------------------------------
# cascade data
# --------------------------------------------------------------------------


def _fractions(values) -> tuple[Fraction, ...]:
    return tuple(parse_rational(v) for v in values)


@dataclass(frozen=True)
class Cascade:
    """Finite prefix ``0..L`` of the level sequences.

    ``m`` and ``delta`` may be omitted, in which case they are derived (and a
    faithful cascade overflows). ``u`` may be supplied to run a toy regime;
    the validator flags any disagreement with the formula.
    """

    eps_major: tuple[Fraction, ...]
    eps_minor: tuple[Fraction, ...]
    widths: tuple[int, ...]
    m: Optional[tuple[int, ...]] = None
    delta: Optional[tuple[Fraction, ...]] = None
    u: Optional[tuple[int, ...]] = None

    def __post_init__(self):
        object.__setattr__(self, "eps_major", _fractions(self.eps_major))
        object.__setattr__(self, "eps_minor", _fractions(self.eps_minor))
        object.__setattr__(self, "widths", tuple(int(w) for w in self.widths))
        n = len(self.eps_major)
        if n < 1:
            raise CascadeError("a cascade needs at least level 0")
        for name in ("eps_minor", "widths"):
            if len(getattr(self, name)) != n:
                raise CascadeError(f"{name} has length {len(getattr(self, name))}, expected {n}")
        if self.m is not None:
            object.__setattr__(self, "m", tuple(int(x) for x in self.m))
            if len(self.m) != n:
                raise CascadeError(f"m has length {len(self.m)}, expected {n}")
        if self.delta is not None:
            object.__setattr__(self, "delta", _fractions(self.delta))
            if len(self.delta) != n:
                raise CascadeError(f"delta has length {len(self.delta)}, expected {n}")
        if self.u is not None:
            object.__setattr__(self, "u", tuple(int(x) for x in self.u))
            if len(self.u) != n:
                raise CascadeError(f"u has length {len(self.u)}, expected {n}")
        for i, e in enumerate(self.eps_minor):
            if i > 0 and not 0 < e < 1:
                raise CascadeError(f"eps_minor[{i}] = {e} must lie in (0, 1)")
        for i, e in enumerate(self.eps_major):
            if not 0 < e < 1:
                raise CascadeError(f"eps_major[{i}] = {e} must lie in (0, 1)")
        if any(w < 0 for w in self.widths):
            raise CascadeError("widths must be nonnegative")

    @property
    def depth(self) -> int:
        """Index of the last stored level."""
        return len(self.eps_major) - 1

    def check_level(self, N: int, allow_zero: bool = False) -> int:
        if not (0 if allow_zero else 1) <= N <= self.depth:
            raise CascadeError(f"level {N} outside 1..{self.depth}")
        return N

    def offset(self, N: int) -> int:
        """Number of coordinates before level ``N``."""
        return sum(self.widths[:N])

    def v(self, N: int) -> int:
        return 1 << self.offset(N)

    def l(self, N: int) -> int:
        out = 1
        for k in range(N):
            out *= self.v(k)
        return out

    def u_formula(self, N: int) -> int:
        e2 = self.eps_minor[N] ** 2
        u = 0
        while (1 << u) * e2 < 8:
            u += 1
        return u

    def u_of(self, N: int) -> int:
        return self.u[N] if self.u is not None else self.u_formula(N)

    # json -------------------------------------------------------------------
    def to_json_dict(self) -> dict:
        out = {
            "version": CASCADE_VERSION,
            "kind": "cascade",
            "eps_major": [format_rational(x) for x in self.eps_major],
            "eps_minor": [format_rational(x) for x in self.eps_minor],
            "widths": list(self.widths),
        }
        if self.m is not None:
            out["m"] = list(self.m)
        if self.delta is not None:
            out["delta"] = [format_rational(x) for x in self.delta]
        if self.u is not None:
            out["u"] = list(self.u)
        return out

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"

    @classmethod
    def from_json_dict(cls, data: dict) -> "Cascade":
        if data.get("version") != CASCADE_VERSION:
            raise CascadeError(f"version: expected {CASCADE_VERSION}, got {data.get('version')!r}")
        for key in ("eps_major", "eps_minor", "widths"):
            if key not in data:
                raise CascadeError(f"{key}: missing")
        return cls(
            data["eps_major"],
            data["eps_minor"],
            data["widths"],
            data.get("m"),
            data.get("delta"),
            data.get("u"),
        )

    @classmethod
    def loads(cls, text: str) -> "Cascade":
        return cls.from_json_dict(json.loads(text))


def load_bundled(name: str = "toy_cascade.json") -> Cascade:
    from importlib.resources import files

    return Cascade.loads(files("cubecomb").joinpath("data", name).read_text())


# --------------------------------------------------------------------------
# step functions per level
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class StepProfile:
    """The three step functions of one level.

    ``sbar`` defaults to the cascade's formula; a replacement callable turns
    the profile into a toy (``out_of_regime``) whose downstream results are
    still checked by the exhaustive verifiers.
    """

    N: int
    eps_major: Fraction
    eps_minor: Fraction
    u: int
    v: int
    l: int
    sbar_override: Optional[Callable[[int], int]] = field(default=None, compare=False)
    out_of_regime: bool = False

    @classmethod
    def from_cascade(
        cls,
        cascade: Cascade,
        N: int,
        sbar_override: Optional[Callable[[int], int]] = None,
        u: Optional[int] = None,
    ) -> "StepProfile":
        cascade.check_level(N)
        u_val = cascade.u_of(N) if u is None else int(u)
        oor = sbar_override is not None or u_val != cascade.u_formula(N)
        return cls(
            N,
            cascade.eps_major[N],
            cascade.eps_minor[N],
            u_val,
            cascade.v(N),
            cascade.l(N),
            sbar_override,
            oor,
        )

    def sbar(self, k: int) -> int:
        if k <= 0:
            return 0
        if self.sbar_override is not None:
            return int(self.sbar_override(int(k)))
        return sbar_value(k, self.eps_major, self.eps_minor)

    def sbar_steps(self, kind: str) -> int:
        """How many ``sbar`` applications one application of ``kind`` stands for."""
        if kind == "sbar":
            return 1
        if kind == "stilde":
            return 2 * self.u
        if kind == "s":
            return 2 * self.u * (2 * self.v + 1)
        raise ValueError(f"unknown step kind {kind!r}")

    def iterate_sbar(self, count: int, k: int, step_budget: int = DEFAULT_STEP_BUDGET) -> int:
        """``sbar`` applied ``count`` times; stops at the fixed point 0."""
        value = int(k)
        done = 0
        while done < count and value > 0:
            if done >= step_budget:
                raise IterationBudgetExceeded(
                    f"sbar iteration at level {self.N} still positive after {done} of "
                    f"{count} steps (budget {step_budget})",
                    steps=done,
                    requested=count,
                )
            nxt = self.sbar(value)
            if self.sbar_override is None and nxt >= value:  # pragma: no cover - formula guarantees decrease
                raise CascadeError("sbar failed to decrease")
            if nxt == value:
                # a toy step function with a positive fixed point
                return value
            value = nxt
            done += 1
        return value

    def iterate(self, kind: str, n: int, k: int, step_budget: int = DEFAULT_STEP_BUDGET) -> int:
        if n < 0:
            raise ValueError("n must be nonnegative")
        return self.iterate_sbar(n * self.sbar_steps(kind), k, step_budget)

    def depth_to_zero(self, k: int, step_budget: int = DEFAULT_STEP_BUDGET) -> Optional[int]:
        """Number of ``sbar`` steps until 0 (``None`` if a positive fixed point is hit)."""
        value = int(k)
        steps = 0
        while value > 0:
            if steps >= step_budget:
                raise IterationBudgetExceeded(
                    f"sbar orbit of {k} at level {self.N} longer than {step_budget}", steps=steps
                )
            nxt = self.sbar(value)
            if nxt == value:
                return None
            value = nxt
            steps += 1
        return steps

    def inverse(self, y: int, exponent_cap: int = DEFAULT_EXPONENT_CAP) -> int:
        """Smallest ``k`` with ``sbar(k) >= y`` (formula profiles only)."""
        if self.sbar_override is not None:
            raise CascadeError("the closed-form inverse applies to the formula step function only")
        return sbar_inverse(y, self.eps_major, self.eps_minor, exponent_cap)


def sbar(k: int, N: int, cascade: Cascade) -> int:
    cascade.check_level(N, allow_zero=True)
    if N == 0:
        return 0
    return sbar_value(k, cascade.eps_major[N], cascade.eps_minor[N])


def s_iterate(kind: str, n: int, k: int, N: int, cascade: Cascade, step_budget: int = DEFAULT_STEP_BUDGET) -> int:
    cascade.check_level(N, allow_zero=True)
    if n == 0:
        return int(k)
    if N == 0:
        return 0
    return StepProfile.from_cascade(cascade, N).iterate(kind, n, k, step_budget)


def s_on_function(h: Sequence[int], n: int, cascade: Cascade, kind: str = "s") -> list[int]:
    """Coordinatewise ``i -> s^(n)(h(i), i)``."""
    return [s_iterate(kind, n, x, i, cascade) for i, x in enumerate(h)]


# --------------------------------------------------------------------------
# derived m and delta
# --------------------------------------------------------------------------


def _p5_iterations(profile: StepProfile) -> int:
    return profile.N * profile.l * profile.sbar_steps("s")


def derive_m(
    N: int,
    cascade: Cascade,
    profile: Optional[StepProfile] = None,
    *,
    exponent_cap: int = DEFAULT_EXPONENT_CAP,
    scan_budget: int = DEFAULT_SCAN_BUDGET,
) -> int:
    """Least ``m`` with ``s^(N l_N)(m, N) > 0``."""
    profile = profile or StepProfile.from_cascade(cascade, N)
    total = _p5_iterations(profile)
    if profile.sbar_override is not None:
        return scan_m(profile, total, scan_budget)
    # s̄^(T)(m) > 0 iff m >= g^(T)(1)
    y = 1
    for i in range(total):
        if y > exponent_cap:
            raise CascadeOverflow(
                f"m_{N} overflows: the inverse iteration needs {total} steps but after {i} "
                f"the value already has {y.bit_length()} bits (exponent cap {exponent_cap})",
                level=N,
                iterations_needed=total,
                iterations_done=i,
                bits=y.bit_length(),
            )
        y = profile.inverse(y, exponent_cap)
    return y


def scan_m(profile: StepProfile, total: int, scan_budget: int = DEFAULT_SCAN_BUDGET) -> int:
    """Literal upward scan ``m = 1, 2, ...`` (the oracle for :func:`derive_m`)."""
    for m in range(1, scan_budget + 1):
        if profile.iterate_sbar(total, m) > 0:
            return m
    raise IterationBudgetExceeded(
        f"no m <= {scan_budget} has a positive iterate at level {profile.N}", scan_budget=scan_budget
    )


def delta_from_m(N: int, eps_major: Fraction, m: int) -> Fraction:
    return Fraction(1, 2 ** (N + 2)) * eps_major**m


def derive_m_delta(N: int, cascade: Cascade, profile: Optional[StepProfile] = None, **budgets) -> tuple[int, Fraction]:
    m = derive_m(N, cascade, profile, **budgets)
    return m, delta_from_m(N, cascade.eps_major[N], m)


def m_of(cascade: Cascade, N: int) -> int:
    if N == 0:
        return 0
    return cascade.m[N] if cascade.m is not None else derive_m(N, cascade)


def delta_of(cascade: Cascade, N: int) -> Fraction:
    if N == 0:
        return Fraction(1)
    if cascade.delta is not None:
        return cascade.delta[N]
    return delta_from_m(N, cascade.eps_major[N], m_of(cascade, N))


# --------------------------------------------------------------------------
# validation
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConditionResult:
    name: str
    status: str  # "pass" | "fail" | "unknown"
    first_violation: Optional[int] = None
    detail: str = ""

    @property
    def passed(self) -> bool:
        return self.status == "pass"


def _p4_holds(l: int, N: int, e_prev: Fraction, e_cur: Fraction) -> bool:
    ratio = e_prev / e_cur  # need 2^(l+N+2) < ratio
    exp = l + N + 2
    if exp > ratio.numerator.bit_length():
        return False
    return (1 << exp) < ratio


def validate_cascade(cascade: Cascade) -> dict[str, ConditionResult]:
    L = cascade.depth
    out: dict[str, ConditionResult] = {}

    bad = None
    if cascade.widths[0] != 0 or cascade.eps_minor[0] != 1:
        bad = 0
    elif cascade.m is not None and cascade.m[0] != 0:
        bad = 0
    elif cascade.delta is not None and cascade.delta[0] != 1:
        bad = 0
    out["level0"] = ConditionResult(
        "level0", "pass" if bad is None else "fail", bad, "width 0, eps_minor 1, delta 1, m 0 at level 0"
    )

    bad = next((i for i in range(L) if not 0 < cascade.eps_major[i + 1] < cascade.eps_major[i]), None)
    out["P1"] = ConditionResult("P1", "pass" if bad is None else "fail", None if bad is None else bad + 1)

    total = sum(cascade.eps_major, Fraction(0))
    out["P2"] = ConditionResult("P2", "pass" if total < Fraction(1, 2) else "fail", None, f"sum = {total}")

    bad = next(
        (N for N in range(1, L + 1) if not 0 < cascade.v(N) * cascade.eps_minor[N] <= cascade.eps_major[N]),
        None,
    )
    out["P3"] = ConditionResult("P3", "pass" if bad is None else "fail", bad)

    bad = next(
        (
            N
            for N in range(1, L + 1)
            if not _p4_holds(cascade.l(N), N, cascade.eps_minor[N - 1], cascade.eps_minor[N])
        ),
        None,
    )
    out["P4"] = ConditionResult("P4", "pass" if bad is None else "fail", bad)

    # P5 and P6 need m; an underivable m leaves them unknown
    ms: dict[int, int] = {}
    p5_status, p5_bad, p5_detail = "pass", None, ""
    for N in range(1, L + 1):
        try:
            derived = derive_m(N, cascade)
        except CascadeOverflow as exc:
            p5_status, p5_bad, p5_detail = "unknown", N, str(exc)
            if cascade.m is not None:
                ms[N] = cascade.m[N]
            break
        ms[N] = derived
        if cascade.m is not None and cascade.m[N] != derived:
            p5_status, p5_bad, p5_detail = "fail", N, f"stored m={cascade.m[N]}, derived {derived}"
            break
    if cascade.m is not None:
        ms = {N: cascade.m[N] for N in range(1, L + 1)}
    out["P5"] = ConditionResult("P5", p5_status, p5_bad, p5_detail)

    p6_status, p6_bad = "pass", None
    halving_status, halving_bad = "pass", None
    for N in range(1, L + 1):
        if N not in ms:
            p6_status = halving_status = "unknown"
            p6_bad = halving_bad = N
            break
        expected = delta_from_m(N, cascade.eps_major[N], ms[N])
        d = cascade.delta[N] if cascade.delta is not None else expected
        if d != expected and p6_bad is None:
            p6_status, p6_bad = "fail", N
        if not d <= Fraction(1, 2) * cascade.eps_major[N] ** ms[N] and halving_bad is None:
            halving_status, halving_bad = "fail", N
    out["P6"] = ConditionResult("P6", p6_status, p6_bad)
    out["delta_halving"] = ConditionResult("delta_halving", halving_status, halving_bad)

    bad = next((N for N in range(1, L + 1) if cascade.widths[N] < 1), None)
    out["P7"] = ConditionResult(
        "P7", "pass" if bad is None else "fail", bad, "levels occupy consecutive disjoint coordinate intervals"
    )

    if cascade.u is not None:
        bad = next((N for N in range(1, L + 1) if cascade.u[N] != cascade.u_formula(N)), None)
        out["u"] = ConditionResult(
            "u",
            "pass" if bad is None else "fail",
            bad,
            "" if bad is None else f"u={cascade.u[bad]} supplied, formula gives {cascade.u_formula(bad)} (toy regime)",
        )
    return out


# --------------------------------------------------------------------------
# log_s machinery
# --------------------------------------------------------------------------

UNBOUNDED = math.inf


def log_s_value(k: int, N: int, cascade: Cascade, profile: Optional[StepProfile] = None):
    """``max{j : s^(j l_N)(k, N) > 0}`` (0 when ``k == 0``; ``inf`` if never 0)."""
    if k <= 0:
        return 0
    if N == 0:
        return 0
    profile = profile or StepProfile.from_cascade(cascade, N)
    depth = profile.depth_to_zero(k)
    per = profile.l * profile.sbar_steps("s")
    if depth is None or per == 0:
        return UNBOUNDED
    # s^(j l)(k) > 0  iff  j * per < depth
    return (depth - 1) // per


@dataclass(frozen=True)
class LogsProfile:
    log_s: tuple
    f_minus: tuple[int, ...]
    trend_unbounded: bool
    nondecreasing: bool
    zero_remark_violations: tuple[int, ...]

    def i_f(self, n) -> Optional[int]:
        """Largest index ``k`` of the prefix with ``log_s(f)(k) <= n``."""
        hits = [k for k, x in enumerate(self.log_s) if x <= n]
        return hits[-1] if hits else None


def _f_minus(x: int, N: int, cascade: Cascade, target) -> int:
    """Least ``k`` with ``log_s(k, N) == target`` (0 if none)."""
    if target == UNBOUNDED or target < 0:
        return 0
    lo, hi = 0, x
    # log_s is nondecreasing in k: binary search the first k reaching target
    while lo < hi:
        mid = (lo + hi) // 2
        if log_s_value(mid, N, cascade) >= target:
            hi = mid
        else:
            lo = mid + 1
    return lo if log_s_value(lo, N, cascade) == target else 0


def logs_profile(f: Sequence[int], cascade: Cascade) -> LogsProfile:
    if len(f) > cascade.depth + 1:
        raise CascadeError("f is longer than the cascade prefix")
    logs = tuple(log_s_value(x, N, cascade) for N, x in enumerate(f))
    fm = tuple(_f_minus(x, N, cascade, logs[N] - 1) if logs[N] != UNBOUNDED else 0 for N, x in enumerate(f))
    nondecreasing = all(a <= b for a, b in zip(logs, logs[1:]))
    trend = nondecreasing and len(logs) > 1 and logs[-1] > logs[0]
    violations = tuple(N for N, x in enumerate(f) if logs[N] == 0 and x != 0)
    return LogsProfile(logs, fm, trend, nondecreasing, violations)


# --------------------------------------------------------------------------
# tail bound for the bad event
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class HTailResult:
    sum_bound: Fraction
    truncated_measure: Optional[Fraction]
    holds: Optional[bool]


def h_tail_bound(cascade: Cascade, n: int, window: int, densities: Optional[Sequence[Fraction]] = None) -> HTailResult:
    """``Σ_{k=n+1}^{n+window} (ε_k + δ_k)``, and with per-level densities the exact
    measure ``1 - Π density_k`` of the truncated bad event."""
    if window < 0 or n < 0 or n + window > cascade.depth:
        raise CascadeError(f"window {n + 1}..{n + window} outside the cascade prefix 0..{cascade.depth}")
    levels = range(n + 1, n + window + 1)
    bound = sum((cascade.eps_major[k] + delta_of(cascade, k) for k in levels), Fraction(0))
    if densities is None:
        return HTailResult(bound, None, None)
    if len(densities) != window:
        raise CascadeError(f"expected {window} densities, got {len(densities)}")
    prod = Fraction(1)
    for d in densities:
        prod *= parse_rational(d)
    measure = 1 - prod
    return HTailResult(bound, measure, measure <= bound)


def faithful_variant(cascade: Cascade) -> Cascade:
    """The same level data with ``u``, ``m`` and ``delta`` left to the formulas."""
    return Cascade(cascade.eps_major, cascade.eps_minor, cascade.widths)
