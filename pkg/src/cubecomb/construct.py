"""Seeded construction and exhaustive certification of translation-independent sets.

A candidate ``C`` includes each cube point independently with probability
``1 - eps``. It is certified when its density lies in
``[1-eps-delta, 1-eps+delta]`` and every nonempty ``X`` with ``|X| <= m``
satisfies ``| |⋂_{s∈X}(C+s)| / 2^w - (1-eps)^|X| | < delta``. The pattern
form of the same property is computed for the certificate as well.

Every comparison is made in exact rationals; floats only appear in the
success-probability estimate, which decides nothing.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass
from dataclasses import field as dc_field
from fractions import Fraction
from math import comb
from typing import Optional

import numpy as np

from . import kernels
from .bitspace import CubeDomain, PartialPattern, SubsetC, pattern_set
from .rational import RationalLike, format_rational, parse_rational
from .report import Check, Report, SchemaError, check_version, digest_check, field, seal

DEFAULT_M_CAP = 3
DEFAULT_CHECK_WIDTH_CAP = 12
DEFAULT_SUBSET_BUDGET = 10**8
CERTIFICATE_VERSION = 1


class BudgetError(RuntimeError):
    """An exhaustive enumeration would exceed the configured ceiling."""


class SpecError(ValueError):
    pass


class ConstructionExhausted(RuntimeError):
    def __init__(self, message: str, best: Optional["Candidate"]):
        super().__init__(message)
        self.best = best


@dataclass(frozen=True)
class ConstructionSpec:
    domain: CubeDomain
    eps: Fraction
    delta: Fraction
    m: int
    seed: int
    max_attempts: int = 20
    m_cap: int = dc_field(default=DEFAULT_M_CAP, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "eps", parse_rational(self.eps))
        object.__setattr__(self, "delta", parse_rational(self.delta))
        if not 0 < self.delta < self.eps < 1:
            raise SpecError(f"need 0 < delta < eps < 1, got delta={self.delta}, eps={self.eps}")
        if self.m < 1:
            raise SpecError("m must be at least 1")
        if self.m > self.m_cap:
            raise SpecError(f"m={self.m} exceeds the cap {self.m_cap}")
        if self.max_attempts < 1:
            raise SpecError("max_attempts must be at least 1")


@dataclass(frozen=True)
class DensityResult:
    passed: bool
    density: Fraction


@dataclass(frozen=True)
class SetCheckResult:
    passed: bool
    deviation: Fraction
    witness: tuple[int, ...]
    subsets_checked: int


@dataclass(frozen=True)
class PatternCheckResult:
    passed: bool
    deviation: Fraction
    witness: PartialPattern
    patterns_checked: int


@dataclass(frozen=True)
class Candidate:
    attempt: int
    sub_seed: int
    C: SubsetC
    density: Fraction
    worst_set: SetCheckResult


def sub_seed(seed: int, attempt: int) -> int:
    """Stable 63-bit seed for one attempt (independent of platform and hash salt)."""
    digest = hashlib.sha256(f"cubecomb:{int(seed)}:{int(attempt)}".encode()).digest()
    return int.from_bytes(digest[:8], "little") >> 1


def sample_candidate(domain: CubeDomain, eps: RationalLike, seed: int) -> SubsetC:
    eps = parse_rational(eps)
    if not 0 <= eps <= 1:
        raise SpecError(f"eps must lie in [0, 1], got {eps}")
    rng = np.random.Generator(np.random.PCG64(seed))
    num, den = eps.numerator, eps.denominator
    if den < 2**62:
        draws = rng.integers(0, den, size=domain.size, dtype=np.int64)
        mask = draws < den - num
    else:  # pragma: no cover - exotic denominators
        mask = rng.random(domain.size) < float(1 - eps)
    return SubsetC(domain, mask)


def density(C: SubsetC) -> Fraction:
    return Fraction(C.cardinality, C.domain.size)


def check_density(C: SubsetC, eps: RationalLike, delta: RationalLike) -> DensityResult:
    eps, delta = parse_rational(eps), parse_rational(delta)
    d = density(C)
    return DensityResult(1 - eps - delta <= d <= 1 - eps + delta, d)


def _enumeration_size(n: int, m: int, translation_invariant: bool) -> int:
    if translation_invariant:
        return sum(comb(n - 1, k - 1) for k in range(1, min(m, n) + 1))
    return sum(comb(n, k) for k in range(1, min(m, n) + 1))


def _guard(C: SubsetC, m: int, budget: int, width_cap: int, translation_invariant: bool) -> int:
    n = C.domain.size
    size = _enumeration_size(n, m, translation_invariant)
    if C.domain.width > width_cap:
        raise BudgetError(
            f"exhaustive checks are capped at width {width_cap}; width {C.domain.width} "
            f"would enumerate {size:.3e} subsets of {n} points"
        )
    if size > budget:
        raise BudgetError(
            f"enumeration of {size:.3e} subsets (|X| <= {m} in 2^{C.domain.width}) "
            f"exceeds the budget {budget:.3e}"
        )
    return size


def _rank_stop(n: int, k: int, translation_invariant: bool) -> int:
    # combinations starting with point 0 occupy the first comb(n-1, k-1) ranks
    return comb(n - 1, k - 1) if translation_invariant else comb(n, k)


def check_independence_sets(
    C: SubsetC,
    eps: RationalLike,
    delta: RationalLike,
    m: int,
    *,
    jobs: int = 1,
    budget: int = DEFAULT_SUBSET_BUDGET,
    width_cap: int = DEFAULT_CHECK_WIDTH_CAP,
    translation_invariant: bool = False,
    backend: Optional[str] = None,
) -> SetCheckResult:
    """Maximum over nonempty ``|X| <= m`` of ``| |⋂(C+s)|/2^w - (1-eps)^|X| |``.

    With ``translation_invariant`` only sets containing the point 0 are swept;
    the maximum is unchanged because the intersection translates with ``X``.
    """
    eps, delta = parse_rational(eps), parse_rational(delta)
    size = _guard(C, m, budget, width_cap, translation_invariant)
    n = C.domain.size
    best_dev, best_key, best_witness = Fraction(-1), None, ()
    for k in range(1, min(m, n) + 1):
        stop = _rank_stop(n, k, translation_invariant)
        parts = kernels.run_sharded(
            lambda a, b: kernels.set_extremes(C.mask, k, a, b, backend=backend),
            kernels.shard_ranges(0, stop, jobs),
            jobs,
        )
        lo, lo_rank, hi, hi_rank = kernels.merge_scalar_extremes(parts)
        target = (1 - eps) ** k
        for count, rank in ((lo, lo_rank), (hi, hi_rank)):
            dev = abs(Fraction(count, n) - target)
            key = (k, rank)
            if dev > best_dev or (dev == best_dev and key < best_key):
                best_dev, best_key = dev, key
                best_witness = kernels.unrank_combination(rank, n, k)
    return SetCheckResult(best_dev < delta, best_dev, best_witness, size)


def check_independence_patterns(
    C: SubsetC,
    eps: RationalLike,
    delta: RationalLike,
    m: int,
    *,
    jobs: int = 1,
    budget: int = DEFAULT_SUBSET_BUDGET,
    width_cap: int = DEFAULT_CHECK_WIDTH_CAP,
    backend: Optional[str] = None,
) -> PatternCheckResult:
    """Maximum over patterns ``f`` with ``|dom f| <= m`` of
    ``| |(C)^f| / 2^w - (1-eps)^{m0} eps^{m1} |``.
    """
    eps, delta = parse_rational(eps), parse_rational(delta)
    _guard(C, m, budget, width_cap, False)
    n = C.domain.size
    # f = ∅ has ratio 1 and target 1
    best_dev = Fraction(0)
    best_key = (0, 0, ())
    best_witness = PartialPattern(C.domain)
    checked = 1
    for k in range(1, min(m, n) + 1):
        npat = 1 << k
        checked += comb(n, k) * npat
        parts = kernels.run_sharded(
            lambda a, b: kernels.pattern_extremes(C.mask, k, a, b, backend=backend),
            kernels.shard_ranges(0, comb(n, k), jobs),
            jobs,
        )
        lo, lo_rank, hi, hi_rank = kernels.merge_pattern_extremes(parts, npat)
        for b in range(npat):
            bits = tuple((b >> j) & 1 for j in range(k))
            ones = sum(bits)
            target = (1 - eps) ** (k - ones) * eps**ones
            for count, rank in ((lo[b], lo_rank[b]), (hi[b], hi_rank[b])):
                dev = abs(Fraction(count, n) - target)
                key = (k, rank, bits)
                if dev > best_dev or (dev == best_dev and key < best_key):
                    best_dev, best_key = dev, key
                    pts = kernels.unrank_combination(rank, n, k)
                    best_witness = PartialPattern(C.domain, tuple(zip(pts, bits)))
    return PatternCheckResult(best_dev < delta, best_dev, best_witness, checked)


def set_deviation(C: SubsetC, eps: RationalLike, X) -> Fraction:
    """Deviation of one set ``X``; the direct oracle for a reported witness."""
    eps = parse_rational(eps)
    inter = np.ones(C.domain.size, dtype=np.bool_)
    idx = np.arange(C.domain.size)
    for s in X:
        inter &= C.mask[idx ^ s]
    return abs(Fraction(int(inter.sum()), C.domain.size) - (1 - eps) ** len(set(X)))


def pattern_deviation(C: SubsetC, eps: RationalLike, f: PartialPattern) -> Fraction:
    eps = parse_rational(eps)
    ratio = Fraction(pattern_set(C, f).cardinality, C.domain.size)
    return abs(ratio - (1 - eps) ** f.m0 * eps**f.m1)


def success_probability_lower_bound(width: int, m: int, delta: RationalLike) -> float:
    """``1 - 2^{w (m+1)^2} e^{-2^{w-m-2} delta^2}`` evaluated in log space, clamped to ``[0, 1]``."""
    delta = float(parse_rational(delta))
    log_term = width * (m + 1) ** 2 * math.log(2) - math.ldexp(1.0, width - m - 2) * delta * delta
    if log_term >= 0:
        return 0.0
    return max(0.0, min(1.0, -math.expm1(log_term)))


# --------------------------------------------------------------------------
# certificates
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Certificate:
    spec: ConstructionSpec
    attempt_used: int
    sub_seed: int
    C: SubsetC
    density: Fraction
    worst_set: SetCheckResult
    worst_pattern: PatternCheckResult

    def to_json_dict(self) -> dict:
        return seal({
            "version": CERTIFICATE_VERSION,
            "kind": "certificate",
            "width": self.spec.domain.width,
            "eps": format_rational(self.spec.eps),
            "delta": format_rational(self.spec.delta),
            "m": self.spec.m,
            "seed": self.spec.seed,
            "max_attempts": self.spec.max_attempts,
            "attempt": self.attempt_used,
            "sub_seed": self.sub_seed,
            "bitset_hex": self.C.to_hex(),
            "density": format_rational(self.density),
            "worst_set": {
                "deviation": format_rational(self.worst_set.deviation),
                "witness": list(self.worst_set.witness),
            },
            "worst_pattern": {
                "deviation": format_rational(self.worst_pattern.deviation),
                "witness": [list(a) for a in self.worst_pattern.witness.assignments],
            },
        })

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), indent=2) + "\n"


def parse_certificate(d: dict) -> Certificate:
    """Rebuild a certificate from its JSON form; ``SchemaError`` names the bad field."""
    check_version(d, CERTIFICATE_VERSION, "certificate")
    width = field(d, "width", "int")
    try:
        domain = CubeDomain(width)
        spec = ConstructionSpec(
            domain,
            field(d, "eps", "rational"),
            field(d, "delta", "rational"),
            field(d, "m", "int"),
            field(d, "seed", "int"),
            field(d, "max_attempts", "int"),
        )
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError("<spec>", str(exc)) from None
    try:
        C = SubsetC.from_hex(domain, field(d, "bitset_hex", "str"))
    except ValueError as exc:
        if isinstance(exc, SchemaError):
            raise
        raise SchemaError("bitset_hex", str(exc)) from None
    ws = field(d, "worst_set", "dict")
    witness = field(ws, "witness", "list", "worst_set")
    if not all(isinstance(x, int) and not isinstance(x, bool) for x in witness):
        raise SchemaError("worst_set.witness", "expected a list of integers")
    wp = field(d, "worst_pattern", "dict")
    raw = field(wp, "witness", "list", "worst_pattern")
    try:
        pattern = PartialPattern(domain, tuple((int(p), int(b)) for p, b in raw))
    except (TypeError, ValueError) as exc:
        raise SchemaError("worst_pattern.witness", str(exc)) from None
    dev_set = field(ws, "deviation", "rational", "worst_set")
    dev_pat = field(wp, "deviation", "rational", "worst_pattern")
    return Certificate(
        spec,
        field(d, "attempt", "int"),
        field(d, "sub_seed", "int"),
        C,
        field(d, "density", "rational"),
        SetCheckResult(dev_set < spec.delta, dev_set, tuple(witness), 0),
        PatternCheckResult(dev_pat < spec.delta, dev_pat, pattern, 0),
    )


def verify_certificate(
    cert: Certificate,
    data: Optional[dict] = None,
    *,
    jobs: int = 1,
    budget: int = DEFAULT_SUBSET_BUDGET,
    width_cap: int = DEFAULT_CHECK_WIDTH_CAP,
) -> Report:
    """Replay the seeded sample and recompute every recorded quantity."""
    spec = cert.spec
    checks = [digest_check(data)] if data is not None else []
    attempt_ok = 0 <= cert.attempt_used < spec.max_attempts
    checks.append(Check("attempt", attempt_ok, 1, cert.attempt_used))
    expected_seed = sub_seed(spec.seed, cert.attempt_used)
    checks.append(Check("sub_seed", expected_seed == cert.sub_seed, 1, cert.sub_seed, f"expected {expected_seed}"))
    replayed = sample_candidate(spec.domain, spec.eps, expected_seed)
    diff = np.flatnonzero(replayed.mask != cert.C.mask)
    checks.append(
        Check("bitset", diff.size == 0, spec.domain.size, int(diff[0]) if diff.size else None, "first differing point")
    )
    dens = check_density(cert.C, spec.eps, spec.delta)
    checks.append(
        Check("density", dens.passed and dens.density == cert.density, 1, format_rational(dens.density))
    )
    sets = check_independence_sets(
        cert.C, spec.eps, spec.delta, spec.m, jobs=jobs, budget=budget, width_cap=width_cap
    )
    same = sets.deviation == cert.worst_set.deviation and sets.witness == cert.worst_set.witness
    checks.append(
        Check("sets", sets.passed and same, sets.subsets_checked, list(sets.witness), format_rational(sets.deviation))
    )
    pats = check_independence_patterns(
        cert.C, spec.eps, spec.delta, spec.m, jobs=jobs, budget=budget, width_cap=width_cap
    )
    same = pats.deviation == cert.worst_pattern.deviation and pats.witness == cert.worst_pattern.witness
    checks.append(
        Check(
            "patterns",
            same,
            pats.patterns_checked,
            [list(a) for a in pats.witness.assignments],
            format_rational(pats.deviation),
        )
    )
    return Report(tuple(checks))


def construct_certified(
    spec: ConstructionSpec,
    *,
    jobs: int = 1,
    budget: int = DEFAULT_SUBSET_BUDGET,
    width_cap: int = DEFAULT_CHECK_WIDTH_CAP,
) -> Certificate:
    best: Optional[Candidate] = None
    for attempt in range(spec.max_attempts):
        seed = sub_seed(spec.seed, attempt)
        C = sample_candidate(spec.domain, spec.eps, seed)
        dens = check_density(C, spec.eps, spec.delta)
        sets = check_independence_sets(
            C, spec.eps, spec.delta, spec.m, jobs=jobs, budget=budget, width_cap=width_cap
        )
        if dens.passed and sets.passed:
            patterns = check_independence_patterns(
                C, spec.eps, spec.delta, spec.m, jobs=jobs, budget=budget, width_cap=width_cap
            )
            return Certificate(spec, attempt, seed, C, dens.density, sets, patterns)
        cand = Candidate(attempt, seed, C, dens.density, sets)
        if best is None or sets.deviation < best.worst_set.deviation:
            best = cand
    raise ConstructionExhausted(
        f"no candidate passed within {spec.max_attempts} attempts; best attempt "
        f"{best.attempt} had worst set deviation {best.worst_set.deviation} "
        f"(~{float(best.worst_set.deviation):.4g}) against delta {spec.delta}",
        best,
    )
