"""Two-sided tail bound ``P(|S_n/n - p| >= delta) <= 2 exp(-n delta^2 / 4)``.

``exact_tail`` is the exact binomial oracle used to check the bound without
rounding; ``empirical_tail`` is a seeded Monte Carlo estimate.
"""

from __future__ import annotations

from dataclasses import dataclass
from decimal import ROUND_CEILING, ROUND_FLOOR, Context, Decimal
from fractions import Fraction
from math import comb, exp

import numpy as np

from .kernels import run_sharded
from .rational import RationalLike, parse_rational

EXACT_N_GUARD = 5000
MC_CHUNK = 1 << 16


class ChernoffError(ValueError):
    pass


@dataclass(frozen=True)
class BernoulliSpec:
    n: int
    p: Fraction
    delta: Fraction

    def __post_init__(self):
        object.__setattr__(self, "p", parse_rational(self.p))
        object.__setattr__(self, "delta", parse_rational(self.delta))
        if int(self.n) != self.n or self.n < 1:
            raise ChernoffError(f"n must be a positive integer, got {self.n!r}")
        if not 0 <= self.p <= 1:
            raise ChernoffError(f"p must lie in [0, 1], got {self.p}")
        if not 0 < self.delta <= 1:
            raise ChernoffError(f"delta must lie in (0, 1], got {self.delta}")

    @classmethod
    def of(cls, n: int, p: RationalLike, delta: RationalLike) -> "BernoulliSpec":
        return cls(int(n), parse_rational(p), parse_rational(delta))

    def deviates(self, k: int) -> bool:
        """``|k/n - p| >= delta`` decided in integers."""
        a, d = self.p.numerator, self.p.denominator
        r, q = self.delta.numerator, self.delta.denominator
        return abs(k * d - self.n * a) * q >= r * self.n * d


def tail_bound(spec: BernoulliSpec) -> float:
    return 2.0 * exp(-spec.n * float(spec.delta) ** 2 / 4.0)


def tail_bound_lower(spec: BernoulliSpec, digits: int = 40) -> Fraction:
    """A rational that is guaranteed not to exceed ``2 exp(-n delta^2/4)``.

    The exponent is rounded up in magnitude, ``Decimal.exp`` is correctly
    rounded, and one unit in the last place is then subtracted.
    """
    x = Fraction(spec.n) * spec.delta * spec.delta / 4
    up = Context(prec=digits + 10, rounding=ROUND_CEILING)
    x_dec = up.divide(Decimal(x.numerator), Decimal(x.denominator))
    ctx = Context(prec=digits)
    value = ctx.exp(-x_dec)
    ulp = Decimal(1).scaleb(value.adjusted() - digits + 1)
    lower = Context(prec=digits + 2, rounding=ROUND_FLOOR).subtract(value, ulp)
    return 2 * Fraction(max(lower, Decimal(0)))


def exact_tail(spec: BernoulliSpec) -> Fraction:
    if spec.n > EXACT_N_GUARD:
        raise ChernoffError(
            f"n={spec.n} exceeds the exact-summation guard {EXACT_N_GUARD}; use empirical_tail"
        )
    n = spec.n
    a, d = spec.p.numerator, spec.p.denominator
    b = d - a
    b_pows = [1] * (n + 1)
    for i in range(1, n + 1):
        b_pows[i] = b_pows[i - 1] * b
    total = 0
    a_pow = 1
    for k in range(n + 1):
        if spec.deviates(k):
            total += comb(n, k) * a_pow * b_pows[n - k]
        a_pow *= a
    return Fraction(total, d**n)


def bound_holds(spec: BernoulliSpec) -> tuple[bool, Fraction, Fraction]:
    """Exact check of the tail against the rounded-down bound."""
    tail = exact_tail(spec)
    lower = tail_bound_lower(spec)
    return tail <= lower, tail, lower


def _mc_chunk(spec: BernoulliSpec, flags: np.ndarray, seed_seq, size: int) -> int:
    rng = np.random.Generator(np.random.PCG64(seed_seq))
    draws = rng.binomial(spec.n, float(spec.p), size=size)
    return int(flags[draws].sum())


def empirical_tail(spec: BernoulliSpec, trials: int, seed: int, jobs: int = 1) -> Fraction:
    """Frequency of ``|S_n/n - p| >= delta`` over ``trials`` seeded samples.

    Trials are cut into fixed chunks with spawned sub-seeds, so the value does
    not depend on ``jobs``.
    """
    if trials < 1:
        raise ChernoffError("trials must be at least 1")
    flags = np.array([spec.deviates(k) for k in range(spec.n + 1)], dtype=np.int64)
    sizes = [MC_CHUNK] * (trials // MC_CHUNK)
    if trials % MC_CHUNK:
        sizes.append(trials % MC_CHUNK)
    children = np.random.SeedSequence(seed).spawn(len(sizes))
    work = list(zip(children, sizes))
    counts = run_sharded(
        lambda i, _j: _mc_chunk(spec, flags, *work[i]),
        [(i, i + 1) for i in range(len(work))],
        jobs,
    )
    return Fraction(sum(counts), trials)
