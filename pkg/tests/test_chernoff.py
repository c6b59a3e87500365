import math
from fractions import Fraction

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cubecomb.chernoff import (
    BernoulliSpec,
    ChernoffError,
    bound_holds,
    empirical_tail,
    exact_tail,
    tail_bound,
    tail_bound_lower,
)


def test_small_exact_tail_by_hand():
    # P(|k - 5| >= 3) for Bin(10, 1/2) = 2 * (1 + 10 + 45) / 1024
    assert exact_tail(BernoulliSpec.of(10, "1/2", "3/10")) == Fraction(7, 64)


def test_boundary_is_inclusive():
    spec = BernoulliSpec.of(4, "1/2", "1/4")
    assert spec.deviates(1) and spec.deviates(3) and not spec.deviates(2)


def test_large_instance_frozen():
    spec = BernoulliSpec.of(2000, "1/2", "1/10")
    tail = exact_tail(spec)
    # independent big-integer oracle: sum of C(2000, k) over |k - 1000| >= 200, over 2^2000
    assert float(tail) == pytest.approx(3.505006206935645e-19, rel=1e-12)
    assert tail < Fraction(2) * Fraction(math.exp(-5))
    assert tail_bound(spec) == pytest.approx(0.013475893998170934, rel=1e-15)


def test_degenerate_p():
    assert exact_tail(BernoulliSpec.of(50, "0", "1/10")) == 0
    assert exact_tail(BernoulliSpec.of(50, "1", "1/10")) == 0


def test_rejects_bad_input():
    with pytest.raises(ChernoffError):
        BernoulliSpec.of(0, "1/2", "1/10")
    with pytest.raises(ChernoffError):
        BernoulliSpec.of(10, "3/2", "1/10")
    with pytest.raises(ChernoffError):
        BernoulliSpec.of(10, "1/2", "0")
    with pytest.raises(ChernoffError):
        exact_tail(BernoulliSpec.of(10**6, "1/2", "1/10"))


@given(st.integers(1, 400), st.integers(0, 12), st.integers(1, 12), st.integers(1, 20))
def test_bound_holds_exactly(n, a, d, r):
    if a > d:
        a, d = d, a
    spec = BernoulliSpec.of(n, Fraction(a, d), Fraction(r, 20))
    ok, tail, lower = bound_holds(spec)
    assert ok and tail <= lower


def test_lower_rounding_is_below_float_bound():
    for n in (1, 10, 500, 3000):
        spec = BernoulliSpec.of(n, "1/3", "1/7")
        lower = tail_bound_lower(spec)
        assert lower <= Fraction(tail_bound(spec)) * (1 + Fraction(1, 10**12))
        assert float(lower) == pytest.approx(tail_bound(spec), rel=1e-12)


def test_empirical_is_deterministic_and_job_independent():
    spec = BernoulliSpec.of(100, "1/2", "1/10")
    a = empirical_tail(spec, 70000, seed=5, jobs=1)
    b = empirical_tail(spec, 70000, seed=5, jobs=3)
    assert a == b
    assert abs(float(a) - float(exact_tail(spec))) < 0.01
