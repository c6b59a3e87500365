import random
from collections import Counter
from fractions import Fraction
from math import inf

import pytest
from hypothesis import given
from hypothesis import strategies as st

from cubecomb.bitspace import CubeDomain, PartialPattern, SubsetC
from cubecomb.distrib import (
    BlockProduct,
    Distribution,
    DistributionError,
    check_tower,
    collapse_prefix,
    mask,
    mass,
    normalized,
    project_last,
    restrict,
    restricted_total,
    slice_prefix,
    stats,
    tree_distribution,
    unrefined,
)
from cubecomb.norms import BlockTree
from helpers import identity_checks, identity_instances, random_distribution, tower_chain


def test_cap_is_enforced():
    with pytest.raises(DistributionError):
        Distribution((0, 1), (Fraction(1, 2), Fraction(3, 4)))
    with pytest.raises(DistributionError):
        Distribution((0, 1), (Fraction(-1, 4), Fraction(0)))


def test_stats_of_uniform_and_zero():
    u = Distribution.uniform(range(4))
    s = stats(u)
    assert s.total == 1 and s.alpha == 1 and s.mass == 1
    z = Distribution((0, 1), (Fraction(0), Fraction(0)))
    assert stats(z).alpha == inf and mass(z) == 0
    assert normalized(z) == z


def test_restrict_scales_to_the_subset():
    m = Distribution((0, 1, 2, 3), (Fraction(1, 4), Fraction(0), Fraction(1, 8), Fraction(1, 4)))
    r = restrict(m, [0, 2])
    assert r.values == (Fraction(1, 2), Fraction(1, 4))
    assert restricted_total(m, [0, 2]) == r.total
    assert restricted_total(m, []) == 0
    with pytest.raises(DistributionError):
        restrict(m, [])


def test_mask_keeps_only_selected():
    m = Distribution.uniform(range(4))
    assert mask(m, [1, 3]).values == (0, Fraction(1, 4), 0, Fraction(1, 4))


@given(st.integers(0, 10**6))
def test_normalized_mass_is_mass(seed):
    rng = random.Random(seed)
    m = random_distribution(rng, range(8))
    if m.total == 0:
        return
    n = normalized(m)
    assert max(n.values) == Fraction(1, 8)
    assert n.total == mass(m)


@given(st.integers(0, 10**6))
def test_tower_law(seed):
    m, Y, Z = tower_chain(random.Random(seed))
    assert check_tower(m, Y, Z).holds


def test_product_encoding():
    d2, d1 = CubeDomain(2), CubeDomain(1)
    P = BlockProduct((SubsetC.full(d2), SubsetC.full(d1)))
    assert P.offset(1) == 2 and P.cube() == tuple(range(8))
    x = P.join(2, 1, 1)
    assert x == 2 | (1 << 2)
    assert P.split(x, 1) == (2, 1)


def test_pattern_set_of_product_is_cartesian():
    C0 = SubsetC.from_points(CubeDomain(2), [0, 1, 3])
    C1 = SubsetC.from_points(CubeDomain(1), [1])
    P = BlockProduct((C0, C1))
    F = [PartialPattern(C0.domain, ((0, 0),)), PartialPattern(C1.domain, ())]
    expected = sorted(a | (b << 2) for a in (0, 1, 3) for b in (0, 1))
    assert list(P.pattern_set(F)) == expected
    assert P.w(F, 1) == 3


def test_slice_marginal_and_collapse_are_consistent(rng):
    for m, P, F, G, N0, t in identity_instances(11, 30):
        last = P.nblocks - 1
        plus = project_last(m, P, F)
        minus = collapse_prefix(m, P, F)
        total = restricted_total(m, P.pattern_set(F))
        assert plus.total == total == minus.total
        assert slice_prefix(m, P, F, last, t if N0 == last else P.pattern_set(F, 0, last)[0]).total <= total


def test_identities_on_random_instances():
    counts = Counter()
    for inst in identity_instances(5, 80):
        for check in identity_checks(*inst):
            assert check.holds, (check.name, check.lhs, check.rhs)
            counts[check.name] += 1
    assert set(counts) == {
        "slice_restriction",
        "slice_mass_bound",
        "marginal_restriction",
        "slice_scale_invariance",
        "total_decomposition",
    }


def test_slice_rejects_foreign_prefix():
    C = SubsetC.from_points(CubeDomain(1), [0])
    P = BlockProduct((C, C))
    F = unrefined(P)
    m = Distribution.uniform(range(4))
    with pytest.raises(DistributionError):
        slice_prefix(m, P, [PartialPattern(C.domain, ((0, 0),)), F[1]], 1, 1)


def test_tree_distribution_is_uniform_on_level():
    tree = BlockTree((1, 2), (0b000, 0b011, 0b101))
    d = tree_distribution(tree, 1)
    assert d.values == (Fraction(1, 2), Fraction(1, 2))
    d = tree_distribution(tree, 2)
    assert sum(1 for v in d.values if v) == 3 and d.total == Fraction(3, 8)
