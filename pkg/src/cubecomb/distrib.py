"""Distributions on finite block products and their derived distributions.

A product of blocks ``2^{I_0} x ... x 2^{I_{n-1}}`` is encoded as one cube:
block ``j`` occupies bits ``[offset_j, offset_j + width_j)`` of a point, so
the concatenation ``t⌢s`` of a prefix over blocks ``< k`` and a tail over
blocks ``>= k`` is ``t | (s << offset_k)``.

Weights are exact ``Fraction`` values throughout.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Iterable, Mapping, Optional, Sequence

from .bitspace import PartialPattern, SubsetC, pattern_set


class DistributionError(ValueError):
    pass


# --------------------------------------------------------------------------
# block products
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BlockProduct:
    """The sets ``C_j`` of consecutive blocks; block ``j`` has ``sets[j].domain``."""

    sets: tuple[SubsetC, ...]

    def __post_init__(self):
        object.__setattr__(self, "sets", tuple(self.sets))
        if not self.sets:
            raise DistributionError("a block product needs at least one block")

    @property
    def nblocks(self) -> int:
        return len(self.sets)

    @property
    def widths(self) -> tuple[int, ...]:
        return tuple(C.domain.width for C in self.sets)

    def offset(self, k: int) -> int:
        return sum(self.widths[:k])

    def width_between(self, a: int, b: int) -> int:
        return sum(self.widths[a:b])

    def cube(self, a: int = 0, b: Optional[int] = None) -> tuple[int, ...]:
        b = self.nblocks if b is None else b
        return tuple(range(1 << self.width_between(a, b)))

    def check_patterns(self, F: Sequence[PartialPattern], a: int = 0, b: Optional[int] = None) -> None:
        b = self.nblocks if b is None else b
        if len(F) < b:
            raise DistributionError(f"pattern sequence has {len(F)} entries, blocks up to {b} needed")
        for j in range(a, b):
            if F[j].domain.width != self.sets[j].domain.width:
                raise DistributionError(f"pattern for block {j} lives on a different cube")

    def block_points(self, F: Sequence[PartialPattern], j: int) -> list[int]:
        return pattern_set(self.sets[j], F[j]).points()

    def pattern_set(self, F: Sequence[PartialPattern], a: int = 0, b: Optional[int] = None) -> tuple[int, ...]:
        """``∏_{a<=j<b} (C_j)^{F(j)}`` encoded relative to block ``a``, sorted."""
        b = self.nblocks if b is None else b
        self.check_patterns(F, a, b)
        shifts = [self.offset(j) - self.offset(a) for j in range(a, b)]
        per_block = [self.block_points(F, j) for j in range(a, b)]
        out = []
        for combo in itertools.product(*per_block):
            x = 0
            for s, sh in zip(combo, shifts):
                x |= s << sh
            out.append(x)
        return tuple(sorted(out))

    def w(self, F: Sequence[PartialPattern], k: int) -> int:
        """``|(C)^{F↾k}|`` (1 for ``k == 0``)."""
        out = 1
        for j in range(k):
            out *= pattern_set(self.sets[j], F[j]).cardinality
        return out

    def join(self, t: int, s: int, k: int) -> int:
        return t | (s << self.offset(k))

    def split(self, x: int, k: int) -> tuple[int, int]:
        off = self.offset(k)
        return x & ((1 << off) - 1), x >> off


def unrefined(product: BlockProduct) -> list[PartialPattern]:
    return [PartialPattern(C.domain) for C in product.sets]


# --------------------------------------------------------------------------
# distributions
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Distribution:
    """Weights on an explicit finite ground set, each in ``[0, 1/|ground|]``."""

    ground: tuple[int, ...]
    values: tuple[Fraction, ...]

    def __post_init__(self):
        ground = tuple(int(x) for x in self.ground)
        values = tuple(Fraction(v) for v in self.values)
        if not ground:
            raise DistributionError("empty ground set")
        if len(ground) != len(values):
            raise DistributionError("ground and values differ in length")
        if any(a >= b for a, b in zip(ground, ground[1:])):
            raise DistributionError("ground must be strictly increasing")
        cap = Fraction(1, len(ground))
        for x, v in zip(ground, values):
            if not 0 <= v <= cap:
                raise DistributionError(f"weight {v} at {x} outside [0, {cap}]")
        object.__setattr__(self, "ground", ground)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "_index", {x: i for i, x in enumerate(ground)})

    @classmethod
    def from_mapping(cls, ground: Iterable[int], weights: Mapping[int, Fraction]) -> "Distribution":
        g = tuple(sorted(set(int(x) for x in ground)))
        return cls(g, tuple(Fraction(weights.get(x, 0)) for x in g))

    @classmethod
    def uniform(cls, ground: Iterable[int], scale: Fraction = Fraction(1)) -> "Distribution":
        g = tuple(sorted(set(ground)))
        return cls(g, (Fraction(scale) / len(g),) * len(g))

    def __len__(self) -> int:
        return len(self.ground)

    def __eq__(self, other) -> bool:
        if not isinstance(other, Distribution):
            return NotImplemented
        return self.ground == other.ground and self.values == other.values

    def __hash__(self) -> int:
        return hash((self.ground, self.values))

    def __repr__(self) -> str:
        return f"Distribution(|ground|={len(self.ground)}, total={self.total})"

    def __call__(self, x: int) -> Fraction:
        i = self._index.get(x)
        if i is None:
            raise DistributionError(f"{x} is not in the ground set")
        return self.values[i]

    def items(self):
        return zip(self.ground, self.values)

    @property
    def total(self) -> Fraction:
        return sum(self.values, Fraction(0))

    def scaled(self, c: Fraction) -> "Distribution":
        return Distribution(self.ground, tuple(v * c for v in self.values))


@dataclass(frozen=True)
class Stats:
    alpha: object  # Fraction, or math.inf for the zero distribution
    total: Fraction
    mass: Fraction


def stats(m: Distribution) -> Stats:
    top = max(m.values)
    total = m.total
    if top == 0:
        return Stats(math.inf, Fraction(0), Fraction(0))
    alpha = 1 / (len(m.ground) * top)
    return Stats(alpha, total, alpha * total)


def alpha(m: Distribution):
    return stats(m).alpha


def mass(m: Distribution) -> Fraction:
    return stats(m).mass


def normalized(m: Distribution) -> Distribution:
    """``alpha_m * m`` (the zero distribution is returned unchanged)."""
    a = stats(m).alpha
    return m if a == math.inf else m.scaled(a)


def restrict(m: Distribution, Y: Iterable[int]) -> Distribution:
    """``m_Y(x) = |X|/|Y| * m(x)`` on ``Y ⊆ X``."""
    Y = tuple(sorted(set(int(y) for y in Y)))
    if not Y:
        raise DistributionError("cannot restrict to the empty set")
    missing = [y for y in Y if y not in m._index]
    if missing:
        raise DistributionError(f"{missing[0]} is not in the ground set")
    factor = Fraction(len(m.ground), len(Y))
    return Distribution(Y, tuple(factor * m(y) for y in Y))


def restricted_total(m: Distribution, Y: Sequence[int]) -> Fraction:
    """Total of ``m_Y`` without building it (0 for empty ``Y``, by convention)."""
    if not Y:
        return Fraction(0)
    return Fraction(len(m.ground), len(Y)) * sum((m(y) for y in Y), Fraction(0))


def mask(m: Distribution, U: Iterable[int]) -> Distribution:
    """Keep the weights on ``U`` and zero the rest."""
    keep = set(int(u) for u in U)
    return Distribution(m.ground, tuple(v if x in keep else Fraction(0) for x, v in m.items()))


# --------------------------------------------------------------------------
# derived distributions on block products
# --------------------------------------------------------------------------


def _check_full(m: Distribution, product: BlockProduct) -> None:
    if len(m.ground) != 1 << product.width_between(0, product.nblocks):
        raise DistributionError("m must live on the full product cube")


def on_pattern(m: Distribution, product: BlockProduct, F: Sequence[PartialPattern]) -> Distribution:
    """``m_{(C)^F}``."""
    _check_full(m, product)
    return restrict(m, product.pattern_set(F))


def project_last(m: Distribution, product: BlockProduct, F: Sequence[PartialPattern]) -> Distribution:
    """``m⁺``: the final-block marginal of ``m_{(C)^F}`` on ``(C_last)^{F(last)}``."""
    last = product.nblocks - 1
    mf = on_pattern(m, product, F)
    ground = product.block_points(F, last)
    sums = {s: Fraction(0) for s in ground}
    for x, v in mf.items():
        _, s = product.split(x, last)
        sums[s] += v
    return Distribution(tuple(ground), tuple(sums[s] for s in ground))


def slice_prefix(
    m: Distribution, product: BlockProduct, F: Sequence[PartialPattern], N0: int, t: int
) -> Distribution:
    """``m^t(s) = m_{(C)^F}(t⌢s)`` on the tail product ``(C)^F_{N0}``."""
    prefix = product.pattern_set(F, 0, N0)
    if t not in set(prefix):
        raise DistributionError(f"prefix {t} is not in (C)^(F restricted to {N0} blocks)")
    mf = on_pattern(m, product, F)
    tail = product.pattern_set(F, N0)
    return Distribution(tail, tuple(mf(product.join(t, s, N0)) for s in tail))


def collapse_prefix(m: Distribution, product: BlockProduct, F: Sequence[PartialPattern]) -> "Collapsed":
    """``m⁻(t) = total(m^t)`` on ``(C)^{F↾last}``."""
    last = product.nblocks - 1
    if last < 1:
        raise DistributionError("collapse_prefix needs at least two blocks")
    mf = on_pattern(m, product, F)
    prefix = product.pattern_set(F, 0, last)
    sums = {t: Fraction(0) for t in prefix}
    for x, v in mf.items():
        t, _ = product.split(x, last)
        sums[t] += v
    cap = Fraction(1, len(prefix))
    capped = all(v <= cap for v in sums.values())
    dist = Distribution(prefix, tuple(sums[t] for t in prefix)) if capped else None
    return Collapsed(sums, capped, dist)


@dataclass(frozen=True)
class Collapsed:
    weights: dict
    capped: bool
    distribution: Optional[Distribution]

    @property
    def total(self) -> Fraction:
        return sum(self.weights.values(), Fraction(0))


def tree_distribution(tree, N: int) -> Distribution:
    """Uniform weight ``2^{-Σ widths}`` on the level-``N`` strings of a block tree."""
    width = sum(tree.widths[:N])
    level = tree.level(N)
    w = Fraction(1, 1 << width)
    return Distribution(tuple(range(1 << width)), tuple(w if x in level else Fraction(0) for x in range(1 << width)))


# --------------------------------------------------------------------------
# identity checks
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class IdentityCheck:
    name: str
    holds: bool
    lhs: object
    rhs: object


def _refines(product: BlockProduct, G, F, fixed_below: int) -> None:
    for j in range(product.nblocks):
        if not F[j].issubpattern(G[j]):
            raise DistributionError(f"G does not extend F at block {j}")
        if j < fixed_below and G[j] != F[j]:
            raise DistributionError(f"G differs from F at block {j} < {fixed_below}")


def check_slice_restriction(m, product, F, G, N0: int, t: int) -> IdentityCheck:
    """``(m^t_{(C)^F})_{(C)^G_{N0}} = m^t_{(C)^G}``."""
    _refines(product, G, F, N0)
    lhs = restrict(slice_prefix(m, product, F, N0, t), product.pattern_set(G, N0))
    rhs = slice_prefix(m, product, G, N0, t)
    return IdentityCheck("slice_restriction", lhs == rhs, lhs, rhs)


def check_marginal_restriction(m, product, F, G) -> IdentityCheck:
    """``(m⁺_{(C)^F})_{(C_last)^{G(last)}} = m⁺_{(C)^G}``."""
    last = product.nblocks - 1
    _refines(product, G, F, last)
    lhs = restrict(project_last(m, product, F), product.block_points(G, last))
    rhs = project_last(m, product, G)
    return IdentityCheck("marginal_restriction", lhs == rhs, lhs, rhs)


def check_slice_mass_bound(m, product, F, N0: int, t: int) -> IdentityCheck:
    """``mass(m^t_{(C)^F}) >= w_{N0}(F) * total(m^t_{(C)^F})``."""
    sl = slice_prefix(m, product, F, N0, t)
    lhs = mass(sl)
    rhs = product.w(F, N0) * sl.total
    return IdentityCheck("slice_mass_bound", lhs >= rhs, lhs, rhs)


def check_slice_scale_invariance(m, product, F, G, N0: int, t: int) -> IdentityCheck:
    """For ``F, G`` equal on blocks ``>= N0``: ``alpha * m^t`` agree."""
    for j in range(N0, product.nblocks):
        if F[j] != G[j]:
            raise DistributionError(f"F and G differ at block {j} >= {N0}")
    lhs = normalized(slice_prefix(m, product, F, N0, t))
    rhs = normalized(slice_prefix(m, product, G, N0, t))
    return IdentityCheck("slice_scale_invariance", lhs == rhs, lhs, rhs)


def _with_last(F, last_pattern) -> list:
    return list(F[:-1]) + [last_pattern]


def check_total_decomposition(m, product, F, G) -> IdentityCheck:
    """``total(m_{(C)^G}) = Σ_t m⁻_{(C)^{G↾N⌢F(N)}}(t) * total(m^t_{(C)^{F↾N⌢G(N)}}) / total(m^t_{(C)^F})``.

    A term whose denominator vanishes has a vanishing factor ``m⁻`` as well
    and counts as 0.
    """
    last = product.nblocks - 1
    _refines(product, G, F, 0)
    lhs = on_pattern(m, product, G).total
    g_prefix_f_last = _with_last(G, F[last])
    f_prefix_g_last = _with_last(F, G[last])
    collapsed = collapse_prefix(m, product, g_prefix_f_last).weights
    rhs = Fraction(0)
    for t in product.pattern_set(G, 0, last):
        weight = collapsed[t]
        den = slice_prefix(m, product, F, last, t).total
        if den == 0:
            continue
        rhs += weight * slice_prefix(m, product, f_prefix_g_last, last, t).total / den
    return IdentityCheck("total_decomposition", lhs == rhs, lhs, rhs)


def check_tower(m: Distribution, Y: Iterable[int], Z: Iterable[int]) -> IdentityCheck:
    """``(m_Y)_Z = m_Z`` for ``Z ⊆ Y``."""
    Y, Z = list(Y), list(Z)
    if not set(Z) <= set(Y):
        raise DistributionError("Z must be a subset of Y")
    lhs = restrict(restrict(m, Y), Z)
    rhs = restrict(m, Z)
    return IdentityCheck("tower", lhs == rhs, lhs, rhs)
