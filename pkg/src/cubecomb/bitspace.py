"""The group (2^I, XOR), its subsets, translates and patterns.

A point of the cube ``2^I`` with ``|I| = width`` is an ``int`` in
``[0, 2**width)``; coordinate ``j`` is bit ``j``. A subset is a boolean mask
of length ``2**width`` in which index ``i`` records membership of point ``i``,
so translating by ``s`` is the index permutation ``t -> t ^ s``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from math import comb
from typing import Iterable, Iterator, Mapping, Sequence

import numpy as np

DEFAULT_WIDTH_CAP = 16


class DomainError(ValueError):
    """Raised when objects from different cubes are mixed or a point is out of range."""


@dataclass(frozen=True)
class CubeDomain:
    width: int
    cap: int = field(default=DEFAULT_WIDTH_CAP, compare=False, repr=False)

    def __post_init__(self):
        if not isinstance(self.width, (int, np.integer)) or self.width < 1:
            raise DomainError(f"width must be a positive integer, got {self.width!r}")
        if self.width > self.cap:
            raise DomainError(
                f"width {self.width} exceeds the cap {self.cap} "
                f"(a subset would need {2 ** self.width} bits); raise the cap explicitly"
            )

    @property
    def size(self) -> int:
        return 1 << self.width

    def check_point(self, s: int) -> int:
        s = int(s)
        if not 0 <= s < self.size:
            raise DomainError(f"point {s} outside 2^{self.width}")
        return s

    def points(self) -> range:
        return range(self.size)


def _same_domain(a: CubeDomain, b: CubeDomain) -> None:
    if a.width != b.width:
        raise DomainError(f"domain mismatch: width {a.width} vs {b.width}")


@dataclass(frozen=True, eq=False)
class SubsetC:
    """Immutable subset of a cube stored as a boolean membership mask."""

    domain: CubeDomain
    mask: np.ndarray
    cardinality: int = field(init=False)

    def __post_init__(self):
        mask = np.ascontiguousarray(self.mask, dtype=np.bool_)
        if mask.shape != (self.domain.size,):
            raise DomainError(
                f"mask has shape {mask.shape}, expected ({self.domain.size},)"
            )
        mask.setflags(write=False)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "cardinality", int(np.count_nonzero(mask)))

    # construction -----------------------------------------------------------
    @classmethod
    def from_points(cls, domain: CubeDomain, points: Iterable[int]) -> "SubsetC":
        mask = np.zeros(domain.size, dtype=np.bool_)
        for s in points:
            mask[domain.check_point(s)] = True
        return cls(domain, mask)

    @classmethod
    def full(cls, domain: CubeDomain) -> "SubsetC":
        return cls(domain, np.ones(domain.size, dtype=np.bool_))

    @classmethod
    def empty(cls, domain: CubeDomain) -> "SubsetC":
        return cls(domain, np.zeros(domain.size, dtype=np.bool_))

    @classmethod
    def from_hex(cls, domain: CubeDomain, text: str) -> "SubsetC":
        """Inverse of :meth:`to_hex`; rejects strings of the wrong length."""
        nibbles = -(-domain.size // 4)
        if len(text) != nibbles or text != text.lower():
            raise DomainError(
                f"bitset hex for width {domain.width} must be {nibbles} lowercase nibbles"
            )
        try:
            value = int(text, 16)
        except ValueError as exc:
            raise DomainError(f"invalid hex digits in bitset: {text!r}") from exc
        if value >> domain.size:
            raise DomainError("bitset hex sets bits beyond the cube size")
        raw = value.to_bytes(nibbles // 2 + nibbles % 2, "little")
        bits = np.unpackbits(np.frombuffer(raw, dtype=np.uint8), bitorder="little")
        return cls(domain, bits[: domain.size].astype(np.bool_))

    def to_hex(self) -> str:
        nibbles = -(-self.domain.size // 4)
        packed = np.packbits(self.mask, bitorder="little").tobytes()
        value = int.from_bytes(packed, "little")
        return format(value, f"0{nibbles}x")

    # queries ----------------------------------------------------------------
    def __contains__(self, s: int) -> bool:
        return bool(self.mask[self.domain.check_point(s)])

    def __iter__(self) -> Iterator[int]:
        return iter(int(i) for i in np.flatnonzero(self.mask))

    def __len__(self) -> int:
        return self.cardinality

    def __eq__(self, other) -> bool:
        if not isinstance(other, SubsetC):
            return NotImplemented
        return self.domain.width == other.domain.width and bool(
            np.array_equal(self.mask, other.mask)
        )

    def __hash__(self) -> int:
        return hash((self.domain.width, self.mask.tobytes()))

    def __repr__(self) -> str:
        return f"SubsetC(width={self.domain.width}, |C|={self.cardinality})"

    def points(self) -> list[int]:
        return [int(i) for i in np.flatnonzero(self.mask)]

    # set algebra ------------------------------------------------------------
    def complement(self) -> "SubsetC":
        return SubsetC(self.domain, ~self.mask)

    def __and__(self, other: "SubsetC") -> "SubsetC":
        _same_domain(self.domain, other.domain)
        return SubsetC(self.domain, self.mask & other.mask)

    def __or__(self, other: "SubsetC") -> "SubsetC":
        _same_domain(self.domain, other.domain)
        return SubsetC(self.domain, self.mask | other.mask)


@dataclass(frozen=True)
class PartialPattern:
    """A finite partial map from cube points to bits, kept sorted by point."""

    domain: CubeDomain
    assignments: tuple[tuple[int, int], ...] = ()

    def __post_init__(self):
        items = []
        seen = set()
        for s, b in self.assignments:
            s = self.domain.check_point(s)
            if s in seen:
                raise DomainError(f"point {s} assigned twice")
            if b not in (0, 1):
                raise DomainError(f"pattern bit must be 0 or 1, got {b!r}")
            seen.add(s)
            items.append((s, int(b)))
        object.__setattr__(self, "assignments", tuple(sorted(items)))

    @classmethod
    def from_mapping(cls, domain: CubeDomain, mapping: Mapping[int, int]) -> "PartialPattern":
        return cls(domain, tuple(mapping.items()))

    @property
    def m0(self) -> int:
        return sum(1 for _, b in self.assignments if b == 0)

    @property
    def m1(self) -> int:
        return sum(1 for _, b in self.assignments if b == 1)

    @property
    def points(self) -> tuple[int, ...]:
        return tuple(s for s, _ in self.assignments)

    def as_dict(self) -> dict[int, int]:
        return dict(self.assignments)

    def __len__(self) -> int:
        return len(self.assignments)

    def issubpattern(self, other: "PartialPattern") -> bool:
        return set(self.assignments) <= set(other.assignments)

    def extend(self, new: Iterable[tuple[int, int]]) -> "PartialPattern":
        return PartialPattern(self.domain, self.assignments + tuple(new))

    def union(self, other: "PartialPattern") -> "PartialPattern":
        """Union of compatible patterns; conflicting bits raise."""
        _same_domain(self.domain, other.domain)
        merged = self.as_dict()
        for s, b in other.assignments:
            if merged.get(s, b) != b:
                raise DomainError(f"patterns disagree at point {s}")
            merged[s] = b
        return PartialPattern.from_mapping(self.domain, merged)

    def sort_key(self) -> tuple:
        return (len(self.assignments), self.points, tuple(b for _, b in self.assignments))


def translate(C: SubsetC, s: int) -> SubsetC:
    """The translate ``C + s``."""
    s = C.domain.check_point(s)
    idx = np.arange(C.domain.size, dtype=np.int64) ^ s
    return SubsetC(C.domain, C.mask[idx])


def pattern_set(C: SubsetC, f: PartialPattern) -> SubsetC:
    """``(C)^f``: intersect ``C + s`` for bit 0 and its complement for bit 1."""
    _same_domain(C.domain, f.domain)
    idx = np.arange(C.domain.size, dtype=np.int64)
    out = np.ones(C.domain.size, dtype=np.bool_)
    for s, b in f.assignments:
        member = C.mask[idx ^ s]
        out &= member if b == 0 else ~member
    return SubsetC(C.domain, out)


def count_extensions(n_points: int, assigned: int, k: int) -> int:
    free = n_points - assigned
    return sum(comb(free, j) << j for j in range(min(k, free) + 1))


def enumerate_extensions(f: PartialPattern, k: int) -> Iterator[PartialPattern]:
    """Every ``g`` extending ``f`` by at most ``k`` new points.

    Order: fewer new points first; then new point tuples ascending; then bits
    lexicographically with 0 before 1.
    """
    if k < 0:
        raise ValueError("k must be nonnegative")
    taken = set(f.points)
    free = [s for s in f.domain.points() if s not in taken]
    for j in range(min(k, len(free)) + 1):
        for pts in itertools.combinations(free, j):
            for bits in itertools.product((0, 1), repeat=j):
                yield f.extend(zip(pts, bits))


def subgroup_span(X: Iterable[int]) -> list[int]:
    """The XOR-closure of ``X ∪ {0}``, sorted."""
    span = {0}
    for x in X:
        x = int(x)
        if x not in span:
            span |= {s ^ x for s in span}
    return sorted(span)


def coset_selectors(domain: CubeDomain, X: Iterable[int]) -> list[list[int]]:
    """Disjoint selectors from the cosets of the subgroup generated by ``X``.

    Cosets are listed by ascending minimum and ``U_j`` takes the ``j``-th
    smallest element of every coset.
    """
    group = subgroup_span(domain.check_point(x) for x in X)
    seen = np.zeros(domain.size, dtype=np.bool_)
    cosets = []
    for s in domain.points():
        if seen[s]:
            continue
        coset = sorted(s ^ g for g in group)
        seen[coset] = True
        cosets.append(coset)
    return [[coset[j] for coset in cosets] for j in range(len(group))]


def points_of(domain: CubeDomain, values: Sequence[int]) -> list[int]:
    return [domain.check_point(v) for v in values]
