"""Finite block trees and truncated counting-measure norms.

A block tree of depth ``M`` is stored by its leaves: product points whose
block ``j`` occupies bits ``[offset_j, offset_j + w_j)``. Level ``N`` is the
set of leaf prefixes made of the first ``N`` blocks.

Text format: one leaf per line, blocks separated by ``.``, block ``j`` a
binary string whose character ``i`` is coordinate ``i`` of that block, e.g.
``011.10.110``. Blank lines and lines starting with ``#`` are skipped.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction
from math import prod
from typing import Optional, Sequence

from .bitspace import PartialPattern, count_extensions, enumerate_extensions
from .distrib import BlockProduct

DEFAULT_NORM_BUDGET = 10**7


class TreeError(ValueError):
    pass


class NormBudgetError(RuntimeError):
    pass


@dataclass(frozen=True)
class BlockTree:
    widths: tuple[int, ...]
    leaves: tuple[int, ...]

    def __post_init__(self):
        widths = tuple(int(w) for w in self.widths)
        if any(w < 0 for w in widths):
            raise TreeError("block widths must be nonnegative")
        total = sum(widths)
        leaves = tuple(sorted(set(int(x) for x in self.leaves)))
        if not leaves:
            raise TreeError("a block tree needs at least one leaf")
        if leaves[0] < 0 or leaves[-1] >= 1 << total:
            raise TreeError("leaf outside the product cube")
        object.__setattr__(self, "widths", widths)
        object.__setattr__(self, "leaves", leaves)

    @property
    def depth(self) -> int:
        return len(self.widths)

    def offset(self, N: int) -> int:
        return sum(self.widths[:N])

    def level(self, N: int) -> tuple[int, ...]:
        if not 0 <= N <= self.depth:
            raise TreeError(f"level {N} outside [0, {self.depth}]")
        low = (1 << self.offset(N)) - 1
        return tuple(sorted({x & low for x in self.leaves}))

    @classmethod
    def full(cls, widths: Sequence[int]) -> "BlockTree":
        return cls(tuple(widths), tuple(range(1 << sum(widths))))

    # text format

    @classmethod
    def parse(cls, text: str) -> "BlockTree":
        widths = None
        leaves = []
        for lineno, raw in enumerate(text.splitlines(), 1):
            line = raw.strip()
            if not line or line.startswith("#"):
                continue
            blocks = line.split(".")
            if any(set(b) - {"0", "1"} for b in blocks):
                raise TreeError(f"line {lineno}: blocks must be binary strings")
            shape = tuple(len(b) for b in blocks)
            if widths is None:
                widths = shape
            elif shape != widths:
                raise TreeError(f"line {lineno}: block widths {shape} differ from {widths}")
            x, off = 0, 0
            for b in blocks:
                for i, ch in enumerate(b):
                    x |= int(ch) << (off + i)
                off += len(b)
            leaves.append(x)
        if widths is None:
            raise TreeError("no leaves found")
        return cls(widths, tuple(leaves))

    def leaf_string(self, x: int) -> str:
        parts, off = [], 0
        for w in self.widths:
            parts.append("".join(str((x >> (off + i)) & 1) for i in range(w)))
            off += w
        return ".".join(parts)

    def dumps(self) -> str:
        return "".join(self.leaf_string(x) + "\n" for x in self.leaves)


def node_subtree(p: BlockTree, s: int, n: int) -> BlockTree:
    """``p_s`` for a node ``s`` at level ``n``: the leaves extending ``s``."""
    if s not in set(p.level(n)):
        raise TreeError(f"{s} is not a node of level {n}")
    low = (1 << p.offset(n)) - 1
    return BlockTree(p.widths, tuple(x for x in p.leaves if x & low == s))


def union(p1: BlockTree, p2: BlockTree) -> BlockTree:
    if p1.widths != p2.widths:
        raise TreeError("trees with different block structure")
    return BlockTree(p1.widths, p1.leaves + p2.leaves)


def _check(p: BlockTree, product: BlockProduct, F: Sequence[PartialPattern]) -> None:
    if p.widths != product.widths:
        raise TreeError(f"tree widths {p.widths} differ from product widths {product.widths}")
    product.check_patterns(F)


def counting_ratio(p: BlockTree, product: BlockProduct, F: Sequence[PartialPattern], N: int) -> Fraction:
    """``|p^N ∩ (C)^{F↾N}| / |(C)^{F↾N}|``; 1 at ``N = 0``."""
    _check(p, product, F)
    if not 0 <= N <= p.depth:
        raise TreeError(f"level {N} outside [0, {p.depth}]")
    Y = product.pattern_set(F, 0, N)
    if not Y:
        raise TreeError(f"the pattern set of the first {N} blocks is empty")
    nodes = set(p.level(N))
    return Fraction(sum(1 for y in Y if y in nodes), len(Y))


def refinement_family(F: Sequence[PartialPattern], h: Sequence[int], N: int, M: int):
    """``F^{N,M}_{F↾M,h↾M}`` in canonical order: blocks below ``N`` fixed,
    block ``i`` in ``[N, M)`` extended by at most ``h[i]`` points."""
    per_block = [[F[i]] if i < N else list(enumerate_extensions(F[i], h[i])) for i in range(M)]
    return itertools.product(*per_block)


def family_size(F: Sequence[PartialPattern], h: Sequence[int], N: int, M: int) -> int:
    return prod(count_extensions(1 << F[i].domain.width, len(F[i]), h[i]) for i in range(N, M))


@dataclass(frozen=True)
class NormResult:
    value: Fraction
    witness: tuple[PartialPattern, ...]
    family_size: int
    skipped: int


def truncated_norm(
    p: BlockTree,
    product: BlockProduct,
    F: Sequence[PartialPattern],
    h: Sequence[int],
    N: int,
    M: int,
    *,
    budget: int = DEFAULT_NORM_BUDGET,
) -> NormResult:
    """Minimum of the level-``M`` counting ratio over the truncated family.

    Refinements with an empty pattern set carry no counting measure and are
    skipped (and counted). Deeper truncation can only lower the value.
    """
    _check(p, product, F)
    if not 0 <= N <= M <= p.depth:
        raise TreeError(f"need 0 <= N <= M <= depth, got N={N}, M={M}")
    if len(h) < M:
        raise TreeError("h needs an entry per block")
    for i in range(N, M):
        if h[i] < 0 or len(F[i]) + h[i] > 1 << product.widths[i]:
            raise TreeError(f"block {i}: budget {h[i]} is not legal")
    size = family_size(F, h, N, M)
    cost = size * (1 << sum(product.widths[:M]))
    if cost > budget:
        raise NormBudgetError(f"norm enumeration needs about {cost:.3e} evaluations, budget {budget:.3e}")
    nodes = set(p.level(M))
    best: Optional[Fraction] = None
    witness = None
    skipped = 0
    for G in refinement_family(F, h, N, M):
        Y = product.pattern_set(list(G) + list(F[M:]), 0, M)
        if not Y:
            skipped += 1
            continue
        value = Fraction(sum(1 for y in Y if y in nodes), len(Y))
        if best is None or value < best:
            best, witness = value, tuple(G)
    if best is None:
        raise TreeError("every refinement in the family has an empty pattern set")
    return NormResult(best, witness, size, skipped)


def norm_table(
    p: BlockTree,
    product: BlockProduct,
    F: Sequence[PartialPattern],
    h: Sequence[int],
    N: int,
    *,
    budget: int = DEFAULT_NORM_BUDGET,
) -> list[tuple[int, NormResult]]:
    """Truncated norms for every ``M`` from ``N`` to the depth (a nonincreasing
    sequence of upper bounds on the untruncated norm)."""
    return [(M, truncated_norm(p, product, F, h, N, M, budget=budget)) for M in range(N, p.depth + 1)]
