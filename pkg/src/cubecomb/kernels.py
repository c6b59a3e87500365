"""Hot loops of the exhaustive certificate checks.

Two kernels, each in a numba and a pure-numpy flavour with identical results:

``set_extremes``
    For every ``k``-subset ``X`` of the cube in a lexicographic rank range,
    count ``|⋂_{s∈X} (C+s)|`` and return the minimum and maximum count with
    the first rank attaining each.

``pattern_extremes``
    The same sweep, but for each ``X`` histogram all ``2**k`` bit patterns on
    ``X`` at once; pattern index bit ``j`` set means point ``j`` of ``X``
    carries bit 1 (complement of the translate).

Ranks enumerate ``itertools.combinations(range(2**width), k)`` order, so a
rank range is a shard and shards merge by (count, rank).
"""

from __future__ import annotations

import itertools
from concurrent.futures import ThreadPoolExecutor
from math import comb
from typing import Callable

import numpy as np

from . import _jit
from ._jit import njit

BATCH = 2048


def comb_table(n: int, kmax: int) -> np.ndarray:
    """``table[a, b] == comb(a, b)`` for ``a <= n``, ``b <= kmax`` (int64)."""
    table = np.zeros((n + 1, kmax + 1), dtype=np.int64)
    for b in range(kmax + 1):
        for a in range(b, n + 1):
            table[a, b] = comb(a, b)
    return table


def unrank_combination(rank: int, n: int, k: int) -> tuple[int, ...]:
    out = []
    x = 0
    for i in range(k):
        while comb(n - x - 1, k - i - 1) <= rank:
            rank -= comb(n - x - 1, k - i - 1)
            x += 1
        out.append(x)
        x += 1
    return tuple(out)


def rank_combination(combo, n: int) -> int:
    """Lexicographic rank of a sorted combination of ``range(n)``."""
    k = len(combo)
    rank = 0
    prev = -1
    for i, c in enumerate(combo):
        for x in range(prev + 1, c):
            rank += comb(n - x - 1, k - i - 1)
        prev = c
    return rank


# --------------------------------------------------------------------------
# numba kernels
# --------------------------------------------------------------------------


@njit(cache=True, nogil=True)
def _unrank_jit(rank, n, k, table, out):
    x = 0
    for i in range(k):
        while table[n - x - 1, k - i - 1] <= rank:
            rank -= table[n - x - 1, k - i - 1]
            x += 1
        out[i] = x
        x += 1


@njit(cache=True, nogil=True)
def _advance_jit(out, n, k):
    i = k - 1
    while out[i] == n - k + i:
        i -= 1
    out[i] += 1
    for j in range(i + 1, k):
        out[j] = out[j - 1] + 1


@njit(cache=True, nogil=True)
def _set_extremes_jit(mask, k, start, stop, table):
    n = mask.shape[0]
    combo = np.empty(k, dtype=np.int64)
    _unrank_jit(start, n, k, table, combo)
    lo = n + 1
    lo_rank = -1
    hi = -1
    hi_rank = -1
    for r in range(start, stop):
        cnt = 0
        for t in range(n):
            acc = mask[t ^ combo[0]]
            for j in range(1, k):
                acc &= mask[t ^ combo[j]]
            cnt += acc
        if cnt < lo:
            lo = cnt
            lo_rank = r
        if cnt > hi:
            hi = cnt
            hi_rank = r
        if r + 1 < stop:
            _advance_jit(combo, n, k)
    return lo, lo_rank, hi, hi_rank


@njit(cache=True, nogil=True)
def _pattern_extremes_jit(mask, k, start, stop, table):
    n = mask.shape[0]
    npat = 1 << k
    combo = np.empty(k, dtype=np.int64)
    _unrank_jit(start, n, k, table, combo)
    lo = np.full(npat, n + 1, dtype=np.int64)
    lo_rank = np.full(npat, -1, dtype=np.int64)
    hi = np.full(npat, -1, dtype=np.int64)
    hi_rank = np.full(npat, -1, dtype=np.int64)
    hist = np.zeros(npat, dtype=np.int64)
    for r in range(start, stop):
        hist[:] = 0
        for t in range(n):
            idx = 0
            for j in range(k):
                idx |= (1 - mask[t ^ combo[j]]) << j
            hist[idx] += 1
        for b in range(npat):
            c = hist[b]
            if c < lo[b]:
                lo[b] = c
                lo_rank[b] = r
            if c > hi[b]:
                hi[b] = c
                hi_rank[b] = r
        if r + 1 < stop:
            _advance_jit(combo, n, k)
    return lo, lo_rank, hi, hi_rank


# --------------------------------------------------------------------------
# numpy fallback
# --------------------------------------------------------------------------


def _combo_batches(n: int, k: int, start: int, stop: int):
    it = itertools.islice(itertools.combinations(range(n), k), start, stop)
    rank = start
    while rank < stop:
        chunk = list(itertools.islice(it, BATCH))
        if not chunk:
            break
        yield rank, np.asarray(chunk, dtype=np.int64).reshape(len(chunk), k)
        rank += len(chunk)


def _set_extremes_np(mask, k, start, stop):
    n = mask.shape[0]
    idx = np.arange(n, dtype=np.int64)
    lo, lo_rank, hi, hi_rank = n + 1, -1, -1, -1
    for rank0, combos in _combo_batches(n, k, start, stop):
        inside = np.ones((combos.shape[0], n), dtype=np.bool_)
        for j in range(k):
            inside &= mask[idx[None, :] ^ combos[:, j, None]]
        counts = inside.sum(axis=1)
        i = int(np.argmin(counts))
        if counts[i] < lo:
            lo, lo_rank = int(counts[i]), rank0 + i
        i = int(np.argmax(counts))
        if counts[i] > hi:
            hi, hi_rank = int(counts[i]), rank0 + i
    return lo, lo_rank, hi, hi_rank


def _pattern_extremes_np(mask, k, start, stop):
    n = mask.shape[0]
    npat = 1 << k
    idx = np.arange(n, dtype=np.int64)
    lo = np.full(npat, n + 1, dtype=np.int64)
    lo_rank = np.full(npat, -1, dtype=np.int64)
    hi = np.full(npat, -1, dtype=np.int64)
    hi_rank = np.full(npat, -1, dtype=np.int64)
    for rank0, combos in _combo_batches(n, k, start, stop):
        rows = combos.shape[0]
        code = np.zeros((rows, n), dtype=np.int64)
        for j in range(k):
            outside = ~mask[idx[None, :] ^ combos[:, j, None]]
            code |= outside.astype(np.int64) << j
        code += (np.arange(rows, dtype=np.int64) * npat)[:, None]
        hist = np.bincount(code.ravel(), minlength=rows * npat).reshape(rows, npat)
        amin = np.argmin(hist, axis=0)
        amax = np.argmax(hist, axis=0)
        for b in range(npat):
            c = hist[amin[b], b]
            if c < lo[b]:
                lo[b], lo_rank[b] = c, rank0 + amin[b]
            c = hist[amax[b], b]
            if c > hi[b]:
                hi[b], hi_rank[b] = c, rank0 + amax[b]
    return lo, lo_rank, hi, hi_rank


# --------------------------------------------------------------------------
# dispatch and sharding
# --------------------------------------------------------------------------


def _resolve(backend: str | None) -> str:
    if backend is None:
        return _jit.backend()
    if backend == "numba" and not _jit.HAVE_NUMBA:
        raise RuntimeError("numba backend requested but numba is disabled or missing")
    if backend not in ("numba", "numpy"):
        raise ValueError(f"unknown backend {backend!r}")
    return backend


def set_extremes(mask: np.ndarray, k: int, start: int, stop: int, backend: str | None = None):
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    if stop <= start:
        return mask.shape[0] + 1, -1, -1, -1
    if _resolve(backend) == "numba":
        table = comb_table(mask.shape[0], k)
        raw = _set_extremes_jit(mask.view(np.uint8).astype(np.int64), k, start, stop, table)
        return tuple(int(v) for v in raw)
    return _set_extremes_np(mask, k, start, stop)


def pattern_extremes(mask: np.ndarray, k: int, start: int, stop: int, backend: str | None = None):
    mask = np.ascontiguousarray(mask, dtype=np.bool_)
    npat = 1 << k
    if stop <= start:
        return (
            np.full(npat, mask.shape[0] + 1, dtype=np.int64),
            np.full(npat, -1, dtype=np.int64),
            np.full(npat, -1, dtype=np.int64),
            np.full(npat, -1, dtype=np.int64),
        )
    if _resolve(backend) == "numba":
        table = comb_table(mask.shape[0], k)
        return _pattern_extremes_jit(mask.view(np.uint8).astype(np.int64), k, start, stop, table)
    return _pattern_extremes_np(mask, k, start, stop)


def shard_ranges(start: int, stop: int, jobs: int) -> list[tuple[int, int]]:
    """Split ``[start, stop)`` into ``jobs`` contiguous near-equal pieces."""
    jobs = max(1, int(jobs))
    total = stop - start
    bounds = [start + (total * i) // jobs for i in range(jobs + 1)]
    return [(a, b) for a, b in zip(bounds, bounds[1:]) if b > a]


def run_sharded(fn: Callable, ranges: list[tuple[int, int]], jobs: int) -> list:
    """Evaluate ``fn(a, b)`` per shard; results come back in shard order."""
    if jobs <= 1 or len(ranges) <= 1:
        return [fn(a, b) for a, b in ranges]
    with ThreadPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(lambda r: fn(*r), ranges))


def merge_scalar_extremes(parts) -> tuple[int, int, int, int]:
    """Shards arrive in ascending rank order, so strict comparison keeps the first witness."""
    lo, lo_rank, hi, hi_rank = None, -1, None, -1
    for plo, plo_rank, phi, phi_rank in parts:
        if plo_rank >= 0 and (lo is None or plo < lo):
            lo, lo_rank = plo, plo_rank
        if phi_rank >= 0 and (hi is None or phi > hi):
            hi, hi_rank = phi, phi_rank
    return lo, lo_rank, hi, hi_rank


def merge_pattern_extremes(parts, npat: int):
    lo = [None] * npat
    lo_rank = [-1] * npat
    hi = [None] * npat
    hi_rank = [-1] * npat
    for plo, plo_rank, phi, phi_rank in parts:
        for b in range(npat):
            if plo_rank[b] >= 0 and (lo[b] is None or plo[b] < lo[b]):
                lo[b], lo_rank[b] = int(plo[b]), int(plo_rank[b])
            if phi_rank[b] >= 0 and (hi[b] is None or phi[b] > hi[b]):
                hi[b], hi_rank[b] = int(phi[b]), int(phi_rank[b])
    return lo, lo_rank, hi, hi_rank
