"""Free-block acceleration: period matrices, min-plus powers, jumps.

A free block is a fragment of F equal to R^e for a balanced period R with
4k <= |R| < 8k, which occurs identically in G (offset at most 2k) with one
spare copy of R on each side.  Aligning the whole block reduces to an
e-th min-plus power of the period matrix, so the DP can jump over the
block instead of walking its characters.
"""

from __future__ import annotations

import warnings
import weakref
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from . import _dpcore
from ._dpcore import DUMMY_I64, INFV
from .forest import Forest
from .weights import INF, WeightTable
from .klein import (BandedRun, BandedStore, FreeBlockPlanError, PlannedBlock,
                    run_banded, run_full)


class FreeBlockError(ValueError):
    pass


class InvalidFreeBlock(FreeBlockError):
    pass


class OverlappingBlocks(FreeBlockError):
    pass


class DimensionMismatch(ValueError):
    pass


@dataclass(frozen=True)
class FreeBlock:
    """Fragment F[p_f..q_f) = R^e paired with G[p_g..q_g)."""

    p_f: int
    q_f: int
    p_g: int
    q_g: int
    period: Forest
    exponent: int


def validate_free_blocks(F: Forest, G: Forest, blocks: list[FreeBlock], k: int):
    """Raise unless every block satisfies the free-pair definition.

    Checks, per block: balanced period with 4k <= |R| < 8k, matching
    lengths q-p = e*|R| on both sides, offset |p_f-p_g| <= 2k, and the
    character-exact equality F[p_f-|R|..q_f+|R|) = R^{e+2} =
    G[p_g-|R|..q_g+|R|).  Blocks must also be pairwise disjoint in F.
    """
    for blk in blocks:
        R = blk.period
        rlen = len(R)
        if rlen == 0:
            raise InvalidFreeBlock("empty period")
        if not (4 * k <= rlen < 8 * k):
            raise InvalidFreeBlock(f"period length {rlen} outside [4k, 8k) for k={k}")
        if blk.exponent < 1:
            raise InvalidFreeBlock("exponent must be at least 1")
        span = blk.exponent * rlen
        if blk.q_f - blk.p_f != span or blk.q_g - blk.p_g != span:
            raise InvalidFreeBlock("block length does not equal exponent * |R|")
        if abs(blk.p_f - blk.p_g) > 2 * k:
            raise InvalidFreeBlock("block offset exceeds 2k")
        if blk.p_f - rlen < 0 or blk.q_f + rlen > len(F):
            raise InvalidFreeBlock("no spare period copy inside F")
        if blk.p_g - rlen < 0 or blk.q_g + rlen > len(G):
            raise InvalidFreeBlock("no spare period copy inside G")
        if R.alphabet is not F.alphabet or F.alphabet is not G.alphabet:
            raise InvalidFreeBlock("period and forests must share one alphabet")
        rep = np.tile(R.codes, blk.exponent + 2)
        if not np.array_equal(F.codes[blk.p_f - rlen: blk.q_f + rlen], rep):
            raise InvalidFreeBlock("F does not contain R^(e+2) around the block")
        if not np.array_equal(G.codes[blk.p_g - rlen: blk.q_g + rlen], rep):
            raise InvalidFreeBlock("G does not contain R^(e+2) around the block")
    spans = sorted((b.p_f, b.q_f) for b in blocks)
    for (p1, q1), (p2, q2) in zip(spans, spans[1:]):
        if q1 > p2:
            raise OverlappingBlocks(f"blocks [{p1},{q1}) and [{p2},{q2}) overlap in F")


class MinPlusMatrix:
    """Square matrix over the (min, +) semiring with indices [-m..m].

    Entries are stored as scaled integers; the [-m..m] convention exists
    only at this API boundary.
    """

    def __init__(self, arr: np.ndarray, scale: int):
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1] or arr.shape[0] % 2 == 0:
            raise DimensionMismatch("matrix must be square with odd dimension")
        self.arr = arr
        self.scale = scale
        self.m = arr.shape[0] // 2

    def entry(self, i: int, j: int):
        v = int(self.arr[i + self.m, j + self.m])
        return INF if v >= INFV else Fraction(v, self.scale)

    def __eq__(self, other):
        return (isinstance(other, MinPlusMatrix) and self.scale == other.scale
                and np.array_equal(self.arr, other.arr))


def build_period_matrix(R: Forest, wt: WeightTable, k: int | None = None) -> MinPlusMatrix:
    """Distances from R to every window of R^3, via one full-table run.

    Entry (i, j) is the fragment distance ted(R, R^3[|R|+i .. 2|R|+j)),
    infinity when the window is inverted.
    """
    rlen = len(R)
    if rlen == 0:
        raise FreeBlockError("period must be nonempty")
    r3 = Forest(np.tile(R.codes, 3), R.alphabet)
    run = run_full(R, r3, wt)
    root = run.store.plan.pos2id[(0, rlen)]
    tab = run.store.tables[root]
    dim = 2 * rlen + 1
    arr = np.full((dim, dim), INFV, dtype=np.int64)
    for i in range(-rlen, rlen + 1):
        lg = rlen + i
        for j in range(-rlen, rlen + 1):
            rg = 2 * rlen + j
            if lg <= rg:
                arr[i + rlen, j + rlen] = tab[lg, rg]
    return MinPlusMatrix(arr, run.store.scale)


def min_plus(A: MinPlusMatrix, B: MinPlusMatrix) -> MinPlusMatrix:
    if A.arr.shape != B.arr.shape:
        raise DimensionMismatch("min-plus product needs equal dimensions")
    if A.scale != B.scale:
        raise DimensionMismatch("mixed cost scales")
    out = np.empty_like(A.arr)
    _dpcore.minplus(A.arr, B.arr, out)
    return MinPlusMatrix(out, A.scale)


def matrix_power(M: MinPlusMatrix, e: int) -> MinPlusMatrix:
    """e-th min-plus power by repeated squaring, e >= 1."""
    if e < 1:
        raise ValueError("exponent must be at least 1")
    result = None
    base = M
    while True:
        if e & 1:
            result = base if result is None else min_plus(result, base)
        e >>= 1
        if e == 0:
            return result
        base = min_plus(base, base)


# Period-matrix powers are cached per weight table; the kernel tends to
# emit the same period many times.
_matrix_cache: "weakref.WeakKeyDictionary[WeightTable, dict]" = weakref.WeakKeyDictionary()


def period_matrix_power(R: Forest, wt: WeightTable, e: int) -> MinPlusMatrix:
    cache = _matrix_cache.setdefault(wt, {})
    rkey = R.codes.tobytes()
    base = cache.get(rkey)
    if base is None:
        base = cache[rkey] = build_period_matrix(R, wt)
    if e == 1:
        return base
    powered = cache.get((rkey, e))
    if powered is None:
        powered = cache[(rkey, e)] = matrix_power(base, e)
    return powered


def _planned_blocks(F, G, wt, k, blocks):
    planned = []
    for blk in blocks:
        mpow = period_matrix_power(blk.period, wt, blk.exponent)
        planned.append(PlannedBlock(blk.p_f, blk.q_f, blk.p_g, blk.q_g,
                                    len(blk.period), mpow.arr))
    return planned


def optimized_ted(F: Forest, G: Forest, wt: WeightTable, k: int,
                  blocks: list[FreeBlock]):
    """ted_{<=k}(F, G) using jumps over the given free blocks.

    With no blocks this is exactly the banded DP.  Invalid blocks raise;
    the driver layer catches and retries without blocks.
    """
    return optimized_ted_run(F, G, wt, k, blocks).distance


def optimized_ted_run(F: Forest, G: Forest, wt: WeightTable, k: int,
                      blocks: list[FreeBlock]) -> BandedRun:
    if blocks:
        validate_free_blocks(F, G, blocks, k)
        planned = _planned_blocks(F, G, wt, k, blocks)
        try:
            return run_banded(F, G, wt, k, planned)
        except FreeBlockPlanError as exc:
            warnings.warn(f"free-block plan failed ({exc}); retrying without blocks")
            return run_banded(F, G, wt, k, None)
    return run_banded(F, G, wt, k, None)


def jump_right(store: BandedStore, l_f: int, r_f: int, blk: FreeBlock,
               mpow: MinPlusMatrix):
    """Fill dp[l_f, r_f, ., .] by jumping over a suffix block of the fragment."""
    if not (l_f <= blk.p_f < blk.q_f == r_f):
        raise FreeBlockError("block is not a suffix of the fragment")
    fid = store.plan.pos2id[(l_f, r_f)]
    pre_empty = 1 if l_f == blk.p_f else 0
    pre = DUMMY_I64
    if not pre_empty:
        pre = store.tables[store.plan.pos2id[(l_f, blk.p_f)]]
    _dpcore.fill_jump_right(store.tables[fid], l_f, r_f, store.twok, len(store.G),
                            pre_empty, pre, mpow.arr, mpow.m,
                            blk.p_f, blk.p_g, blk.q_g, store.prefG)


def jump_left(store: BandedStore, l_f: int, r_f: int, blk: FreeBlock,
              mpow: MinPlusMatrix):
    """Fill dp[l_f, r_f, ., .] by jumping over a prefix block of the fragment."""
    if not (l_f == blk.p_f < blk.q_f <= r_f):
        raise FreeBlockError("block is not a prefix of the fragment")
    fid = store.plan.pos2id[(l_f, r_f)]
    suf_empty = 1 if blk.q_f == r_f else 0
    suf = DUMMY_I64
    if not suf_empty:
        suf = store.tables[store.plan.pos2id[(blk.q_f, r_f)]]
    _dpcore.fill_jump_left(store.tables[fid], l_f, r_f, store.twok, len(store.G),
                           suf_empty, suf, mpow.arr, mpow.m,
                           blk.q_f, blk.p_g, blk.q_g, store.prefG)
