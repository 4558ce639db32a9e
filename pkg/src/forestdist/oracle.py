"""Ground-truth semantics: alignment graphs, forest alignments, and
brute-force distances for small inputs.

Two independent backends live here.  ``TedOracle`` is a memoized
left-to-right recursion over fragment pairs (the scalable reference);
``enumerate_alignments`` exhaustively walks every monotone grid path and
is used to certify the recursion on tiny inputs.  Both work directly on
exact Fractions and are deliberately unoptimized.
"""

from __future__ import annotations

import sys
from fractions import Fraction

from .forest import Forest, Fragment
from .weights import INF, WeightTable

# A path is a list of grid vertices (x, y); consecutive vertices differ by
# one of the three unit steps.
AlignmentPath = list


def width(path: AlignmentPath) -> int:
    """Maximum |x - y| over the vertices of the path."""
    return max(abs(x - y) for x, y in path)


def path_edges(path: AlignmentPath):
    for (x0, y0), (x1, y1) in zip(path, path[1:]):
        dx, dy = x1 - x0, y1 - y0
        if (dx, dy) not in ((1, 0), (0, 1), (1, 1)):
            raise ValueError(f"non-contiguous step {(x0, y0)} -> {(x1, y1)}")
        yield (x0, y0, dx, dy)


def path_cost(xfrag: Fragment, yfrag: Fragment, wt: WeightTable, path: AlignmentPath) -> Fraction:
    """Total edge cost of the path under the half-cost function."""
    if path[0] != (xfrag.l, yfrag.l) or path[-1] != (xfrag.r, yfrag.r):
        raise ValueError("path does not span the two fragments")
    fx, fy = xfrag.forest, yfrag.forest
    total = Fraction(0)
    for x, y, dx, dy in path_edges(path):
        if dx == 1 and dy == 0:
            total += wt.tilde(int(fx.codes[x]), None)
        elif dx == 0 and dy == 1:
            total += wt.tilde(None, int(fy.codes[y]))
        else:
            total += wt.tilde(int(fx.codes[x]), int(fy.codes[y]))
    return total


def is_forest_alignment(ffrag: Fragment, gfrag: Fragment, path: AlignmentPath) -> bool:
    """Check the mate-consistency condition on every aligned pair."""
    if path[0] != (ffrag.l, gfrag.l) or path[-1] != (ffrag.r, gfrag.r):
        raise ValueError("path does not span the two fragments")
    aligned: dict[int, int] = {}
    for x, y, dx, dy in path_edges(path):
        if dx == 1 and dy == 1:
            aligned[x] = y
    mf, mg = ffrag.forest.mate, gfrag.forest.mate
    for x, y in aligned.items():
        if aligned.get(int(mf[x])) != int(mg[y]):
            return False
    return True


def enumerate_alignments(ffrag: Fragment, gfrag: Fragment):
    """Yield every monotone path spanning the fragments (tiny inputs only)."""
    if len(ffrag) + len(gfrag) > 24:
        raise ValueError("enumeration cutoff exceeded")
    x1, y1 = ffrag.r, gfrag.r

    def walk(prefix):
        x, y = prefix[-1]
        if x == x1 and y == y1:
            yield list(prefix)
            return
        if x < x1:
            prefix.append((x + 1, y))
            yield from walk(prefix)
            prefix.pop()
        if y < y1:
            prefix.append((x, y + 1))
            yield from walk(prefix)
            prefix.pop()
        if x < x1 and y < y1:
            prefix.append((x + 1, y + 1))
            yield from walk(prefix)
            prefix.pop()

    yield from walk([(ffrag.l, gfrag.l)])


class TedOracle:
    """Memoized reference DP for distances between fragments of F and G.

    The recursion always resolves the leftmost characters first, so its
    correctness does not depend on the heavy-child analysis it is used to
    check.  With ``width_cap=2k`` it computes the exact distance over
    width-bounded forest alignments; with ``width_cap=None`` the plain
    tree edit distance.  Values include the half-costs of straddling
    parentheses, matching the fragment-level distance semantics.
    """

    def __init__(self, f: Forest, g: Forest, wt: WeightTable, width_cap: int | None = None):
        self.f = f
        self.g = g
        self.wt = wt
        self.cap = width_cap
        self.memo: dict[tuple[int, int, int, int], object] = {}
        # Precomputed half-cost prefix sums for the all-delete/all-insert bases.
        self.pref_del = _half_prefix(f, wt, left=True)
        self.pref_ins = _half_prefix(g, wt, left=False)
        sys.setrecursionlimit(max(sys.getrecursionlimit(), 100000))

    def ted(self, lf: int, rf: int, lg: int, rg: int):
        cap = self.cap
        if cap is not None and (abs(lf - lg) > cap or abs(rf - rg) > cap):
            return INF
        key = (lf, rf, lg, rg)
        got = self.memo.get(key)
        if got is not None:
            return got
        if lf == rf:
            val = self.pref_ins[rg] - self.pref_ins[lg]
        elif lg == rg:
            val = self.pref_del[rf] - self.pref_del[lf]
        else:
            f, g, wt = self.f, self.g, self.wt
            val = self.ted(lf + 1, rf, lg, rg) + wt.tilde(int(f.codes[lf]), None)
            val = min(val, self.ted(lf, rf, lg + 1, rg) + wt.tilde(None, int(g.codes[lg])))
            mf = int(f.mate[lf])
            mg = int(g.mate[lg])
            if lf < mf < rf and lg < mg < rg:
                cand = (wt.tilde(int(f.codes[lf]), int(g.codes[lg]))
                        + self.ted(lf + 1, mf, lg + 1, mg)
                        + wt.tilde(int(f.codes[mf]), int(g.codes[mg]))
                        + self.ted(mf + 1, rf, mg + 1, rg))
                val = min(val, cand)
        self.memo[key] = val
        return val


def _half_prefix(forest: Forest, wt: WeightTable, left: bool):
    pref = [Fraction(0)] * (len(forest) + 1)
    acc = Fraction(0)
    for i, c in enumerate(forest.codes.tolist()):
        acc += wt.tilde(c, None) if left else wt.tilde(None, c)
        pref[i + 1] = acc
    return pref


def oracle_ted(ffrag: Fragment, gfrag: Fragment, wt: WeightTable):
    """Exact fragment distance; cross-checked against path enumeration."""
    o = TedOracle(ffrag.forest, gfrag.forest, wt)
    return o.ted(ffrag.l, ffrag.r, gfrag.l, gfrag.r)


def oracle_bted(ffrag: Fragment, gfrag: Fragment, wt: WeightTable, k: int):
    """Minimum cost over forest alignments of width <= 2k; INF if none."""
    o = TedOracle(ffrag.forest, gfrag.forest, wt, width_cap=2 * k)
    return o.ted(ffrag.l, ffrag.r, gfrag.l, gfrag.r)


def oracle_ted_capped(ffrag: Fragment, gfrag: Fragment, wt: WeightTable, k):
    """ted if it does not exceed k, else INF."""
    val = oracle_ted(ffrag, gfrag, wt)
    return val if val <= k else INF


def oracle_tilde_ted(ffrag: Fragment, gfrag: Fragment, wt: WeightTable):
    """Fragment distance with the straddler half-costs subtracted.

    Equals the distance between the induced subforests.
    """
    val = oracle_ted(ffrag, gfrag, wt)
    f, g = ffrag.forest, gfrag.forest
    for i in range(ffrag.l, ffrag.r):
        if not (ffrag.l <= int(f.mate[i]) < ffrag.r):
            val -= wt.tilde(int(f.codes[i]), None)
    for j in range(gfrag.l, gfrag.r):
        if not (gfrag.l <= int(g.mate[j]) < gfrag.r):
            val -= wt.tilde(None, int(g.codes[j]))
    return val


def oracle_ted_enumerated(ffrag: Fragment, gfrag: Fragment, wt: WeightTable,
                          width_cap: int | None = None):
    """Minimum path cost over enumerated forest alignments (certifier)."""
    best = INF
    for path in enumerate_alignments(ffrag, gfrag):
        if width_cap is not None and width(path) > width_cap:
            continue
        if is_forest_alignment(ffrag, gfrag, path):
            c = path_cost(ffrag, gfrag, wt, path)
            if c < best:
                best = c
    return best
