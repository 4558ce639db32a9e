"""Shared test helpers: instance generators and slow reference checkers.

The references here are deliberately structured differently from the
production code (verbatim definitions, quadratic scans) so that agreement
between the two is meaningful.
"""

from __future__ import annotations

import random
from fractions import Fraction

import numpy as np

from forestdist.forest import (Alphabet, Forest, close_code, open_code)
from forestdist.weights import WeightTable

try:
    from numba import njit

    def _jit(f):
        return njit(cache=True)(f)
except ImportError:  # pragma: no cover
    def _jit(f):
        return f


# -- generators --------------------------------------------------------------

def random_forest_codes(rng: random.Random, budget: int, alphabet: Alphabet,
                        labels: str = "abc") -> list[int]:
    """Random balanced code sequence with exactly ``budget`` characters."""
    out: list[int] = []

    def gen(b: int):
        while b >= 2:
            s = rng.randrange(2, b + 1, 2)
            sym = alphabet.intern(rng.choice(labels))
            out.append(open_code(sym))
            gen(s - 2)
            out.append(close_code(sym))
            b -= s
    gen(budget)
    return out


def random_forest(rng: random.Random, budget: int, alphabet: Alphabet | None = None,
                  labels: str = "abc") -> Forest:
    alphabet = alphabet if alphabet is not None else Alphabet()
    return Forest(np.array(random_forest_codes(rng, budget, alphabet, labels),
                           dtype=np.int64), alphabet)


def plant_edits(forest: Forest, n_edits: int, rng: random.Random,
                labels: str = "abc") -> Forest:
    """Apply node edits (delete / relabel / insert), each of unit cost."""
    codes = forest.codes.tolist()
    ab = forest.alphabet
    for _ in range(n_edits):
        ops = ["insert"]
        if codes:
            ops += ["delete", "relabel"]
        op = rng.choice(ops)
        f = Forest(np.array(codes, dtype=np.int64), ab)
        n = len(codes)
        if op == "delete":
            i = rng.randrange(n)
            o, c = min(i, int(f.mate[i])), max(i, int(f.mate[i]))
            del codes[c]
            del codes[o]
        elif op == "relabel":
            i = rng.randrange(n)
            o, c = min(i, int(f.mate[i])), max(i, int(f.mate[i]))
            sym = ab.intern(rng.choice(labels))
            codes[o] = open_code(sym)
            codes[c] = close_code(sym)
        else:
            # wrap a random balanced fragment (possibly empty) in a new node
            spots = [0] + [int(f.mate[i]) + 1 for i in range(n) if f.is_close(i)]
            l = rng.choice(spots) if spots else 0
            ends = [l]
            depth = 0
            for j in range(l, n):
                depth += -1 if f.is_close(j) else 1
                if depth < 0:
                    break
                if depth == 0:
                    ends.append(j + 1)
            r = rng.choice(ends)
            sym = ab.intern(rng.choice(labels))
            codes.insert(r, close_code(sym))
            codes.insert(l, open_code(sym))
    return Forest(np.array(codes, dtype=np.int64), ab)


def random_quasimetric(rng: random.Random, alphabet: Alphabet) -> WeightTable:
    """Normalized quasimetric table with entries from {1, 3/2, 2, 3}."""
    choices = [Fraction(1), Fraction(3, 2), Fraction(2), Fraction(3)]
    m = len(alphabet) + 1
    while True:
        entries = [[Fraction(0) if i == j else rng.choice(choices)
                    for j in range(m)] for i in range(m)]
        wt = WeightTable(alphabet, entries)
        if not wt.check_quasimetric():
            return wt


def random_paren_string(rng: random.Random, length: int, n_symbols: int = 2,
                        periodic_bias: float = 0.6) -> np.ndarray:
    """Raw (not necessarily balanced) parenthesis string with planted runs."""
    out: list[int] = []
    while len(out) < length:
        if rng.random() < periodic_bias and length - len(out) > 20:
            p = rng.randrange(1, 9)
            unit = [rng.randrange(2 * n_symbols) for _ in range(p)]
            reps = rng.randrange(3, max(4, (length - len(out)) // p + 1))
            out.extend(unit * reps)
        else:
            out.append(rng.randrange(2 * n_symbols))
    return np.array(out[:length], dtype=np.int64)


def periodic_forest(rng: random.Random, unit_len: int, reps: int,
                    alphabet: Alphabet, labels: str = "ab") -> list[int]:
    """Balanced codes (W)^reps for a random balanced unit of given length."""
    unit = random_forest_codes(rng, unit_len, alphabet, labels)
    return unit * reps


# -- reference implementations ----------------------------------------------

@_jit
def _blacken_reference(codes, k, black):
    """Blacken positions per the periodic-block definition, verbatim.

    For every start l and period p <= 4k whose prefix is count-balanced,
    extend maximally; every fragment of length >= 42k obtained this way
    blackens its interior minus 5k margins.
    """
    n = codes.shape[0]
    for l in range(n):
        for p in range(1, 4 * k + 1):
            if l + p > n:
                break
            closes = 0
            for x in range(l, l + p):
                if codes[x] & 1:
                    closes += 1
            if 2 * closes != p:
                continue
            r = l + p
            while r < n and codes[r] == codes[r - p]:
                r += 1
            if r - l >= 42 * k:
                for x in range(l + 5 * k, r - 5 * k):
                    black[x] = 1


def redblack_reference(codes, k: int) -> np.ndarray:
    codes = np.ascontiguousarray(np.asarray(codes, dtype=np.int64))
    black = np.zeros(len(codes), dtype=np.uint8)
    _blacken_reference(codes, k, black)
    return black


def matching_cost_reference(dec, G, k: int) -> int:
    """Exhaustive minimum matching cost for tiny instances.

    Enumerates every width-bounded forest alignment and, for each, takes
    the pieces it matches perfectly (contiguous equal-character diagonal
    runs); the cost is the number of remaining pieces plus the number of
    maximal runs of G characters not covered by matched-piece images.
    Matching every perfectly-matched piece is optimal, so this minimizes
    the same cost function as the production DP.
    """
    from forestdist.forest import Fragment
    from forestdist.oracle import enumerate_alignments, is_forest_alignment, width
    F = dec.forest
    nF, nG = len(F), len(G)
    pieces = dec.pieces
    ffrag = Fragment(F, 0, nF)
    gfrag = Fragment(G, 0, nG)
    best = len(pieces) + (1 if nG else 0)  # empty matching
    for path in enumerate_alignments(ffrag, gfrag):
        if width(path) > 2 * k:
            continue
        if not is_forest_alignment(ffrag, gfrag, path):
            continue
        aligned = {}
        for (x0, y0), (x1, y1) in zip(path, path[1:]):
            if x1 == x0 + 1 and y1 == y0 + 1 and F.codes[x0] == G.codes[y0]:
                aligned[x0] = y0

        def perfect(a, b):
            if not all(x in aligned for x in range(a, b)):
                return None
            for x in range(a, b - 1):
                if aligned[x + 1] != aligned[x] + 1:
                    return None
            return (aligned[a], aligned[b - 1] + 1) if b > a else None

        covered = np.zeros(nG, dtype=bool)
        unmatched_pieces = 0
        for p in pieces:
            images = [perfect(a, b) for (a, b) in p.fragments()]
            if any(im is None for im in images):
                unmatched_pieces += 1
            else:
                for (ga, gb) in images:
                    covered[ga:gb] = True
        gaps = 0
        prev = True
        for v in covered:
            if not v and prev:
                gaps += 1
            prev = bool(v)
        best = min(best, unmatched_pieces + gaps)
    return best
