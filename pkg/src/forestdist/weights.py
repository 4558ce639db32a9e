"""Normalized weight functions and the half-cost function on parentheses.

Costs are exact: finite values are ``fractions.Fraction``, infinity is
``math.inf`` (float infinity orders above every Fraction and saturates
under addition, which is exactly the required semantics).  The DP engines
never touch Fractions directly; they run on integers scaled by a common
denominator, see :meth:`WeightTable.scaled`.
"""

from __future__ import annotations

import math
from fractions import Fraction

import numpy as np

from .forest import Alphabet

INF = math.inf

Cost = object  # Fraction | float('inf'); kept loose on purpose


class WeightError(ValueError):
    pass


class UnknownSymbol(WeightError):
    pass


def is_inf(x) -> bool:
    return x == INF


def cost_to_decimal(x) -> str:
    """Render a cost as an exact decimal string, or 'INF'.

    Finite costs always have denominators of the form 2^a * 5^b because
    weights enter as decimal literals and are halved at most once.
    """
    if is_inf(x):
        return "INF"
    x = Fraction(x)
    den = x.denominator
    twos = fives = 0
    while den % 2 == 0:
        den //= 2
        twos += 1
    while den % 5 == 0:
        den //= 5
        fives += 1
    if den != 1:
        raise WeightError(f"cost {x} has no finite decimal expansion")
    digits = max(twos, fives)
    scaled = x.numerator * 10 ** digits // x.denominator
    if digits == 0:
        return str(scaled)
    s = str(scaled).rjust(digits + 1, "0")
    whole, frac = s[:-digits], s[-digits:]
    frac = frac.rstrip("0")
    return whole if not frac else f"{whole}.{frac}"


class WeightTable:
    """Dense weight function over (Sigma u {eps})^2 with exact entries.

    The epsilon row/column sits at index ``len(alphabet)`` as of build
    time.  Instances are immutable after construction and shareable.
    """

    def __init__(self, alphabet: Alphabet, entries, unit: bool = False):
        self.alphabet = alphabet
        self.n_symbols = len(alphabet)
        self.eps = self.n_symbols
        self.entries = entries  # (n+1) x (n+1) nested lists of Fraction
        self.unit = unit
        self._scaled: tuple[int, np.ndarray] | None = None
        self.quasimetric_checked = False

    # -- constructors ----------------------------------------------------

    @classmethod
    def unit_weights(cls, alphabet: Alphabet) -> "WeightTable":
        m = len(alphabet) + 1
        entries = [[Fraction(0) if i == j else Fraction(1) for j in range(m)]
                   for i in range(m)]
        return cls(alphabet, entries, unit=True)

    @classmethod
    def from_pairs(cls, alphabet: Alphabet, pairs: dict[tuple[str | None, str | None], Fraction]) -> "WeightTable":
        """Build from {(label-or-None, label-or-None): cost}; missing
        off-diagonal entries default to 1, diagonal to 0."""
        for (a, b) in pairs:
            for lab in (a, b):
                if lab is not None:
                    alphabet.intern(lab)
        m = len(alphabet) + 1
        entries = [[Fraction(0) if i == j else Fraction(1) for j in range(m)]
                   for i in range(m)]
        eps = m - 1
        for (a, b), cost in pairs.items():
            i = eps if a is None else alphabet.id_of(a)
            j = eps if b is None else alphabet.id_of(b)
            entries[i][j] = Fraction(cost)
        return cls(alphabet, entries)

    @classmethod
    def from_file(cls, path, alphabet: Alphabet) -> "WeightTable":
        """Read UTF-8 lines ``x<TAB>y<TAB>cost`` ('-' denotes epsilon).

        Labels mentioned only in the file are interned as well, since they
        participate in the metric closure.
        """
        pairs: dict[tuple[str | None, str | None], Fraction] = {}
        with open(path, "r", encoding="utf-8") as fh:
            for ln, line in enumerate(fh, 1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                parts = line.split("\t")
                if len(parts) != 3:
                    raise WeightError(f"{path}:{ln}: expected 'x<TAB>y<TAB>cost'")
                x, y, cost_text = parts
                try:
                    cost = Fraction(cost_text)
                except ValueError as exc:
                    raise WeightError(f"{path}:{ln}: bad cost {cost_text!r}") from exc
                if cost < 0:
                    raise WeightError(f"{path}:{ln}: negative cost")
                pairs[(None if x == "-" else x, None if y == "-" else y)] = cost
        return cls.from_pairs(alphabet, pairs)

    # -- accessors --------------------------------------------------------

    def w(self, a: int, b: int) -> Fraction:
        """Label-level weight; indices are symbol ids or ``self.eps``."""
        if not (0 <= a <= self.eps and 0 <= b <= self.eps):
            raise UnknownSymbol(f"symbol ids ({a}, {b}) outside table")
        return self.entries[a][b]

    def tilde(self, p: int | None, q: int | None) -> Fraction:
        """Half-cost of a parenthesis pair: half the label-level weight.

        Arguments are character codes (or None for epsilon): the label of
        a code is code >> 1.
        """
        a = self.eps if p is None else (p >> 1)
        b = self.eps if q is None else (q >> 1)
        return self.w(a, b) / 2

    # -- validation -------------------------------------------------------

    def check_normalized(self) -> list[tuple[int, int, Fraction]]:
        """Violations of w(a,a)=0 and w(a,b)>=1; empty iff normalized."""
        bad = []
        m = self.eps + 1
        for i in range(m):
            for j in range(m):
                v = self.entries[i][j]
                if i == j and v != 0:
                    bad.append((i, j, v))
                elif i != j and v < 1:
                    bad.append((i, j, v))
        return bad

    def check_quasimetric(self) -> list[tuple[int, int, int]]:
        """Triples (x, y, z) with w(x,z) > w(x,y) + w(y,z)."""
        bad = []
        m = self.eps + 1
        e = self.entries
        for x in range(m):
            for y in range(m):
                for z in range(m):
                    if e[x][z] > e[x][y] + e[y][z]:
                        bad.append((x, y, z))
        if not bad:
            self.quasimetric_checked = True
        return bad

    def metric_closure(self) -> "WeightTable":
        """All-pairs shortest paths over the complete graph on Sigma u {eps}.

        Output is pointwise at most the input, and satisfies the triangle
        inequality.  Idempotent.
        """
        m = self.eps + 1
        d = [row[:] for row in self.entries]
        for y in range(m):
            dy = d[y]
            for x in range(m):
                dx = d[x]
                via = dx[y]
                for z in range(m):
                    alt = via + dy[z]
                    if alt < dx[z]:
                        dx[z] = alt
        out = WeightTable(self.alphabet, d, unit=self.unit)
        out.quasimetric_checked = True
        return out

    def equals(self, other: "WeightTable") -> bool:
        return self.eps == other.eps and self.entries == other.entries

    # -- integer view ------------------------------------------------------

    def scaled(self) -> tuple[int, np.ndarray]:
        """Return (scale, warr) with warr[a][b] == w(a,b) * scale / 2 exactly.

        All DP arithmetic runs on these integers; dividing a DP value by
        ``scale`` recovers the exact rational cost.
        """
        if self._scaled is None:
            m = self.eps + 1
            lcm = 1
            for row in self.entries:
                for v in row:
                    lcm = lcm * v.denominator // math.gcd(lcm, v.denominator)
            scale = 2 * lcm
            warr = np.zeros((m, m), dtype=np.int64)
            for i in range(m):
                for j in range(m):
                    v = self.entries[i][j] * lcm
                    warr[i, j] = int(v)
            self._scaled = (scale, warr)
        return self._scaled
