"""Repetitiveness-aware universal kernel.

Pipeline: decompose F into size-capped pieces, match them against G with
a flagged DP, merge adjacent clean pieces, shrink each matched pair with
the forest/context reductions, classify periodic blocks inside the
reduced pieces, and emit validated free pairs.  The output is a pair of
forests no larger than the inputs whose capped distance is preserved for
every normalized quasimetric weight function, plus disjoint free blocks
for the optimized DP.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _dpcore, freeopt
from .forest import Forest, Fragment, is_balanced, open_code, close_code
from .freeopt import FreeBlock, InvalidFreeBlock, OverlappingBlocks, validate_free_blocks
from .weights import WeightTable


class KernelError(RuntimeError):
    pass


class NotCountBalanced(ValueError):
    pass


class _TooFar:
    """Certificate that the capped distance exceeds the threshold."""

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "TooFar"

    def __bool__(self):
        return False


TOO_FAR = _TooFar()


class KernelParams:
    """All threshold-derived constants of the kernel in one record."""

    def __init__(self, k: int):
        if k < 1:
            raise ValueError("k must be a positive integer")
        self.k = k
        self.periodic_min_len = 42 * k      # minimum length of a periodic block
        self.max_period = 4 * k             # maximum block period length
        self.black_margin = 5 * k           # trimmed off each end when blackening
        self.forest_red_cap = 158 * k * k   # red budget of a reduced forest
        self.forest_fallback_half = 79 * k * k
        self.context_red_cap = 1152 * k ** 3
        self.vertical_cap = 6 * k           # exponent cap for spine periodicity
        self.primitive_len_cap = 8 * k      # max composed length of a cap period
        self.fallback_depth = 24 * k
        self.fallback_width = 24 * k * k
        self.piece_size = max(2, k ** 3)
        self.cost_cap = 6 * k               # matching-cost bound when ted <= k
        self.small_input = k ** 4
        self.block_period_min = 4 * k
        self.block_period_max = 8 * k       # exclusive


# ---------------------------------------------------------------------------
# pieces and decompositions


@dataclass(frozen=True)
class Piece:
    """A subforest (balanced fragment) or a context of the forest.

    Forest pieces cover [l..r).  Context pieces have extent [l..r) and a
    hole [inl..inr): the halves are [l..inl) and [inr..r).
    """

    kind: str            # "forest" | "context"
    l: int
    r: int
    inl: int = -1
    inr: int = -1

    def fragments(self):
        if self.kind == "forest":
            return [(self.l, self.r)]
        return [(self.l, self.inl), (self.inr, self.r)]

    def length(self) -> int:
        if self.kind == "forest":
            return self.r - self.l
        return (self.inl - self.l) + (self.r - self.inr)


R_LEAF, R_SPLIT, R_CONTEXT, R_EMPTY = 0, 1, 2, 3


@dataclass
class Region:
    kind: int
    i: int
    j: int
    piece: int = -1      # piece index for LEAF / CONTEXT
    m: int = -1          # split point
    left: int = -1
    right: int = -1
    mid: int = -1
    ell: int = 0
    rr: int = 0
    cnt: int = 0


@dataclass
class PieceDecomposition:
    forest: Forest
    t: int
    pieces: list[Piece]
    regions: list[Region]
    root: int


def decompose(forest: Forest, t: int) -> PieceDecomposition:
    """Split the forest into at most max(1, 6n/t - 1) pieces of length <= t.

    Whole subtrees are packed greedily into balanced chunks; a tree too
    large for one chunk is peeled with a context that follows the heavy
    spine for as long as the accumulated context stays within t.
    """
    if t < 2:
        raise ValueError("piece size bound t must be at least 2")
    n = len(forest)
    mate = forest.mate
    hv = forest.heavy
    pieces: list[Piece] = []
    regions: list[Region] = []

    def add(region: Region) -> int:
        regions.append(region)
        return len(regions) - 1

    def forest_region(i: int, j: int) -> int:
        if i == j:
            return add(Region(R_EMPTY, i, j))
        if j - i <= t:
            pieces.append(Piece("forest", i, j))
            return add(Region(R_LEAF, i, j, piece=len(pieces) - 1))
        segs: list[tuple[str, int, int]] = []
        cs = i
        a = i
        while a < j:
            b = int(mate[a]) + 1
            if b - a > t:
                if cs < a:
                    segs.append(("chunk", cs, a))
                segs.append(("tree", a, b))
                cs = b
            elif b - cs > t:
                segs.append(("chunk", cs, a))
                cs = a
            a = b
        if cs < j:
            segs.append(("chunk", cs, j))

        def seg_region(idx: int) -> int:
            kind, sa, sb = segs[idx]
            if kind == "chunk":
                pieces.append(Piece("forest", sa, sb))
                return add(Region(R_LEAF, sa, sb, piece=len(pieces) - 1))
            return tree_region(sa, sb)

        # fold right-nested so each region's left part is one segment
        def fold(idx: int) -> int:
            if idx == len(segs) - 1:
                return seg_region(idx)
            left = seg_region(idx)
            right = fold(idx + 1)
            return add(Region(R_SPLIT, segs[idx][1], j, m=segs[idx][2],
                              left=left, right=right))

        return fold(0)

    def tree_region(a: int, b: int) -> int:
        u = a
        while True:
            h = int(hv.heavy_child[u])
            if h < 0:
                break
            if (b - a) - (int(hv.size[h]) - 2) <= t:
                u = h
            else:
                break
        inl, inr = u + 1, int(mate[u])
        pieces.append(Piece("context", a, b, inl, inr))
        pid = len(pieces) - 1
        mid = forest_region(inl, inr)
        return add(Region(R_CONTEXT, a, b, piece=pid, mid=mid,
                          ell=inl - a, rr=b - inr))

    root = forest_region(0, n)
    for rid in range(len(regions)):  # children have smaller ids
        reg = regions[rid]
        if reg.kind == R_LEAF:
            reg.cnt = 1
        elif reg.kind == R_SPLIT:
            reg.cnt = regions[reg.left].cnt + regions[reg.right].cnt
        elif reg.kind == R_CONTEXT:
            reg.cnt = 1 + regions[reg.mid].cnt
    dec = PieceDecomposition(forest, t, pieces, regions, root)
    cnt = len(pieces)
    if cnt > 1 and t * (cnt + 1) > 6 * n:
        raise KernelError(f"decomposition produced {cnt} pieces for n={n}, t={t}")
    return dec


def verify_decomposition(dec: PieceDecomposition, forest: Forest | None = None,
                         t: int | None = None) -> bool:
    """Structural check of a decomposition, independent of its builder.

    Verifies piece shapes, lengths, disjointness, exact coverage, the
    count bound, and recursive well-formedness by laminar reconstruction.
    """
    forest = forest or dec.forest
    t = t or dec.t
    n = len(forest)
    mate = forest.mate
    pieces = dec.pieces
    cnt = len(pieces)
    if cnt == 0:
        return n == 0
    if cnt > 1 and t * (cnt + 1) > 6 * n:
        return False
    frags: list[tuple[int, int]] = []
    for p in pieces:
        if p.length() == 0 or p.length() > t:
            return False
        if p.kind == "forest":
            if not is_balanced(Fragment(forest, p.l, p.r)):
                return False
        else:
            if not (p.l < p.inl <= p.inr < p.r):
                return False
            if forest.is_close(p.l) or int(mate[p.l]) != p.r - 1:
                return False  # extent must be a tree
            if not is_balanced(Fragment(forest, p.inl, p.inr)):
                return False
        frags.extend(p.fragments())
    frags.sort()
    pos = 0
    for a, b in frags:
        if a != pos or b < a:
            return False
        pos = b
    if pos != n:
        return False

    order = sorted(range(cnt), key=lambda i: pieces[i].l)

    def check(i: int, j: int, items: list[int]) -> bool:
        if i == j:
            return not items
        if not items:
            return False
        p = pieces[items[0]]
        if p.l != i:
            return False
        if p.kind == "forest":
            return check(p.r, j, items[1:])
        mids, after = [], []
        for q in items[1:]:
            ql = pieces[q].l
            if p.inl <= ql and pieces[q].r <= p.inr:
                mids.append(q)
            elif ql >= p.r:
                after.append(q)
            else:
                return False
        return check(p.inl, p.inr, mids) and check(p.r, j, after)

    return check(0, n, order)


# ---------------------------------------------------------------------------
# piece matching


@dataclass
class MatchedPair:
    piece: Piece
    g: tuple  # (gl, gr) for forest pieces; (gl, g_inl, g_inr, gr) for contexts


@dataclass
class PieceMatching:
    pairs: list[MatchedPair]
    cost: int


def _hash_tools(F: Forest, G: Forest):
    hF1, hF2 = F._ensure_hashes()
    hG1, hG2 = G._ensure_hashes()
    from .forest import _HASH_BASE_1, _HASH_BASE_2, MASK64
    maxlen = max(len(F), len(G)) + 1
    pw1 = [1] * maxlen
    pw2 = [1] * maxlen
    for i in range(1, maxlen):
        pw1[i] = (pw1[i - 1] * _HASH_BASE_1) & MASK64
        pw2[i] = (pw2[i - 1] * _HASH_BASE_2) & MASK64

    def eq(fl, fr, gl, gr):
        if fr - fl != gr - gl:
            return False
        span = fr - fl
        if (hF1[fr] - hF1[fl] * pw1[span]) & MASK64 != (hG1[gr] - hG1[gl] * pw1[span]) & MASK64:
            return False
        return (hF2[fr] - hF2[fl] * pw2[span]) & MASK64 == (hG2[gr] - hG2[gl] * pw2[span]) & MASK64

    return eq


def _match_arrays(dec: PieceDecomposition, G: Forest, k: int):
    F = dec.forest
    nG = len(G)
    regions = dec.regions
    nR = len(regions)
    twok = 2 * k
    W = 2 * twok + 1
    rkind = np.empty(nR, dtype=np.int64)
    ri = np.empty(nR, dtype=np.int64)
    rj = np.empty(nR, dtype=np.int64)
    rcnt = np.empty(nR, dtype=np.int64)
    rm = np.full(nR, -1, dtype=np.int64)
    rleft = np.full(nR, -1, dtype=np.int64)
    rright = np.full(nR, -1, dtype=np.int64)
    rmid = np.full(nR, -1, dtype=np.int64)
    rell = np.zeros(nR, dtype=np.int64)
    rrr = np.zeros(nR, dtype=np.int64)
    eqfull = np.zeros((nR, W), dtype=np.uint8)
    eqctx = np.zeros((nR, W, W), dtype=np.uint8)
    eq = _hash_tools(F, G)
    for rid, reg in enumerate(regions):
        rkind[rid] = reg.kind
        ri[rid] = reg.i
        rj[rid] = reg.j
        rcnt[rid] = reg.cnt
        rm[rid] = reg.m
        rleft[rid] = reg.left
        rright[rid] = reg.right
        rmid[rid] = reg.mid
        rell[rid] = reg.ell
        rrr[rid] = reg.rr
        if reg.kind == R_LEAF:
            span = reg.j - reg.i
            for a in range(W):
                ip = reg.i - twok + a
                if 0 <= ip and ip + span <= nG and eq(reg.i, reg.j, ip, ip + span):
                    eqfull[rid, a] = 1
        elif reg.kind == R_CONTEXT:
            ell, rr = reg.ell, reg.rr
            for a in range(W):
                ip = reg.i - twok + a
                if ip < 0 or ip + ell > nG or not eq(reg.i, reg.i + ell, ip, ip + ell):
                    continue
                for b in range(W):
                    jp = reg.j - twok + b
                    if jp > nG or jp - rr < ip + ell:
                        continue
                    if not eq(reg.j - rr, reg.j, jp - rr, jp):
                        continue
                    if is_balanced(Fragment(G, ip + ell, jp - rr)):
                        eqctx[rid, a, b] = 1
    # decompose() appends child regions before their parents, so plain id
    # order already evaluates children first.
    order = np.arange(nR, dtype=np.int64)
    return (order, rkind, ri, rj, rcnt, rm, rleft, rright, rmid, rell, rrr,
            eqfull, eqctx, twok, W)


INF32 = 1 << 30


def match_pieces(dec: PieceDecomposition, G: Forest, k: int) -> PieceMatching:
    """Minimum-cost matching of decomposition pieces into G.

    Cost counts unmatched pieces of the decomposition plus maximal
    unmatched fragments of G.  Matched pieces are found at offsets within
    2k of their original positions.
    """
    F = dec.forest
    nF, nG = len(F), len(G)
    if nF == 0:
        return PieceMatching([], 1 if nG else 0)
    if nG == 0:
        return PieceMatching([], len(dec.pieces))
    (order, rkind, ri, rj, rcnt, rm, rleft, rright, rmid, rell, rrr,
     eqfull, eqctx, twok, W) = _match_arrays(dec, G, k)
    val = np.full((len(dec.regions), W, W, 4), INF32, dtype=np.int32)
    _dpcore.fill_match_dp(order, rkind, ri, rj, rcnt, rm, rleft, rright,
                          rmid, rell, rrr, eqfull, eqctx, twok, nG, val)
    root = dec.root
    a0 = twok
    b0 = nG - (nF - twok)
    if not (0 <= b0 < W):
        raise KernelError("G window does not cover the root state; check the 2k guard")
    best = INF32
    bestf = 0
    for f in range(4):
        if val[root, a0, b0, f] < best:
            best = int(val[root, a0, b0, f])
            bestf = f
    pairs = _match_traceback(dec, G, k, val, (root, a0, b0, bestf),
                             rcnt, eqfull, eqctx, twok, W)
    return PieceMatching(pairs, best)


def _match_traceback(dec, G, k, val, start, rcnt, eqfull, eqctx, twok, W):
    regions = dec.regions
    pieces = dec.pieces
    nG = len(G)
    out: list[MatchedPair] = []
    stack = [start]
    while stack:
        rid, a, b, f = stack.pop()
        reg = regions[rid]
        i, j = reg.i, reg.j
        ip = i - twok + a
        jp = j - twok + b
        fl, fr = f >> 1, f & 1
        v = int(val[rid, a, b, f])
        if v >= INF32:
            raise KernelError("matching traceback hit an infeasible state")
        if fl == 0 and fr == 0 and v == int(rcnt[rid]) + 1:
            continue
        lim = min(jp - 1, i + twok)
        if fl == 0 and ip < lim:
            if v == int(val[rid, a + 1, b, fr]):
                stack.append((rid, a + 1, b, fr))
                continue
            if v == int(val[rid, a + 1, b, 2 + fr]) + 1:
                stack.append((rid, a + 1, b, 2 + fr))
                continue
        lim = max(ip + 1, j - twok)
        if fr == 0 and jp > lim:
            if v == int(val[rid, a, b - 1, 2 * fl]):
                stack.append((rid, a, b - 1, 2 * fl))
                continue
            if v == int(val[rid, a, b - 1, 2 * fl + 1]) + 1:
                stack.append((rid, a, b - 1, 2 * fl + 1))
                continue
        if reg.kind == R_LEAF:
            if fl == 1 and fr == 1 and a == b and eqfull[rid, a] and v == 0:
                out.append(MatchedPair(pieces[reg.piece], (ip, jp)))
                continue
        elif reg.kind == R_SPLIT:
            hit = False
            lid, rrid = reg.left, reg.right
            for mp in range(max(reg.m - twok, ip), min(reg.m + twok, jp) + 1):
                if mp == ip:
                    w = int(val[rrid, mp - (regions[rrid].i - twok), b, f])
                    if w < INF32 and v == w + int(rcnt[lid]):
                        stack.append((rrid, mp - (regions[rrid].i - twok), b, f))
                        hit = True
                        break
                elif mp == jp:
                    w = int(val[lid, a, mp - (regions[lid].j - twok), f])
                    if w < INF32 and v == w + int(rcnt[rrid]):
                        stack.append((lid, a, mp - (regions[lid].j - twok), f))
                        hit = True
                        break
                else:
                    bl = mp - (regions[lid].j - twok)
                    ar = mp - (regions[rrid].i - twok)
                    if not (0 <= bl < W and 0 <= ar < W):
                        continue
                    for frl in range(2):
                        v1 = int(val[lid, a, bl, 2 * fl + frl])
                        if v1 >= INF32:
                            continue
                        for flr in range(2):
                            v2 = int(val[rrid, ar, b, 2 * flr + fr])
                            if v2 >= INF32:
                                continue
                            cand = v1 + v2 - (1 if frl == 0 and flr == 0 else 0)
                            if v == cand:
                                stack.append((lid, a, bl, 2 * fl + frl))
                                stack.append((rrid, ar, b, 2 * flr + fr))
                                hit = True
                                break
                        if hit:
                            break
                if hit:
                    break
            if hit:
                continue
        elif reg.kind == R_CONTEXT:
            ell, rr = reg.ell, reg.rr
            mid = reg.mid
            hit = False
            if fl == 1 and fr == 1 and eqctx[rid, a, b]:
                gocc = (ip, ip + ell, jp - rr, jp)
                if ip + ell == jp - rr:
                    if v == int(rcnt[mid]):
                        out.append(MatchedPair(pieces[reg.piece], gocc))
                        hit = True
                else:
                    for ff in range(4):
                        if v == int(val[mid, a, b, ff]):
                            out.append(MatchedPair(pieces[reg.piece], gocc))
                            stack.append((mid, a, b, ff))
                            hit = True
                            break
            if hit:
                continue
            i2 = max(reg.i + ell - twok, ip)
            j2 = min(reg.j - rr + twok, jp)
            if i2 < j2:
                am = i2 - (reg.i + ell - twok)
                bm = j2 - (reg.j - rr - twok)
                if 0 <= am < W and 0 <= bm < W:
                    for flp in range(2):
                        if ip < i2:
                            if fl != 0:
                                continue
                        elif flp != fl:
                            continue
                        for frp in range(2):
                            if jp > j2:
                                if fr != 0:
                                    continue
                            elif frp != fr:
                                continue
                            w = int(val[mid, am, bm, 2 * flp + frp])
                            if w >= INF32:
                                continue
                            cand = w + 1 + (1 if fl < flp else 0) + (1 if fr < frp else 0)
                            if v == cand:
                                stack.append((mid, am, bm, 2 * flp + frp))
                                hit = True
                                break
                        if hit:
                            break
            if hit:
                continue
        raise KernelError("matching traceback found no producing case")
    return out


# ---------------------------------------------------------------------------
# merging adjacent clean pieces


@dataclass
class _HNode:
    piece: Piece
    g: tuple | None
    clean: bool
    children: list


@dataclass
class MergeResult:
    pieces: list[Piece]
    pairs: list[MatchedPair]
    dirty: int
    total: int


def merge_matching(dec: PieceDecomposition, G: Forest,
                   matching: PieceMatching) -> MergeResult:
    """Repeatedly union adjacent clean pieces; dirty count bounds the rest.

    A matched piece is clean when no character adjacent to it (or to its
    image in G) is unmatched.  The merged decomposition has at most 5t+1
    pieces, t being the number of dirty pieces, and previously clean
    pieces stay clean.
    """
    F = dec.forest
    nF, nG = len(F), len(G)
    matched: dict[tuple, tuple] = {}
    for mp in matching.pairs:
        matched[(mp.piece.l, mp.piece.r, mp.piece.inl, mp.piece.inr)] = mp.g
    fmask = np.zeros(nF, dtype=bool)
    gmask = np.zeros(nG, dtype=bool)
    for mp in matching.pairs:
        for (a, b) in mp.piece.fragments():
            fmask[a:b] = True
        for (a, b) in _g_fragments(mp):
            gmask[a:b] = True

    def is_clean(piece: Piece, g: tuple | None) -> bool:
        if g is None:
            return False
        ffrags = piece.fragments()
        for (a, b) in ffrags:
            for pos in (a - 1, b):
                if 0 <= pos < nF and not fmask[pos] \
                        and not any(x <= pos < y for (x, y) in ffrags):
                    return False
        gfrags = [(g[0], g[1])] if piece.kind == "forest" else [(g[0], g[1]), (g[2], g[3])]
        for (a, b) in gfrags:
            for pos in (a - 1, b):
                if 0 <= pos < nG and not gmask[pos] \
                        and not any(x <= pos < y for (x, y) in gfrags):
                    return False
        return True

    def build(rid) -> list[_HNode]:
        reg = dec.regions[rid]
        if reg.kind == R_EMPTY:
            return []
        if reg.kind == R_LEAF:
            p = dec.pieces[reg.piece]
            g = matched.get((p.l, p.r, p.inl, p.inr))
            return [_HNode(p, g, is_clean(p, g), [])]
        if reg.kind == R_SPLIT:
            return build(reg.left) + build(reg.right)
        p = dec.pieces[reg.piece]
        g = matched.get((p.l, p.r, p.inl, p.inr))
        return [_HNode(p, g, is_clean(p, g), build(reg.mid))]

    roots = build(dec.root)
    dirty = _count_dirty(roots)

    def merge_leaf_runs(children: list[_HNode]) -> list[_HNode]:
        out: list[_HNode] = []
        for ch in children:
            prev = out[-1] if out else None
            if (prev is not None and ch.clean and prev.clean
                    and not ch.children and not prev.children
                    and prev.piece.kind == "forest" and ch.piece.kind == "forest"):
                if prev.piece.r != ch.piece.l or prev.g[1] != ch.g[0]:
                    raise KernelError("clean neighbours are not adjacent")
                out[-1] = _HNode(Piece("forest", prev.piece.l, ch.piece.r),
                                 (prev.g[0], ch.g[1]), True, [])
            else:
                out.append(ch)
        return out

    def process(node: _HNode):
        for ch in node.children:
            process(ch)
        node.children = merge_leaf_runs(node.children)
        if not node.clean or node.piece.kind != "context":
            return
        # absorb a clean leaf at the left or right edge of the middle
        if node.children and node.children[0].clean and not node.children[0].children \
                and node.children[0].piece.kind == "forest":
            ch = node.children.pop(0)
            p, g = node.piece, node.g
            node.piece = Piece("context", p.l, p.r, ch.piece.r, p.inr)
            node.g = (g[0], ch.g[1], g[2], g[3])
        if node.children and node.children[-1].clean and not node.children[-1].children \
                and node.children[-1].piece.kind == "forest":
            ch = node.children.pop()
            p, g = node.piece, node.g
            node.piece = Piece("context", p.l, p.r, p.inl, ch.piece.l)
            node.g = (g[0], g[1], ch.g[0], g[3])
        if node.piece.inl == node.piece.inr:
            # the hole closed up: the context became a subtree
            node.piece = Piece("forest", node.piece.l, node.piece.r)
            node.g = (node.g[0], node.g[3])
            return
        if len(node.children) == 1 and node.children[0].clean \
                and node.children[0].piece.kind == "context":
            ch = node.children[0]
            p, q = node.piece, ch.piece
            if p.inl != q.l or q.r != p.inr:
                raise KernelError("nested clean contexts are not adjacent")
            node.piece = Piece("context", p.l, p.r, q.inl, q.inr)
            node.g = (node.g[0], ch.g[1], ch.g[2], node.g[3])
            node.children = ch.children

    for ch in roots:
        process(ch)
    roots = merge_leaf_runs(roots)

    pieces_out: list[Piece] = []
    pairs_out: list[MatchedPair] = []

    def collect(node: _HNode):
        pieces_out.append(node.piece)
        if node.g is not None:
            pairs_out.append(MatchedPair(node.piece, node.g))
        for ch in node.children:
            collect(ch)

    for nd in roots:
        collect(nd)
    total = len(pieces_out)
    if total > 5 * dirty + 1:
        raise KernelError(f"merge bound violated: {total} pieces for {dirty} dirty")
    return MergeResult(pieces_out, pairs_out, dirty, total)


def _count_dirty(roots: list[_HNode]) -> int:
    cnt = 0
    stack = list(roots)
    while stack:
        nd = stack.pop()
        if not nd.clean:
            cnt += 1
        stack.extend(nd.children)
    return cnt


def _g_fragments(mp: MatchedPair):
    if mp.piece.kind == "forest":
        return [(mp.g[0], mp.g[1])]
    gl, gi, gj, gr = mp.g
    return [(gl, gi), (gj, gr)]


# ---------------------------------------------------------------------------
# pipeline


@dataclass
class PipelineResult:
    matched: list[MatchedPair]
    pieces: list[Piece]
    cost: int
    dirty: int
    total_pieces: int
    unmatched_chars: int


def decomposition_pipeline(F: Forest, G: Forest, k: int):
    """Size-O(k) piece matching or a TooFar certificate.

    Guards: length gap beyond 2k, or matching cost beyond 6k, certify
    that the distance exceeds k.  Inputs shorter than k^4 skip matching.
    """
    nF, nG = len(F), len(G)
    if abs(nF - nG) > 2 * k:
        return TOO_FAR
    params = KernelParams(k)
    if nF < params.small_input:
        return PipelineResult([], [], 0, 0, 0, nF)
    dec = decompose(F, params.piece_size)
    matching = match_pieces(dec, G, k)
    if matching.cost > params.cost_cap:
        return TOO_FAR
    merged = merge_matching(dec, G, matching)
    unmatched = nF - sum(mp.piece.length() for mp in merged.pairs)
    return PipelineResult(merged.pairs, merged.pieces, matching.cost,
                          merged.dirty, merged.total, unmatched)


# ---------------------------------------------------------------------------
# periodic blocks, red/black classification


@dataclass
class RedBlackLabels:
    black: np.ndarray            # uint8 per position
    blocks: list[tuple[int, int, int]]  # (l, r, shortest period) of used runs

    @property
    def red_count(self) -> int:
        return int(len(self.black) - self.black.sum())

    @property
    def black_count(self) -> int:
        return int(self.black.sum())


def find_periodic_blocks(codes, k: int) -> RedBlackLabels:
    """Classify characters of a raw parenthesis string as red or black.

    A position is black when it lies at least 5k inside some fragment of
    length >= 42k having a string period of length <= 4k with equally
    many opening and closing parentheses.  The block set returned holds
    one maximal run per shortest period, enough to witness every black
    position.
    """
    codes = np.ascontiguousarray(np.asarray(codes, dtype=np.int64))
    n = len(codes)
    params = KernelParams(k)
    black = np.zeros(n, dtype=np.uint8)
    blocks: list[tuple[int, int, int]] = []
    minlen = params.periodic_min_len
    if n < minlen:
        return RedBlackLabels(black, blocks)
    margin = params.black_margin
    buf = np.empty((n // max(1, minlen - params.max_period) + 2, 2), dtype=np.int64)
    for p in range(1, params.max_period + 1):
        cnt = _dpcore.periodic_runs_mark(codes, p, minlen, buf)
        for idx in range(int(cnt)):
            l = int(buf[idx, 0])
            r = int(buf[idx, 1])
            p0 = int(_dpcore.shortest_period(codes, l, r))
            if p0 != p:
                continue  # this run is recorded at its shortest period
            closes = int((codes[l:l + p0] & 1).sum())
            if 2 * closes != p0:
                continue
            blocks.append((l, r, p0))
            black[l + margin: r - margin] = 1
    return RedBlackLabels(black, blocks)


def balanced_rotation(codes) -> int:
    """Index p such that Q[p..)Q[..p) is balanced (first excess minimum)."""
    codes = np.asarray(codes, dtype=np.int64)
    opens = len(codes) - int((codes & 1).sum())
    if 2 * opens != len(codes):
        raise NotCountBalanced("rotation needs equally many opening and closing parentheses")
    best_pos = 0
    best = 0
    acc = 0
    for i, c in enumerate(codes.tolist()):
        acc += -1 if (c & 1) else 1
        if acc < best:
            best = acc
            best_pos = i + 1
    return best_pos


def periodicity_reduction(seq, cap: int, is_member) -> list:
    """Replace occurrences of Q^{cap+1} by Q^{cap} until none remain.

    ``is_member`` recognizes the primitive strings Q the reduction may
    use; only the stated replacements are ever applied.
    """
    s = list(seq)
    changed = True
    while changed:
        changed = False
        n = len(s)
        max_q = n // (cap + 1)
        for q in range(1, max_q + 1):
            for i in range(0, n - q * (cap + 1) + 1):
                unit = tuple(s[i:i + q])
                if not is_member(unit):
                    continue
                if tuple(s[i:i + q * (cap + 1)]) == unit * (cap + 1):
                    del s[i:i + q]
                    changed = True
                    break
            if changed:
                break
    return s


def _seq_primitive(seq) -> bool:
    n = len(seq)
    if n == 0:
        return False
    fail = [0] * (n + 1)
    fail[0] = -1
    k = -1
    for i in range(n):
        while k >= 0 and seq[k] != seq[i]:
            k = fail[k]
        k += 1
        fail[i + 1] = k
    p = n - fail[n]
    return p == n or n % p != 0


# ---------------------------------------------------------------------------
# reductions


def forest_reduction(codes, k: int, alphabet) -> np.ndarray:
    """Equivalent forest with at most 158k^2 red characters.

    Returns the input unchanged when it is already within budget,
    otherwise the flat fallback (_a^{79k^2} )_a^{79k^2}.
    """
    codes = np.asarray(codes, dtype=np.int64)
    params = KernelParams(k)
    labels = find_periodic_blocks(codes, k)
    if labels.red_count <= params.forest_red_cap:
        return codes
    half = params.forest_fallback_half
    sym = 0  # first interned symbol
    out = np.empty(2 * half, dtype=np.int64)
    out[:half] = open_code(sym)
    out[half:] = close_code(sym)
    return out


def _factor_depth1(left: np.ndarray, right: np.ndarray):
    """Split a context into depth-1 layers (label, F_i codes, G_i codes).

    The spine consists of the opens of the left half unmatched within it,
    paired outermost-first with the closes of the right half unmatched
    within it.
    """
    stack: list[int] = []
    for i, c in enumerate(left.tolist()):
        if c & 1:
            if not stack:
                raise KernelError("left context half has an unmatched close")
            stack.pop()
        else:
            stack.append(i)
    spine_l = stack  # unmatched opens, outermost first
    closes: list[int] = []
    stack = []
    for i, c in enumerate(right.tolist()):
        if c & 1:
            if stack:
                stack.pop()
            else:
                closes.append(i)
        else:
            stack.append(i)
    if stack:
        raise KernelError("right context half has an unmatched open")
    spine_r = closes[::-1]  # outermost first, positions decreasing
    if len(spine_l) != len(spine_r) or not spine_l:
        raise KernelError("context halves disagree on depth")
    layers = []
    for d, (o, c) in enumerate(zip(spine_l, spine_r)):
        if int(left[o]) >> 1 != int(right[c]) >> 1:
            raise KernelError("context spine labels disagree")
        fo_end = spine_l[d + 1] if d + 1 < len(spine_l) else len(left)
        gi_start = spine_r[d + 1] + 1 if d + 1 < len(spine_r) else 0
        layers.append((int(left[o]) >> 1,
                       left[o + 1: fo_end],
                       right[gi_start: c]))
    return layers


def context_reduction(left, right, k: int, alphabet) -> tuple[np.ndarray, np.ndarray]:
    """Equivalent context with at most 1152k^3 red characters.

    Factors the context into depth-1 layers, reduces the hanging forests,
    caps vertical periodicity at exponent 6k over primitive layer runs of
    composed length at most 8k, and falls back to a fixed aperiodic
    staircase context of length exactly 1152k^3 when still too red.
    """
    left = np.asarray(left, dtype=np.int64)
    right = np.asarray(right, dtype=np.int64)
    params = KernelParams(k)
    layers = _factor_depth1(left, right)
    reduced = []
    for (sym, f_codes, g_codes) in layers:
        reduced.append((sym,
                        forest_reduction(f_codes, k, alphabet),
                        forest_reduction(g_codes, k, alphabet)))
    ids: dict[tuple, int] = {}
    id_seq: list[int] = []
    id_len: list[int] = []
    id_layer: list[tuple] = []
    for (sym, fc, gc) in reduced:
        key = (sym, fc.tobytes(), gc.tobytes())
        lid = ids.get(key)
        if lid is None:
            lid = len(ids)
            ids[key] = lid
            id_len.append(2 + len(fc) + len(gc))
            id_layer.append((sym, fc, gc))
        id_seq.append(lid)

    def member(unit) -> bool:
        if sum(id_len[x] for x in unit) > params.primitive_len_cap:
            return False
        return _seq_primitive(unit)

    capped = periodicity_reduction(id_seq, params.vertical_cap, member)
    lparts, rparts = [], []
    for lid in capped:
        sym, fc, gc = id_layer[lid]
        lparts.append(np.concatenate(([open_code(sym)], fc)))
        rparts.append(np.concatenate((gc, [close_code(sym)])))
    new_left = np.concatenate(lparts) if lparts else np.empty(0, dtype=np.int64)
    new_right = np.concatenate(rparts[::-1]) if rparts else np.empty(0, dtype=np.int64)
    red = (find_periodic_blocks(new_left, k).red_count
           + find_periodic_blocks(new_right, k).red_count)
    if red <= params.context_red_cap:
        return new_left, new_right
    # staircase fallback of length exactly 1152k^3
    sym = 0
    lparts, rparts = [], []
    for i in range(params.fallback_depth):
        lparts.append(np.concatenate((np.full(i + 1, open_code(sym), dtype=np.int64),
                                      np.full(i, close_code(sym), dtype=np.int64))))
        rparts.append(np.concatenate((
            np.full(params.fallback_width - i - 1, open_code(sym), dtype=np.int64),
            np.full(params.fallback_width - i, close_code(sym), dtype=np.int64))))
    return np.concatenate(lparts), np.concatenate(rparts[::-1])


# ---------------------------------------------------------------------------
# free-pair extraction and the complete kernel


@dataclass
class _PlacedPart:
    codes: np.ndarray
    f_off: int
    g_off: int


@dataclass
class KernelResult:
    f_out: Forest
    g_out: Forest
    blocks: list[FreeBlock]
    dropped_blocks: int
    pipeline: PipelineResult
    debug: list[str] = field(default_factory=list)

    @property
    def nonfree_chars(self) -> int:
        covered = sum(b.q_f - b.p_f for b in self.blocks)
        return len(self.f_out) - covered


def extract_free_pairs(f_out: Forest, g_out: Forest, parts: list[_PlacedPart],
                       k: int) -> tuple[list[FreeBlock], int]:
    """Turn periodic blocks inside matched parts into validated free pairs.

    Each block's shortest period is rotated to a balanced string, the
    block is trimmed to a power of the rotation, one period R (with
    4k <= |R| < 8k) is reserved as a spare on each side, and the result
    is validated against the free-pair definition; violators are dropped,
    never repaired.
    """
    params = KernelParams(k)
    blocks: list[FreeBlock] = []
    dropped = 0
    for part in parts:
        labels = find_periodic_blocks(part.codes, k)
        for (l, r, q) in labels.blocks:
            rot = balanced_rotation(part.codes[l:l + q])
            l2 = l + rot
            m = (r - l2) // q
            r2 = l2 + m * q
            reps = -(-params.block_period_min // q)  # ceil(4k/q)
            rlen = reps * q
            big = (r2 - l2) // rlen
            if big < 3:
                dropped += 1
                continue
            r3 = l2 + big * rlen
            period = Forest(np.tile(part.codes[l2:l2 + q], reps), f_out.alphabet)
            blk = FreeBlock(part.f_off + l2 + rlen, part.f_off + r3 - rlen,
                            part.g_off + l2 + rlen, part.g_off + r3 - rlen,
                            period, big - 2)
            try:
                validate_free_blocks(f_out, g_out, [blk], k)
            except InvalidFreeBlock:
                dropped += 1
                continue
            blocks.append(blk)
    blocks.sort(key=lambda b: b.p_f)
    kept: list[FreeBlock] = []
    for blk in blocks:
        if kept and blk.p_f < kept[-1].q_f:
            dropped += 1
            continue
        kept.append(blk)
    return kept, dropped


def kernelize(F: Forest, G: Forest, k: int, debug: bool = False):
    """Distance-preserving shrink plus free blocks, or TooFar.

    For every normalized quasimetric weight function the capped distance
    ted_{<=k} of the output pair equals that of the input pair; the
    output forests never grow.
    """
    pipeline = decomposition_pipeline(F, G, k)
    if pipeline is TOO_FAR:
        return TOO_FAR
    dbg: list[str] = []
    if debug:
        dbg.append(f"pipeline cost={pipeline.cost} dirty={pipeline.dirty} "
                   f"pieces={pipeline.total_pieces} matched={len(pipeline.matched)}")
    f_repl: list[tuple[int, int, np.ndarray]] = []
    g_repl: list[tuple[int, int, np.ndarray]] = []
    part_specs = []  # (piece, g, parts-of-codes) aligned with replacements
    for mp in pipeline.matched:
        p = mp.piece
        if p.kind == "forest":
            codes = F.codes[p.l:p.r]
            new = forest_reduction(codes, k, F.alphabet)
            f_repl.append((p.l, p.r, new))
            g_repl.append((mp.g[0], mp.g[1], new))
            part_specs.append((("forest",), (p.l,), (mp.g[0],), (new,)))
            if debug and len(new) != len(codes):
                dbg.append(f"forest piece [{p.l},{p.r}) reduced {len(codes)}->{len(new)}")
        else:
            lc = F.codes[p.l:p.inl]
            rc = F.codes[p.inr:p.r]
            nl, nr = context_reduction(lc, rc, k, F.alphabet)
            f_repl.append((p.l, p.inl, nl))
            f_repl.append((p.inr, p.r, nr))
            gl, gi, gj, gr = mp.g
            g_repl.append((gl, gi, nl))
            g_repl.append((gj, gr, nr))
            part_specs.append((("context",), (p.l, p.inr), (gl, gj), (nl, nr)))
            if debug and (len(nl) != len(lc) or len(nr) != len(rc)):
                dbg.append(f"context piece [{p.l},{p.r}) halves reduced "
                           f"{len(lc)}+{len(rc)}->{len(nl)}+{len(nr)}")

    f_codes, f_newpos = _splice(F.codes, f_repl)
    g_codes, g_newpos = _splice(G.codes, g_repl)
    f_out = Forest(f_codes, F.alphabet)
    g_out = Forest(g_codes, G.alphabet)
    if len(f_out) > len(F):
        raise KernelError("kernel output grew, reductions are broken")

    parts: list[_PlacedPart] = []
    for (_, f_offs, g_offs, codes_list) in part_specs:
        for off_f, off_g, codes in zip(f_offs, g_offs, codes_list):
            parts.append(_PlacedPart(np.asarray(codes, dtype=np.int64),
                                     f_newpos[off_f], g_newpos[off_g]))
    blocks, dropped = extract_free_pairs(f_out, g_out, parts, k)
    if debug:
        for b in blocks:
            dbg.append(f"block F[{b.p_f},{b.q_f}) G[{b.p_g},{b.q_g}) "
                       f"|R|={len(b.period)} e={b.exponent}")
        if dropped:
            dbg.append(f"dropped {dropped} candidate blocks")
    return KernelResult(f_out, g_out, blocks, dropped, pipeline, dbg)


def _splice(codes: np.ndarray, repl: list[tuple[int, int, np.ndarray]]):
    """Replace fragments [a..b) by new code arrays; returns new codes plus
    a map from old replacement starts to new offsets."""
    repl = sorted(repl, key=lambda x: x[0])
    for (a1, b1, _), (a2, b2, _) in zip(repl, repl[1:]):
        if b1 > a2:
            raise KernelError("overlapping replacements")
    out = []
    newpos = {}
    pos = 0
    acc = 0
    for (a, b, new) in repl:
        out.append(codes[pos:a])
        acc += a - pos
        newpos[a] = acc
        out.append(new)
        acc += len(new)
        pos = b
    out.append(codes[pos:])
    merged = np.concatenate(out) if out else codes.copy()
    return merged.astype(np.int64), newpos
