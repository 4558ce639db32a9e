"""Klein-style dynamic programming over heavy-path fragment chains.

The catalog assigns to every non-leaf node (and the virtual root) a
contiguous chain of fragments, shrinking one character at a time from the
node's interior down to the interior of its heavy child, following the
same left/right choice the DP itself makes.  The DP then fills one banded
(or full) table per catalogued fragment in increasing fragment length;
all cross-fragment references stay inside the catalog, which gives O(1)
addressing without a dictionary on the hot path.

Free-block handling plugs into the same engine: fragments whose window is
obtained by jumping over a block are filled from a min-plus matrix power
instead of the pointwise update (see freeopt).
"""

from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from . import _dpcore
from ._dpcore import DUMMY_I64, DUMMY_U8, INFV
from .forest import Forest
from .weights import INF, WeightTable

MODE_NORMAL = 0
MODE_JUMP_RIGHT = 1
MODE_JUMP_LEFT = 2
MODE_SKIP = 3


class KleinError(RuntimeError):
    pass


class NoFiniteResult(KleinError):
    pass


def _branch_left(codes, mate, l: int, r: int) -> bool:
    """Left/right choice of the update rule for fragment [l..r)."""
    ml = int(mate[l])
    u_cont = (int(codes[l]) & 1) == 0 and ml < r
    if not u_cont:
        return True
    mr = int(mate[r - 1])
    v_cont = (int(codes[r - 1]) & 1) == 1 and mr >= l
    if not v_cont:
        return False
    size_u = ml - l + 1
    size_v = (r - 1) - mr + 1
    return size_u <= size_v


@dataclass
class FragmentCatalog:
    """Fragments visited by the DP, grouped into per-owner chains.

    ``owners[i]`` is the open position of the owning node (-1 for the
    virtual root); chains list the catalog indices of each owner's
    fragments in walk order.
    """

    forest: Forest
    frag_l: np.ndarray
    frag_r: np.ndarray
    owners: np.ndarray
    chains: dict[int, list[int]]
    pos2id: dict[tuple[int, int], int]

    def __len__(self) -> int:
        return len(self.frag_l)

    def fragments(self):
        return list(zip(self.frag_l.tolist(), self.frag_r.tolist()))

    def chain_fragments(self, owner_open: int):
        return [(int(self.frag_l[i]), int(self.frag_r[i]))
                for i in self.chains[owner_open]]

    def index_in_chain(self, cid: int) -> int:
        """Position of a fragment within its owner's chain."""
        owner = int(self.owners[cid])
        return self.chains[owner].index(cid)


def enumerate_fragments(forest: Forest) -> FragmentCatalog:
    """Build the per-owner fragment chains (cached on the forest)."""
    cached = getattr(forest, "_fragment_catalog", None)
    if cached is not None:
        return cached
    n = len(forest)
    codes, mate = forest.codes, forest.mate
    hv = forest.heavy
    ls: list[int] = []
    rs: list[int] = []
    owners: list[int] = []
    chains: dict[int, list[int]] = {}

    def walk(owner: int, l: int, r: int, tl: int, tr: int):
        ids = chains.setdefault(owner, [])
        while True:
            ids.append(len(ls))
            ls.append(l)
            rs.append(r)
            owners.append(owner)
            if l == tl and r == tr:
                return
            if r - l <= tr - tl:
                raise KleinError("fragment chain missed its heavy-child target")
            if _branch_left(codes, mate, l, r):
                l += 1
            else:
                r -= 1

    if n > 0:
        h = hv.heavy_root
        walk(-1, 0, n, h + 1, int(mate[h]) + 1)
        for v in sorted(hv.children.keys()):
            h = int(hv.heavy_child[v])
            walk(v, v + 1, int(mate[v]), h + 1, int(mate[h]) + 1)

    cat = FragmentCatalog(
        forest,
        np.array(ls, dtype=np.int64),
        np.array(rs, dtype=np.int64),
        np.array(owners, dtype=np.int64),
        chains,
        {(lv, rv): i for i, (lv, rv) in enumerate(zip(ls, rs))},
    )
    forest._fragment_catalog = cat
    return cat


@dataclass
class PlannedBlock:
    """A validated free block in engine units (scaled min-plus power)."""

    p_f: int
    q_f: int
    p_g: int
    q_g: int
    rlen: int
    mpow: np.ndarray  # (2*rlen+1)^2 scaled int64 power matrix


class FreeBlockPlanError(KleinError):
    pass


@dataclass
class _Plan:
    n_frag: int
    l: np.ndarray
    r: np.ndarray
    order: np.ndarray
    mode: np.ndarray
    branch: np.ndarray
    del_empty: np.ndarray
    del_ref: np.ndarray
    match_ok: np.ndarray
    mpos: np.ndarray
    inner_empty: np.ndarray
    inner_ref: np.ndarray
    rest_empty: np.ndarray
    rest_ref: np.ndarray
    jump_ref: np.ndarray
    jump_block: np.ndarray
    pos2id: dict
    root_id: int
    extras: int
    n_skipped: int
    n_jumps: int


def _build_plan(F: Forest, blocks: list[PlannedBlock] | None) -> _Plan:
    """Fragment set, modes, and cross-references for one engine run.

    Starts from the catalog chains and closes over every fragment the
    fill can read: with free blocks, the jump updates may need prefix or
    suffix fragments that no chain contains, so those are added and
    processed with the ordinary update rule.
    """
    if not blocks:
        cached = getattr(F, "_plain_plan", None)
        if cached is not None:
            return cached
    n = len(F)
    codes, mate = F.codes, F.mate
    cat = enumerate_fragments(F)
    pairs: list[tuple[int, int]] = cat.fragments()
    posset = set(pairs)

    blk_of = None
    block_end: dict[int, int] = {}
    block_start: dict[int, int] = {}
    if blocks:
        blk_of = np.full(n, -1, dtype=np.int64)
        for bi, b in enumerate(blocks):
            blk_of[b.p_f:b.q_f] = bi
            block_start[b.p_f] = bi
            block_end[b.q_f] = bi

    def classify(l: int, r: int):
        if not blocks:
            return MODE_NORMAL, -1
        if 0 < l < n:
            bi = int(blk_of[l])
            if bi >= 0 and blocks[bi].p_f < l:
                return MODE_SKIP, -1
        if 0 < r < n:
            bi = int(blk_of[r])
            if bi >= 0 and blocks[bi].p_f < r:
                return MODE_SKIP, -1
        bi = block_end.get(r)
        if bi is not None and blocks[bi].p_f >= l:
            return MODE_JUMP_RIGHT, bi
        bi = block_start.get(l)
        if bi is not None and blocks[bi].q_f <= r:
            return MODE_JUMP_LEFT, bi
        return MODE_NORMAL, -1

    info: dict[tuple[int, int], tuple[int, int]] = {}
    idx = 0
    limit = 4 * len(pairs) + 64
    while idx < len(pairs):
        l, r = pairs[idx]
        idx += 1
        md, bi = classify(l, r)
        info[(l, r)] = (md, bi)
        needs: list[tuple[int, int]] = []
        if md == MODE_NORMAL:
            if _branch_left(codes, mate, l, r):
                if l + 1 < r:
                    needs.append((l + 1, r))
                ml = int(mate[l])
                if (int(codes[l]) & 1) == 0 and ml < r:
                    if l + 1 < ml:
                        needs.append((l + 1, ml))
                    if ml + 1 < r:
                        needs.append((ml + 1, r))
            else:
                if l < r - 1:
                    needs.append((l, r - 1))
                mr = int(mate[r - 1])
                if (int(codes[r - 1]) & 1) == 1 and mr >= l:
                    if l < mr:
                        needs.append((l, mr))
                    if mr + 1 < r - 1:
                        needs.append((mr + 1, r - 1))
        elif md == MODE_JUMP_RIGHT:
            p = blocks[bi].p_f
            if l < p:
                needs.append((l, p))
        elif md == MODE_JUMP_LEFT:
            q = blocks[bi].q_f
            if q < r:
                needs.append((q, r))
        for pr in needs:
            if pr not in posset:
                posset.add(pr)
                pairs.append(pr)
                if len(pairs) - len(cat) > limit:
                    raise FreeBlockPlanError("free-block closure exceeded its budget")

    nf = len(pairs)
    pairs_sorted = sorted(pairs, key=lambda p: (p[1] - p[0], p[0]))
    pos2id = {p: i for i, p in enumerate(pairs_sorted)}
    arr = lambda: np.zeros(nf, dtype=np.int64)
    plan = _Plan(nf, arr(), arr(), np.arange(nf, dtype=np.int64), arr(), arr(),
                 arr(), np.full(nf, -1, dtype=np.int64), arr(), arr(),
                 arr(), np.full(nf, -1, dtype=np.int64),
                 arr(), np.full(nf, -1, dtype=np.int64),
                 np.full(nf, -1, dtype=np.int64), np.full(nf, -1, dtype=np.int64),
                 pos2id, pos2id.get((0, n), -1), nf - len(cat), 0, 0)

    for (l, r), fid in pos2id.items():
        plan.l[fid] = l
        plan.r[fid] = r
        md, bi = info[(l, r)]
        plan.mode[fid] = md
        if md == MODE_SKIP:
            plan.n_skipped += 1
            continue
        if md == MODE_JUMP_RIGHT:
            plan.n_jumps += 1
            plan.jump_block[fid] = bi
            p = blocks[bi].p_f
            plan.jump_ref[fid] = pos2id[(l, p)] if l < p else -1
            continue
        if md == MODE_JUMP_LEFT:
            plan.n_jumps += 1
            plan.jump_block[fid] = bi
            q = blocks[bi].q_f
            plan.jump_ref[fid] = pos2id[(q, r)] if q < r else -1
            continue
        left = _branch_left(codes, mate, l, r)
        plan.branch[fid] = 1 if left else 0
        if left:
            if l + 1 == r:
                plan.del_empty[fid] = 1
            else:
                plan.del_ref[fid] = pos2id[(l + 1, r)]
            ml = int(mate[l])
            if (int(codes[l]) & 1) == 0 and ml < r:
                plan.match_ok[fid] = 1
                plan.mpos[fid] = ml
                if l + 1 == ml:
                    plan.inner_empty[fid] = 1
                else:
                    plan.inner_ref[fid] = pos2id[(l + 1, ml)]
                if ml + 1 == r:
                    plan.rest_empty[fid] = 1
                else:
                    plan.rest_ref[fid] = pos2id[(ml + 1, r)]
        else:
            if l == r - 1:
                plan.del_empty[fid] = 1
            else:
                plan.del_ref[fid] = pos2id[(l, r - 1)]
            mr = int(mate[r - 1])
            if (int(codes[r - 1]) & 1) == 1 and mr >= l:
                plan.match_ok[fid] = 1
                plan.mpos[fid] = mr
                if l == mr:
                    plan.inner_empty[fid] = 1
                else:
                    plan.inner_ref[fid] = pos2id[(l, mr)]
                if mr + 1 == r - 1:
                    plan.rest_empty[fid] = 1
                else:
                    plan.rest_ref[fid] = pos2id[(mr + 1, r - 1)]
    if not blocks:
        F._plain_plan = plan
    return plan


def _weights_arrays(F: Forest, G: Forest, wt: WeightTable):
    scale, warr = wt.scaled()
    eps = wt.eps
    labF = (F.codes >> 1).astype(np.int64)
    labG = (G.codes >> 1).astype(np.int64)
    if len(labF) and int(labF.max()) >= eps or len(labG) and int(labG.max()) >= eps:
        raise KleinError("forest labels outside the weight table alphabet")
    prefF = np.zeros(len(F) + 1, dtype=np.int64)
    np.cumsum(warr[labF, eps], out=prefF[1:])
    prefG = np.zeros(len(G) + 1, dtype=np.int64)
    np.cumsum(warr[eps, labG], out=prefG[1:])
    return scale, warr, eps, labF, labG, prefF, prefG


@dataclass
class BandedStore:
    """Dense per-fragment windows of one banded run, in scaled units."""

    F: Forest
    G: Forest
    plan: _Plan
    twok: int
    scale: int
    tables: np.ndarray
    tags: np.ndarray | None
    wt: WeightTable
    prefF: np.ndarray
    prefG: np.ndarray

    def cell_scaled(self, lf, rf, lg, rg):
        fid = self.plan.pos2id.get((lf, rf))
        if fid is None or self.plan.mode[fid] == MODE_SKIP:
            return None
        a = lg - (lf - self.twok)
        b = rg - (rf - self.twok)
        S = 2 * self.twok + 1
        if not (0 <= a < S and 0 <= b < S):
            return INFV
        return int(self.tables[fid, a, b])

    def cell(self, lf, rf, lg, rg):
        v = self.cell_scaled(lf, rf, lg, rg)
        if v is None:
            return None
        return INF if v >= INFV else Fraction(v, self.scale)

    def materialized_cells(self):
        """Yield (lf, rf, lg, rg, scaled value) for every stored valid cell."""
        S = 2 * self.twok + 1
        nG = len(self.G)
        for fid in range(self.plan.n_frag):
            if self.plan.mode[fid] == MODE_SKIP:
                continue
            l = int(self.plan.l[fid])
            r = int(self.plan.r[fid])
            for a in range(S):
                lg = l - self.twok + a
                if lg < 0 or lg > nG:
                    continue
                for b in range(S):
                    rg = r - self.twok + b
                    if rg < lg or rg > nG:
                        continue
                    yield l, r, lg, rg, int(self.tables[fid, a, b])

    def tag_at(self, fid, lg, rg):
        a = lg - (int(self.plan.l[fid]) - self.twok)
        b = rg - (int(self.plan.r[fid]) - self.twok)
        return int(self.tags[fid, a, b])


@dataclass
class BandedRun:
    distance: object  # Fraction or INF
    raw: int          # scaled root value (INFV if out of band)
    store: BandedStore
    k: int

    @property
    def plan(self):
        return self.store.plan


def run_banded(F: Forest, G: Forest, wt: WeightTable, k: int,
               blocks: list[PlannedBlock] | None = None,
               keep_tags: bool = False) -> BandedRun:
    """Execute the banded engine and cap the result at threshold k."""
    if k < 1:
        raise ValueError("threshold k must be a positive integer")
    scale, warr, eps, labF, labG, prefF, prefG = _weights_arrays(F, G, wt)
    nF, nG = len(F), len(G)
    twok = min(2 * k, max(nF, nG))  # wider bands never prune anything
    S = 2 * twok + 1
    plan = _build_plan(F, blocks)
    mateG = G.mate.astype(np.int64) if nG else np.zeros(1, dtype=np.int64)

    tables = np.full((max(plan.n_frag, 1), S, S), INFV, dtype=np.int64)
    tags = np.zeros((plan.n_frag, S, S), dtype=np.uint8) if keep_tags else None
    want_tag = 1 if keep_tags else 0

    for fid in plan.order:
        md = plan.mode[fid]
        if md == MODE_SKIP:
            continue
        l = int(plan.l[fid])
        r = int(plan.r[fid])
        T = tables[fid]
        tg = tags[fid] if keep_tags else DUMMY_U8
        if md == MODE_NORMAL:
            dref = int(plan.del_ref[fid])
            iref = int(plan.inner_ref[fid])
            rref = int(plan.rest_ref[fid])
            _dpcore.fill_banded(
                T, tg, want_tag, l, r, twok, nG, int(plan.branch[fid]),
                int(plan.del_empty[fid]), tables[dref] if dref >= 0 else DUMMY_I64,
                int(plan.match_ok[fid]), int(plan.mpos[fid]),
                int(plan.inner_empty[fid]), tables[iref] if iref >= 0 else DUMMY_I64,
                int(plan.rest_empty[fid]), tables[rref] if rref >= 0 else DUMMY_I64,
                mateG, labF, labG, warr, eps, prefF, prefG)
        elif md == MODE_JUMP_RIGHT:
            blk = blocks[int(plan.jump_block[fid])]
            jref = int(plan.jump_ref[fid])
            _dpcore.fill_jump_right(
                T, l, r, twok, nG, 1 if jref < 0 else 0,
                tables[jref] if jref >= 0 else DUMMY_I64,
                blk.mpow, blk.rlen, blk.p_f, blk.p_g, blk.q_g, prefG)
        else:
            blk = blocks[int(plan.jump_block[fid])]
            jref = int(plan.jump_ref[fid])
            _dpcore.fill_jump_left(
                T, l, r, twok, nG, 1 if jref < 0 else 0,
                tables[jref] if jref >= 0 else DUMMY_I64,
                blk.mpow, blk.rlen, blk.q_f, blk.p_g, blk.q_g, prefG)

    if nF == 0:
        raw = int(prefG[nG])
    else:
        a = twok
        b = nG - (nF - twok)
        raw = int(tables[plan.root_id, a, b]) if 0 <= b < S else INFV

    store = BandedStore(F, G, plan, twok, scale, tables, tags, wt, prefF, prefG)
    dist = Fraction(raw, scale) if raw <= k * scale else INF
    return BandedRun(dist, raw, store, k)


def bounded_klein(F: Forest, G: Forest, wt: WeightTable, k: int):
    """Distance capped at k over width-2k alignments: ted_{<=k}(F, G)."""
    return run_banded(F, G, wt, k).distance


# -- full (unpruned) tables --------------------------------------------------

@dataclass
class FullStore:
    F: Forest
    G: Forest
    plan: _Plan
    scale: int
    tables: np.ndarray
    tags: np.ndarray | None

    def cell_scaled(self, lf, rf, lg, rg):
        fid = self.plan.pos2id.get((lf, rf))
        if fid is None:
            return None
        return int(self.tables[fid, lg, rg])

    def cell(self, lf, rf, lg, rg):
        v = self.cell_scaled(lf, rf, lg, rg)
        if v is None:
            return None
        return INF if v >= INFV else Fraction(v, self.scale)

    def tag_at(self, fid, lg, rg):
        return int(self.tags[fid, lg, rg])


@dataclass
class FullRun:
    distance: object
    raw: int
    store: FullStore
    k: None = None


_FULL_CELL_BUDGET = 80_000_000


def run_full(F: Forest, G: Forest, wt: WeightTable, keep_tags: bool = False) -> FullRun:
    """Unpruned tables for every catalogued fragment against all of G.

    Cubic-ish in memory; intended for period matrices and desk-scale work.
    """
    scale, warr, eps, labF, labG, prefF, prefG = _weights_arrays(F, G, wt)
    nF, nG = len(F), len(G)
    plan = _build_plan(F, None)
    if plan.n_frag * (nG + 1) * (nG + 1) > _FULL_CELL_BUDGET:
        raise KleinError("full-table run exceeds the cell budget; use the banded engine")
    mateG = G.mate.astype(np.int64) if nG else np.zeros(1, dtype=np.int64)
    tables = np.full((max(plan.n_frag, 1), nG + 1, nG + 1), INFV, dtype=np.int64)
    tags = np.zeros((plan.n_frag, nG + 1, nG + 1), dtype=np.uint8) if keep_tags else None
    want_tag = 1 if keep_tags else 0
    for fid in plan.order:
        l = int(plan.l[fid])
        r = int(plan.r[fid])
        dref = int(plan.del_ref[fid])
        iref = int(plan.inner_ref[fid])
        rref = int(plan.rest_ref[fid])
        _dpcore.fill_full(
            tables[fid], tags[fid] if keep_tags else DUMMY_U8, want_tag,
            l, r, nG, int(plan.branch[fid]),
            int(plan.del_empty[fid]), tables[dref] if dref >= 0 else DUMMY_I64,
            int(plan.match_ok[fid]), int(plan.mpos[fid]),
            int(plan.inner_empty[fid]), tables[iref] if iref >= 0 else DUMMY_I64,
            int(plan.rest_empty[fid]), tables[rref] if rref >= 0 else DUMMY_I64,
            mateG, labF, labG, warr, eps, prefF, prefG)
    raw = int(tables[plan.root_id, 0, nG]) if nF else int(prefG[nG])
    store = FullStore(F, G, plan, scale, tables, tags)
    dist = INF if raw >= INFV else Fraction(raw, scale)
    return FullRun(dist, raw, store)


def klein_dp(F: Forest, G: Forest, wt: WeightTable):
    """Exact distance by the unpruned DP (full tables)."""
    return run_full(F, G, wt).distance


def ted_doubling_medium(F: Forest, G: Forest, wt: WeightTable):
    """Exact distance via geometrically doubled thresholds 1, 2, 4, ..."""
    if F == G:
        return Fraction(0)
    k = 1
    while True:
        v = bounded_klein(F, G, wt, k)
        if v is not INF and v <= k:
            return v
        k *= 2
        if k > (1 << 60):  # unreachable for finite inputs
            raise KleinError("doubling failed to terminate")


# -- traceback ---------------------------------------------------------------

def trace_alignment(run) -> list:
    """Reconstruct an optimal forest alignment path from stored tags.

    Works for banded and full runs computed with keep_tags=True and a
    finite result; the returned vertex list spans (0,0) .. (|F|,|G|).
    """
    store = run.store
    if store.tags is None:
        raise KleinError("run was computed without back-pointers")
    if run.distance is INF or run.raw >= INFV:
        raise NoFiniteResult("no finite distance at the requested threshold")
    F, G = store.F, store.G
    mateF, mateG = F.mate, G.mate
    plan = store.plan
    edges: list[tuple[int, int, int, int]] = []
    # Work items: ("frag", l, r, lg, rg) expanded lazily, edges in order.
    stack: list[tuple] = [("frag", 0, len(F), 0, len(G))]
    while stack:
        item = stack.pop()
        if item[0] == "edge":
            edges.append(item[1:])
            continue
        _, l, r, lg, rg = item
        if l == r and lg == rg:
            continue
        if l == r:
            for y in range(rg - 1, lg - 1, -1):
                stack.append(("edge", l, y, 0, 1))
            continue
        if lg == rg:
            for x in range(r - 1, l - 1, -1):
                stack.append(("edge", x, lg, 1, 0))
            continue
        fid = plan.pos2id[(l, r)]
        tag = store.tag_at(fid, lg, rg)
        left = int(plan.branch[fid]) == 1
        if tag == 1:
            if left:
                stack.append(("frag", l + 1, r, lg, rg))
                stack.append(("edge", l, lg, 1, 0))
            else:
                stack.append(("edge", r - 1, rg, 1, 0))
                stack.append(("frag", l, r - 1, lg, rg))
        elif tag == 2:
            if left:
                stack.append(("frag", l, r, lg + 1, rg))
                stack.append(("edge", l, lg, 0, 1))
            else:
                stack.append(("edge", r, rg - 1, 0, 1))
                stack.append(("frag", l, r, lg, rg - 1))
        elif tag == 3:
            if left:
                mf, mg = int(mateF[l]), int(mateG[lg])
                stack.append(("frag", mf + 1, r, mg + 1, rg))
                stack.append(("edge", mf, mg, 1, 1))
                stack.append(("frag", l + 1, mf, lg + 1, mg))
                stack.append(("edge", l, lg, 1, 1))
            else:
                mf, mg = int(mateF[r - 1]), int(mateG[rg - 1])
                stack.append(("edge", r - 1, rg - 1, 1, 1))
                stack.append(("frag", mf + 1, r - 1, mg + 1, rg - 1))
                stack.append(("edge", mf, mg, 1, 1))
                stack.append(("frag", l, mf, lg, mg))
        else:
            raise KleinError(f"traceback hit an unfilled cell at {(l, r, lg, rg)}")
    path = [(0, 0)]
    for x, y, dx, dy in edges:
        if (x, y) != path[-1]:
            raise KleinError("traceback produced a non-contiguous path")
        path.append((x + dx, y + dy))
    return path
