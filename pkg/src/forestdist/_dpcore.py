"""Compiled inner loops for the DP engines.

Every function here operates on plain int64/uint8 numpy arrays with costs
pre-scaled to integers (see WeightTable.scaled) and INFV = 2**62 as the
saturating infinity.  The functions are written in a numba-compatible
subset of Python; when numba is unavailable (or FORESTDIST_NO_NUMBA is
set) they run as ordinary Python, slower but byte-identical.

Banded tables use window coordinates: for a fragment F[l..r) with band
half-width ``twok``, cell (a, b) holds dp[l, r, l-twok+a, r-twok+b].
Cells outside the band are infinity by convention and are never stored.
"""

from __future__ import annotations

import os

import numpy as np

INFV = 1 << 62

_DISABLE = os.environ.get("FORESTDIST_NO_NUMBA", "") not in ("", "0")

if not _DISABLE:
    try:
        from numba import njit as _njit

        def _jit(fn):
            return _njit(cache=True)(fn)

        NUMBA_ENABLED = True
    except ImportError:  # pragma: no cover
        def _jit(fn):
            return fn

        NUMBA_ENABLED = False
else:  # pragma: no cover
    def _jit(fn):
        return fn

    NUMBA_ENABLED = False


DUMMY_I64 = np.full((1, 1), INFV, dtype=np.int64)
DUMMY_U8 = np.zeros((1, 1), dtype=np.uint8)


@_jit
def fill_banded(T, tag, want_tag, l, r, twok, nG, branch_left,
                del_empty, Tdel, match_ok, mpos, inner_empty, Tinner,
                rest_empty, Trest, mateG, labF, labG, warr, eps,
                prefF, prefG):
    """Klein update over the banded window of one non-empty fragment.

    The delete/match references point at tables of strictly shorter
    fragments; empty references are resolved through the prefix sums.
    """
    S = 2 * twok + 1
    if branch_left == 1:
        wdel = warr[labF[l], eps]
        for a in range(S - 1, -1, -1):
            lg = l - twok + a
            if lg < 0 or lg > nG:
                for b in range(S):
                    T[a, b] = INFV
                continue
            wins = warr[eps, labG[lg]] if lg < nG else 0
            mg = mateG[lg] if lg < nG else -1
            for b in range(S):
                rg = r - twok + b
                if rg < lg or rg > nG:
                    T[a, b] = INFV
                    continue
                if lg == rg:
                    T[a, b] = prefF[r] - prefF[l]
                    continue
                best = INFV
                bt = 0
                if del_empty == 1:
                    v = prefG[rg] - prefG[lg]
                elif a - 1 >= 0:
                    v = Tdel[a - 1, b]
                else:
                    v = INFV
                if v < INFV:
                    best = v + wdel
                    bt = 1
                if a + 1 < S:
                    v = T[a + 1, b]
                    if v < INFV and v + wins < best:
                        best = v + wins
                        bt = 2
                if match_ok == 1 and lg < mg < rg:
                    bi = mg - mpos + twok
                    if inner_empty == 1:
                        v1 = prefG[mg] - prefG[lg + 1]
                    elif 0 <= bi < S:
                        v1 = Tinner[a, bi]
                    else:
                        v1 = INFV
                    if v1 < INFV:
                        if rest_empty == 1:
                            v2 = prefG[rg] - prefG[mg + 1]
                        elif 0 <= bi < S:
                            v2 = Trest[bi, b]
                        else:
                            v2 = INFV
                        if v2 < INFV:
                            cand = (v1 + v2 + warr[labF[l], labG[lg]]
                                    + warr[labF[mpos], labG[mg]])
                            if cand < best:
                                best = cand
                                bt = 3
                T[a, b] = best
                if want_tag == 1:
                    tag[a, b] = bt
    else:
        wdel = warr[labF[r - 1], eps]
        for b in range(S):
            rg = r - twok + b
            for a in range(S):
                lg = l - twok + a
                if lg < 0 or lg > nG or rg < lg or rg > nG:
                    T[a, b] = INFV
                    continue
                if lg == rg:
                    T[a, b] = prefF[r] - prefF[l]
                    continue
                best = INFV
                bt = 0
                if del_empty == 1:
                    v = prefG[rg] - prefG[lg]
                elif b + 1 < S:
                    v = Tdel[a, b + 1]
                else:
                    v = INFV
                if v < INFV:
                    best = v + wdel
                    bt = 1
                if b - 1 >= 0:
                    v = T[a, b - 1]
                    if v < INFV:
                        cand = v + warr[eps, labG[rg - 1]]
                        if cand < best:
                            best = cand
                            bt = 2
                if match_ok == 1:
                    mg = mateG[rg - 1]
                    if lg <= mg < rg - 1:
                        bi = mg - mpos + twok
                        if inner_empty == 1:
                            v1 = prefG[mg] - prefG[lg]
                        elif 0 <= bi < S:
                            v1 = Tinner[a, bi]
                        else:
                            v1 = INFV
                        if v1 < INFV:
                            if rest_empty == 1:
                                v2 = prefG[rg - 1] - prefG[mg + 1]
                            elif 0 <= bi < S:
                                v2 = Trest[bi, b]
                            else:
                                v2 = INFV
                            if v2 < INFV:
                                cand = (v1 + v2 + warr[labF[mpos], labG[mg]]
                                        + warr[labF[r - 1], labG[rg - 1]])
                                if cand < best:
                                    best = cand
                                    bt = 3
                T[a, b] = best
                if want_tag == 1:
                    tag[a, b] = bt


@_jit
def fill_full(T, tag, want_tag, l, r, nG, branch_left,
              del_empty, Tdel, match_ok, mpos, inner_empty, Tinner,
              rest_empty, Trest, mateG, labF, labG, warr, eps,
              prefF, prefG):
    """Unpruned Klein update: the full (l_G, r_G) triangle of one fragment."""
    if branch_left == 1:
        wdel = warr[labF[l], eps]
        for lg in range(nG, -1, -1):
            wins = warr[eps, labG[lg]] if lg < nG else 0
            mg = mateG[lg] if lg < nG else -1
            for rg in range(lg, nG + 1):
                if lg == rg:
                    T[lg, rg] = prefF[r] - prefF[l]
                    continue
                if del_empty == 1:
                    v = prefG[rg] - prefG[lg]
                else:
                    v = Tdel[lg, rg]
                best = v + wdel if v < INFV else INFV
                bt = 1 if best < INFV else 0
                v = T[lg + 1, rg]
                if v < INFV and v + wins < best:
                    best = v + wins
                    bt = 2
                if match_ok == 1 and lg < mg < rg:
                    if inner_empty == 1:
                        v1 = prefG[mg] - prefG[lg + 1]
                    else:
                        v1 = Tinner[lg + 1, mg]
                    if v1 < INFV:
                        if rest_empty == 1:
                            v2 = prefG[rg] - prefG[mg + 1]
                        else:
                            v2 = Trest[mg + 1, rg]
                        if v2 < INFV:
                            cand = (v1 + v2 + warr[labF[l], labG[lg]]
                                    + warr[labF[mpos], labG[mg]])
                            if cand < best:
                                best = cand
                                bt = 3
                T[lg, rg] = best
                if want_tag == 1:
                    tag[lg, rg] = bt
    else:
        wdel = warr[labF[r - 1], eps]
        for rg in range(0, nG + 1):
            for lg in range(rg, -1, -1):
                if lg == rg:
                    T[lg, rg] = prefF[r] - prefF[l]
                    continue
                if del_empty == 1:
                    v = prefG[rg] - prefG[lg]
                else:
                    v = Tdel[lg, rg]
                best = v + wdel if v < INFV else INFV
                bt = 1 if best < INFV else 0
                v = T[lg, rg - 1]
                if v < INFV:
                    cand = v + warr[eps, labG[rg - 1]]
                    if cand < best:
                        best = cand
                        bt = 2
                if match_ok == 1:
                    mg = mateG[rg - 1]
                    if lg <= mg < rg - 1:
                        if inner_empty == 1:
                            v1 = prefG[mg] - prefG[lg]
                        else:
                            v1 = Tinner[lg, mg]
                        if v1 < INFV:
                            if rest_empty == 1:
                                v2 = prefG[rg - 1] - prefG[mg + 1]
                            else:
                                v2 = Trest[mg + 1, rg - 1]
                            if v2 < INFV:
                                cand = (v1 + v2 + warr[labF[mpos], labG[mg]]
                                        + warr[labF[r - 1], labG[rg - 1]])
                                if cand < best:
                                    best = cand
                                    bt = 3
                T[lg, rg] = best
                if want_tag == 1:
                    tag[lg, rg] = bt


@_jit
def fill_jump_right(T, l, r, twok, nG, pre_empty, Tpre, Mpow, rlen,
                    pF, pG, qG, prefG):
    """Fill the window of a fragment ending with a free block (suffix jump).

    dp[l, r, lg, rg] = min over p' in the stored band around pF of
    dp[l, pF, lg, p'] + Mpow[p'-pG, rg-qG] (matrix indices offset by rlen).
    """
    S = 2 * twok + 1
    for a in range(S):
        lg = l - twok + a
        if lg < 0 or lg > nG:
            for b in range(S):
                T[a, b] = INFV
            continue
        for b in range(S):
            rg = r - twok + b
            if rg < lg or rg > nG:
                T[a, b] = INFV
                continue
            best = INFV
            for bp in range(S):
                pg2 = pF - twok + bp
                if pg2 < lg or pg2 > nG:
                    continue
                if pre_empty == 1:
                    v = prefG[pg2] - prefG[lg]
                else:
                    v = Tpre[a, bp]
                if v >= INFV:
                    continue
                m = Mpow[pg2 - pG + rlen, rg - qG + rlen]
                if m >= INFV:
                    continue
                if v + m < best:
                    best = v + m
            T[a, b] = best


@_jit
def fill_jump_left(T, l, r, twok, nG, suf_empty, Tsuf, Mpow, rlen,
                   qF, pG, qG, prefG):
    """Fill the window of a fragment starting with a free block (prefix jump).

    dp[l, r, lg, rg] = min over q' in the stored band around qF of
    dp[qF, r, q', rg] + Mpow[lg-pG, q'-qG].
    """
    S = 2 * twok + 1
    for a in range(S):
        lg = l - twok + a
        if lg < 0 or lg > nG:
            for b in range(S):
                T[a, b] = INFV
            continue
        for b in range(S):
            rg = r - twok + b
            if rg < lg or rg > nG:
                T[a, b] = INFV
                continue
            best = INFV
            for aq in range(S):
                qg2 = qF - twok + aq
                if qg2 < lg or qg2 > rg:
                    continue
                if suf_empty == 1:
                    v = prefG[rg] - prefG[qg2]
                else:
                    v = Tsuf[aq, b]
                if v >= INFV:
                    continue
                m = Mpow[lg - pG + rlen, qg2 - qG + rlen]
                if m >= INFV:
                    continue
                if v + m < best:
                    best = v + m
            T[a, b] = best


@_jit
def minplus(A, B, C):
    """C = A (x) B over the (min, +) semiring, with INFV saturation."""
    n = A.shape[0]
    for i in range(n):
        for k in range(n):
            best = INFV
            for j in range(n):
                a = A[i, j]
                if a >= INFV:
                    continue
                b = B[j, k]
                if b >= INFV:
                    continue
                if a + b < best:
                    best = a + b
            C[i, k] = best


@_jit
def fill_match_dp(order, rkind, ri, rj, rcnt, rm, rleft, rright, rmid,
                  rell, rrr, eqfull, eqctx, twok, nG, val):
    """Bottom-up evaluation of the piece-matching DP.

    Region kinds: 0 leaf subforest, 1 split, 2 context, 3 empty.  State
    val[rid, a, b, 2*fl+fr] covers G[i'..j') with i' = ri-twok+a and
    j' = rj-twok+b; flags force the endpoint characters of the G fragment
    to be matched (1) or unmatched (0).
    """
    INF32 = 1 << 30
    W = 2 * twok + 1
    for oi in range(order.shape[0]):
        rid = order[oi]
        kind = rkind[rid]
        i = ri[rid]
        j = rj[rid]
        span_lo = j - i - 2 * twok
        if span_lo < 1:
            span_lo = 1
        span_hi = j - i + 2 * twok
        if span_hi > nG:
            span_hi = nG
        for span in range(span_lo, span_hi + 1):
            for a in range(W):
                ip = i - twok + a
                if ip < 0 or ip > nG:
                    continue
                jp = ip + span
                b = jp - (j - twok)
                if b < 0 or b >= W or jp > nG:
                    continue
                for fl in range(2):
                    for fr in range(2):
                        best = INF32
                        # bail out: everything unmatched
                        if fl == 0 and fr == 0:
                            best = rcnt[rid] + 1
                        # trim an unmatched character on the left
                        lim = jp - 1
                        if i + twok < lim:
                            lim = i + twok
                        if fl == 0 and ip < lim:
                            v = val[rid, a + 1, b, fr]          # fl'=0
                            if v < best:
                                best = v
                            v = val[rid, a + 1, b, 2 + fr] + 1  # fl'=1
                            if v < best:
                                best = v
                        # trim on the right
                        lim = ip + 1
                        if j - twok > lim:
                            lim = j - twok
                        if fr == 0 and jp > lim:
                            v = val[rid, a, b - 1, 2 * fl]      # fr'=0
                            if v < best:
                                best = v
                            v = val[rid, a, b - 1, 2 * fl + 1] + 1
                            if v < best:
                                best = v
                        if kind == 0:
                            # exact single-piece match needs equal lengths
                            if fl == 1 and fr == 1 and a == b and eqfull[rid, a] == 1:
                                best = 0
                        elif kind == 1:
                            m = rm[rid]
                            lid = rleft[rid]
                            rrid = rright[rid]
                            lo = m - twok
                            if lo < ip:
                                lo = ip
                            hi = m + twok
                            if hi > jp:
                                hi = jp
                            for mp in range(lo, hi + 1):
                                if mp == ip:
                                    v = val[rrid, mp - (ri[rrid] - twok), b, 2 * fl + fr]
                                    if v < INF32 and v + rcnt[lid] < best:
                                        best = v + rcnt[lid]
                                elif mp == jp:
                                    v = val[lid, a, mp - (rj[lid] - twok), 2 * fl + fr]
                                    if v < INF32 and v + rcnt[rrid] < best:
                                        best = v + rcnt[rrid]
                                else:
                                    bl = mp - (rj[lid] - twok)
                                    ar = mp - (ri[rrid] - twok)
                                    if bl < 0 or bl >= W or ar < 0 or ar >= W:
                                        continue
                                    for frl in range(2):
                                        v1 = val[lid, a, bl, 2 * fl + frl]
                                        if v1 >= INF32:
                                            continue
                                        for flr in range(2):
                                            v2 = val[rrid, ar, b, 2 * flr + fr]
                                            if v2 >= INF32:
                                                continue
                                            cand = v1 + v2
                                            if frl == 0 and flr == 0:
                                                cand -= 1
                                            if cand < best:
                                                best = cand
                        elif kind == 2:
                            ell = rell[rid]
                            rr = rrr[rid]
                            mid = rmid[rid]
                            # match the context
                            if fl == 1 and fr == 1 and eqctx[rid, a, b] == 1:
                                if ip + ell == jp - rr:
                                    if rcnt[mid] < best:
                                        best = rcnt[mid]
                                else:
                                    am = a  # (ip+ell) - (ri[mid]-twok) with ri[mid]=i+ell
                                    bm = b
                                    for ff in range(4):
                                        v = val[mid, am, bm, ff]
                                        if v < best:
                                            best = v
                            # skip the context, trimming G to the middle window
                            i2 = i + ell - twok
                            if i2 < ip:
                                i2 = ip
                            j2 = j - rr + twok
                            if j2 > jp:
                                j2 = jp
                            if i2 < j2:
                                am = i2 - (i + ell - twok)
                                bm = j2 - (j - rr - twok)
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
                                            v = val[mid, am, bm, 2 * flp + frp]
                                            if v >= INF32:
                                                continue
                                            cand = v + 1
                                            if fl < flp:
                                                cand += 1
                                            if fr < frp:
                                                cand += 1
                                            if cand < best:
                                                best = cand
                        val[rid, a, b, 2 * fl + fr] = best


@_jit
def periodic_runs_mark(codes, p, minlen, marks):
    """Mark maximal p-periodic fragments of length >= minlen.

    Appends (l, r) pairs into ``marks`` rows; returns the count used.
    """
    n = codes.shape[0]
    cnt = 0
    i = 0
    while i + p < n:
        if codes[i] == codes[i + p]:
            j = i
            while j + p < n and codes[j] == codes[j + p]:
                j += 1
            # maximal p-periodic fragment is [i .. j+p)
            if j + p - i >= minlen:
                marks[cnt, 0] = i
                marks[cnt, 1] = j + p
                cnt += 1
            i = j + 1
        else:
            i += 1
    return cnt


@_jit
def shortest_period(codes, l, r):
    """Shortest string period of codes[l..r) via the KMP failure function."""
    m = r - l
    fail = np.zeros(m + 1, dtype=np.int64)
    fail[0] = -1
    k = -1
    for i in range(m):
        while k >= 0 and codes[l + k] != codes[l + i]:
            k = fail[k]
        k += 1
        fail[i + 1] = k
    return m - fail[m]
