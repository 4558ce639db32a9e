"""Scaling report: how the block-exponent affects wall time.

Builds planted free-block instances F = A R^{e+2} B, G = A R^{e+2} B'
with a few edits in B', doubles e over a range, times the banded DP
against the block-jumping DP, and writes a TSV plus a matplotlib figure.
The block exponent should be nearly free for the optimized path.
"""

from __future__ import annotations

import argparse
import csv
import sys
import time
from pathlib import Path

import numpy as np

from .forest import Alphabet, Forest, close_code, open_code
from .freeopt import FreeBlock, optimized_ted
from .klein import bounded_klein


def _flat_period(alphabet: Alphabet, length: int) -> np.ndarray:
    """Balanced period of the requested even length: (a)(b)(a)(b)..."""
    syms = [alphabet.intern(s) for s in ("a", "b")]
    out = []
    for i in range(length // 2):
        s = syms[i % 2]
        out.extend((open_code(s), close_code(s)))
    return np.array(out, dtype=np.int64)


def build_instance(k: int, e: int, edits: int):
    """Instance pair with one declared free block of exponent e."""
    alphabet = Alphabet()
    x = alphabet.intern("x")
    y = alphabet.intern("y")
    period = _flat_period(alphabet, 4 * k)
    prefix = np.array([open_code(x), close_code(x)], dtype=np.int64)
    suffix = []
    for i in range(6 * k):
        s = y if i % 2 else x
        suffix.extend((open_code(s), close_code(s)))
    suffix = np.array(suffix, dtype=np.int64)
    body = np.tile(period, e + 2)
    f_codes = np.concatenate((prefix, body, suffix))
    suffix_g = suffix.copy()
    z = alphabet.intern("z")
    for i in range(min(edits, len(suffix) // 2)):
        suffix_g[2 * i] = open_code(z)
        suffix_g[2 * i + 1] = close_code(z)
    g_codes = np.concatenate((prefix, body, suffix_g))
    F = Forest(f_codes, alphabet)
    G = Forest(g_codes, alphabet)
    p = len(prefix) + len(period)
    q = p + e * len(period)
    block = FreeBlock(p, q, p, q, Forest(period, alphabet), e)
    return F, G, [block]


def run_scaling_study(out_dir, k: int = 3, exponents=(32, 64, 128, 256, 512, 1024),
                      edits: int | None = None, make_figure: bool = True):
    """Time both engines across doubling exponents; returns the rows."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    edits = k if edits is None else edits
    rows = []
    for e in exponents:
        F, G, blocks = build_instance(k, e, edits)
        wt = _unit(F)
        t0 = time.perf_counter()
        opt = optimized_ted(F, G, wt, k, blocks)
        t_opt = time.perf_counter() - t0
        t0 = time.perf_counter()
        banded = bounded_klein(F, G, wt, k)
        t_banded = time.perf_counter() - t0
        if opt != banded:
            raise AssertionError(f"engines disagree at e={e}: {opt} vs {banded}")
        rows.append({"exponent": e, "n": len(F), "optimized_seconds": t_opt,
                     "banded_seconds": t_banded, "distance": str(opt)})
    tsv = out_dir / "scaling.tsv"
    with open(tsv, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()), delimiter="\t")
        writer.writeheader()
        writer.writerows(rows)
    if make_figure:
        _render_figure(rows, out_dir / "scaling.png", k)
    return rows


def _unit(F: Forest):
    from .weights import WeightTable
    return WeightTable.unit_weights(F.alphabet)


def _render_figure(rows, path, k):
    import matplotlib
    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    es = [r["exponent"] for r in rows]
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(es, [r["banded_seconds"] for r in rows], "o-", label="banded DP")
    ax.plot(es, [r["optimized_seconds"] for r in rows], "s-", label="block jumps")
    ax.set_xscale("log", base=2)
    ax.set_yscale("log")
    ax.set_xlabel("block exponent e")
    ax.set_ylabel("wall time [s]")
    ax.set_title(f"Block exponent scaling, k={k}")
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, dpi=150)
    plt.close(fig)


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ted-report", description="Free-block scaling study with figure output.")
    parser.add_argument("--out", default="ted-report", help="output directory")
    parser.add_argument("--k", type=int, default=3)
    parser.add_argument("--quick", action="store_true",
                        help="use a shorter exponent range")
    args = parser.parse_args(argv)
    exps = (32, 64, 128) if args.quick else (32, 64, 128, 256, 512, 1024)
    rows = run_scaling_study(args.out, k=args.k, exponents=exps)
    for r in rows:
        print(f"e={r['exponent']:>5}  n={r['n']:>7}  "
              f"optimized={r['optimized_seconds']:.4f}s  banded={r['banded_seconds']:.4f}s")
    print(f"wrote {args.out}/scaling.tsv and {args.out}/scaling.png")
    return 0


if __name__ == "__main__":
    sys.exit(main())
