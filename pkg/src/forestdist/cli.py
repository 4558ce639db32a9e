"""Command-line interface: ted <forest1> <forest2> [options]."""

from __future__ import annotations

import argparse
import sys

from .driver import (ALGORITHMS, AUTO_ORACLE_LIMIT, ORACLE_INPUT_LIMIT,
                     ted_auto, ted_bounded)
from .forest import Alphabet, ForestError, Fragment, parse_forest
from .freeopt import optimized_ted
from .klein import NoFiniteResult, klein_dp, run_banded, trace_alignment
from .oracle import oracle_ted
from .weights import INF, WeightError, WeightTable, cost_to_decimal

EXIT_OK = 0
EXIT_INPUT = 2


def _fail(msg: str) -> int:
    print(f"ted: {msg}", file=sys.stderr)
    return EXIT_INPUT


def _script_lines(path, F, G) -> list[str]:
    lines = []
    for (x0, y0), (x1, y1) in zip(path, path[1:]):
        dx, dy = x1 - x0, y1 - y0
        if dx == 1 and dy == 0:
            lines.append(f"del F@{x0}")
        elif dx == 0 and dy == 1:
            lines.append(f"ins G@{y0}")
        elif F.codes[x0] != G.codes[y0]:
            lines.append(f"sub F@{x0} G@{y0}")
    return lines


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ted",
        description="Weighted tree edit distance between parenthesis-encoded forests.")
    parser.add_argument("forest1", help="file with the first forest")
    parser.add_argument("forest2", help="file with the second forest")
    parser.add_argument("--weights", metavar="FILE",
                        help="TSV weight file (label, label, cost; '-' is epsilon)")
    parser.add_argument("-k", type=int, default=None,
                        help="distance threshold (required by bounded/optimized/kernel)")
    parser.add_argument("--algo", choices=ALGORITHMS, default="auto")
    parser.add_argument("--emit-alignment", action="store_true",
                        help="print an edit script (bounded algorithm only)")
    parser.add_argument("--debug-kernel", action="store_true",
                        help="dump kernel internals to stderr (kernel algorithm only)")
    args = parser.parse_args(argv)

    try:
        with open(args.forest1, "r", encoding="utf-8") as fh:
            text1 = fh.read()
        with open(args.forest2, "r", encoding="utf-8") as fh:
            text2 = fh.read()
    except OSError as exc:
        return _fail(f"cannot read input: {exc}")

    alphabet = Alphabet()
    try:
        F = parse_forest(text1, alphabet)
        G = parse_forest(text2, alphabet)
    except ForestError as exc:
        return _fail(f"forest parse error: {exc}")

    if args.weights:
        try:
            wt = WeightTable.from_file(args.weights, alphabet)
        except (OSError, WeightError) as exc:
            return _fail(f"weight file error: {exc}")
        bad = wt.check_normalized()
        if bad:
            i, j, v = bad[0]
            syms = alphabet.symbols + ["-"]
            return _fail(f"weights are not normalized: w({syms[i]},{syms[j]}) = {v}")
    else:
        wt = WeightTable.unit_weights(alphabet)

    algo = args.algo
    k = args.k
    if k is not None and k < 1:
        return _fail("threshold k must be at least 1")
    if args.emit_alignment and algo != "bounded":
        return _fail("--emit-alignment is only available with --algo bounded")
    if args.debug_kernel and algo != "kernel":
        return _fail("--debug-kernel is only available with --algo kernel")
    if algo in ("bounded", "optimized", "kernel") and k is None:
        return _fail(f"--algo {algo} requires -k")
    if algo == "oracle" and len(F) + len(G) > ORACLE_INPUT_LIMIT:
        return _fail(f"oracle refuses inputs longer than {ORACLE_INPUT_LIMIT} characters total")

    script: list[str] = []
    if algo == "oracle":
        value = oracle_ted(Fragment(F, 0, len(F)), Fragment(G, 0, len(G)), wt)
    elif algo == "klein":
        value = klein_dp(F, G, wt)
    elif algo == "bounded":
        run = run_banded(F, G, wt, k, keep_tags=args.emit_alignment)
        value = run.distance
        if args.emit_alignment and value is not INF:
            try:
                script = _script_lines(trace_alignment(run), F, G)
            except NoFiniteResult:
                script = []
    elif algo == "optimized":
        value = optimized_ted(F, G, wt, k, [])
    elif algo == "kernel":
        closure_changed: list = []
        debug: list = [] if args.debug_kernel else None
        value = ted_bounded(F, G, wt, k, closure_changed, debug)
        if closure_changed and closure_changed[0]:
            print("note: metric closure lowered some weight entries", file=sys.stderr)
        if args.debug_kernel:
            for line in debug:
                print(f"kernel: {line}", file=sys.stderr)
    else:
        if len(F) + len(G) <= AUTO_ORACLE_LIMIT:
            value = oracle_ted(Fragment(F, 0, len(F)), Fragment(G, 0, len(G)), wt)
        else:
            value = ted_auto(F, G, wt)

    print(cost_to_decimal(value))
    for line in script:
        print(line)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
