"""Algorithm selection and the threshold-doubling distance drivers."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from fractions import Fraction

from .forest import Forest, Fragment
from .freeopt import InvalidFreeBlock, OverlappingBlocks, optimized_ted
from .kernel import TOO_FAR, kernelize
from .klein import bounded_klein
from .weights import INF, WeightTable

ORACLE_INPUT_LIMIT = 64
AUTO_ORACLE_LIMIT = 16

ALGORITHMS = ("oracle", "klein", "bounded", "optimized", "kernel", "auto")


@dataclass
class RunConfig:
    algorithm: str = "auto"
    k: int | None = None
    weights_path: str | None = None
    emit_alignment: bool = False
    debug_kernel: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.k is not None and self.k < 1:
            raise ValueError("threshold k must be at least 1")


def ted_bounded(F: Forest, G: Forest, wt: WeightTable, k: int,
                closure_changed: list | None = None, debug: list | None = None):
    """Capped distance through the kernel plus the optimized DP.

    The kernel's preservation guarantee needs the triangle inequality, so
    the metric closure is applied first; when that changes any entry the
    caller is told through ``closure_changed`` (the plain DP paths answer
    for the original weights, the kernel path for the closed ones).
    """
    wt2 = wt.metric_closure()
    if closure_changed is not None:
        closure_changed.append(not wt2.equals(wt))
    res = kernelize(F, G, k, debug=debug is not None)
    if res is TOO_FAR:
        return INF
    if debug is not None:
        debug.extend(res.debug)
    try:
        return optimized_ted(res.f_out, res.g_out, wt2, k, res.blocks)
    except (InvalidFreeBlock, OverlappingBlocks) as exc:
        warnings.warn(f"kernel emitted unusable free blocks ({exc}); retrying without")
        return optimized_ted(res.f_out, res.g_out, wt2, k, [])


def initial_threshold(n: int) -> int:
    """First threshold of the geometric schedule, ceil((n/log2 n)^(1/6))."""
    if n <= 2:
        return 1
    return max(1, math.ceil((n / math.log2(n)) ** (1.0 / 6.0)))


def ted_auto(F: Forest, G: Forest, wt: WeightTable, thresholds: list | None = None):
    """Exact distance by doubling kernel-path thresholds until conclusive."""
    if F == G:
        return Fraction(0)
    d = initial_threshold(len(F) + len(G))
    while True:
        v = ted_bounded(F, G, wt, d)
        if thresholds is not None:
            thresholds.append(d)
        if v is not INF and v <= d:
            return v
        d *= 2
