"""Weighted tree edit distance on parenthesis-encoded forests."""

from .forest import (Alphabet, Forest, Fragment, NodeRef, ForestError,
                     UnbalancedInput, MalformedToken, OutOfBounds,
                     parse_forest, serialize, node_at, classify_node,
                     induced_subforest, is_balanced, fragment_equal,
                     heavy_structure)
from .weights import INF, WeightTable, WeightError, UnknownSymbol, cost_to_decimal
from .oracle import (oracle_ted, oracle_bted, oracle_ted_capped,
                     oracle_tilde_ted, path_cost, is_forest_alignment, width)
from .klein import (enumerate_fragments, klein_dp, bounded_klein,
                    ted_doubling_medium, trace_alignment, run_banded, run_full)
from .freeopt import (FreeBlock, MinPlusMatrix, build_period_matrix, min_plus,
                      matrix_power, optimized_ted, jump_right, jump_left,
                      InvalidFreeBlock, OverlappingBlocks)
from .kernel import (TOO_FAR, KernelParams, Piece, PieceDecomposition,
                     decompose, verify_decomposition, match_pieces,
                     merge_matching, decomposition_pipeline,
                     find_periodic_blocks, forest_reduction, context_reduction,
                     periodicity_reduction, balanced_rotation,
                     extract_free_pairs, kernelize)
from .driver import RunConfig, ted_bounded, ted_auto

__all__ = [name for name in dir() if not name.startswith("_")]
__version__ = "0.1.0"
