"""Exact ground truth for small graphs: strength, cut bounds, tree packing."""

from .bounds import catlin_value, multicast_cut, upper_bound_allcast, upper_bound_multicast
from .lp import PackingResult, simplex_max, tree_pack_lp
from .partitions import (
    Partition,
    restricted_growth_strings,
    strength_exact,
    strength_multicast_argmin,
    strength_multicast_exact,
)
from .trees import TreeSet, enumerate_trees

__all__ = [
    "Partition",
    "PackingResult",
    "TreeSet",
    "catlin_value",
    "enumerate_trees",
    "multicast_cut",
    "restricted_growth_strings",
    "simplex_max",
    "strength_exact",
    "strength_multicast_argmin",
    "strength_multicast_exact",
    "tree_pack_lp",
    "upper_bound_allcast",
    "upper_bound_multicast",
]
