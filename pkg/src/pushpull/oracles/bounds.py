"""Closed-form cut bounds on strength."""

from __future__ import annotations

import math

from ..graph_models import CapGraph


def upper_bound_allcast(g: CapGraph) -> float:
    """Total capacity over ``n - 1``: the all-singletons partition."""
    if g.n < 2:
        raise ValueError(f"need n >= 2, got {g.n}")
    return g.total_capacity / (g.n - 1)


def multicast_cut(g: CapGraph, k: int) -> float:
    """Cut of the partition into singletons ``{0}, ..., {k-2}`` plus one block with everything else."""
    if not 2 <= k <= g.n:
        raise ValueError(f"session size k must lie in [2, {g.n}], got {k}")
    # an edge is cut unless both ends sit in the big block
    return float(g.cap[g.src < k - 1].sum())


def upper_bound_multicast(g: CapGraph, k: int) -> float:
    """Multicast bound for the session ``{0, ..., k-1}``."""
    return multicast_cut(g, k) / (k - 1)


def catlin_value(g: CapGraph) -> int:
    return math.floor(upper_bound_allcast(g) + 1e-12)
