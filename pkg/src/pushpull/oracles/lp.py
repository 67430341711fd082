"""Fractional tree packing solved with a small dense simplex.

The packing LP is ``max sum(x)`` subject to ``A x <= c`` and ``x >= 0``, where
``A[e, T] = 1`` when tree ``T`` uses edge ``e``. Since ``c >= 0`` the slack
basis is feasible, so a single phase suffices. Pivots pick the most negative
reduced cost; after a run of degenerate pivots the solver switches to Bland's
rule (lowest-index entering column, lowest-index leaving basic variable on
ratio ties) for good, which rules out cycling on these degenerate instances.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..graph_models import CapGraph
from .trees import TreeSet

TOL = 1e-9


@dataclass(frozen=True, eq=False)
class PackingResult:
    value: float
    weights: np.ndarray  # one weight per tree, aligned with the TreeSet
    tight_edges: tuple[tuple[int, int], ...]

    @property
    def weight_map(self) -> dict[int, float]:
        return {i: float(w) for i, w in enumerate(self.weights) if w > 1e-12}

    def edge_loads(self, trees: TreeSet) -> dict[tuple[int, int], float]:
        load: dict[tuple[int, int], float] = {}
        for w, t in zip(self.weights, trees.trees):
            for e in t:
                load[e] = load.get(e, 0.0) + float(w)
        return load


def simplex_max(
    A: np.ndarray, b: np.ndarray, c: np.ndarray, max_iter: int = 100_000, stall_limit: int = 50
) -> np.ndarray:
    """Maximize ``c @ x`` over ``A x <= b, x >= 0`` for ``b >= 0``; returns an optimal ``x``."""
    m, n = A.shape
    if np.any(b < -TOL):
        raise ValueError("the slack basis needs a nonnegative right-hand side")
    tab = np.zeros((m + 1, n + m + 1))
    tab[:m, :n] = A
    tab[:m, n:n + m] = np.eye(m)
    tab[:m, -1] = np.maximum(b, 0.0)
    tab[m, :n] = -c
    basis = np.arange(n, n + m)
    bland, stalled = stall_limit <= 0, 0
    for _ in range(max_iter):
        improving = np.flatnonzero(tab[m, :-1] < -TOL)
        if improving.size == 0:
            break
        col = improving[0] if bland else improving[np.argmin(tab[m, improving])]
        column = tab[:m, col]
        rows = np.flatnonzero(column > TOL)
        if rows.size == 0:
            raise RuntimeError("LP is unbounded")
        ratios = tab[rows, -1] / column[rows]
        best = ratios.min()
        ties = rows[ratios <= best + TOL]
        row = ties[np.argmin(basis[ties])]
        if best <= TOL:
            stalled += 1
            bland = bland or stalled >= stall_limit
        else:
            stalled = 0
        tab[row] /= tab[row, col]
        others = np.arange(m + 1) != row
        tab[others] -= np.outer(tab[others, col], tab[row])
        basis[row] = col
    else:
        raise RuntimeError("simplex did not converge")
    x = np.zeros(n + m)
    x[basis] = tab[:m, -1]
    return x[:n]


def tree_pack_lp(g: CapGraph, trees: TreeSet) -> PackingResult:
    """Largest total weight of trees such that every edge carries at most its capacity."""
    if len(trees) == 0:
        raise ValueError("need at least one tree to pack")
    caps = g.capacities
    edges = sorted({e for t in trees for e in t})
    missing = [e for e in edges if caps.get(e, 0.0) <= 0]
    if missing:
        raise ValueError(f"tree edge {missing[0]} is not in the support of the graph")
    row = {e: i for i, e in enumerate(edges)}
    A = np.zeros((len(edges), len(trees)))
    for j, t in enumerate(trees):
        for e in t:
            A[row[e], j] = 1.0
    b = np.array([caps[e] for e in edges])
    x = simplex_max(A, b, np.ones(len(trees)))
    x = np.where(x < 0, 0.0, x)
    load = A @ x
    tight = tuple(e for e, used, cap in zip(edges, load, b) if abs(used - cap) <= TOL * max(1.0, cap))
    return PackingResult(float(x.sum()), x, tight)
