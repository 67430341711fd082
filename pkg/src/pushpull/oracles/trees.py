"""Spanning and Steiner tree enumeration for small graphs."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import combinations

from ..graph_models import CapGraph

MAX_TREE_VERTICES = 7

Edge = tuple[int, int]


@dataclass(frozen=True)
class TreeSet:
    trees: tuple[frozenset[Edge], ...]
    kind: str  # "spanning" or "steiner"
    session: frozenset[int] | None = None

    def __len__(self) -> int:
        return len(self.trees)

    def __iter__(self):
        return iter(self.trees)


def _is_tree_on(edges: tuple[Edge, ...], vertices: tuple[int, ...]) -> bool:
    """``len(vertices) - 1`` edges without a cycle span ``vertices`` as a tree."""
    parent = {v: v for v in vertices}

    def find(x: int) -> int:
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for u, v in edges:
        ru, rv = find(u), find(v)
        if ru == rv:
            return False
        parent[ru] = rv
    return True


def _trees_on(support: list[Edge], vertices: tuple[int, ...]) -> list[tuple[Edge, ...]]:
    inside = set(vertices)
    local = [e for e in support if e[0] in inside and e[1] in inside]
    if len(vertices) == 1:
        return [()]
    return [c for c in combinations(local, len(vertices) - 1) if _is_tree_on(c, vertices)]


def _leaves(edges: tuple[Edge, ...]) -> set[int]:
    degree: dict[int, int] = {}
    for u, v in edges:
        degree[u] = degree.get(u, 0) + 1
        degree[v] = degree.get(v, 0) + 1
    return {v for v, d in degree.items() if d == 1}


def enumerate_trees(g: CapGraph, session=None) -> TreeSet:
    """Every spanning tree of the support of ``g``, or every pruned Steiner tree for ``session``.

    A pruned Steiner tree contains all session vertices and has only session
    vertices as leaves. A disconnected support gives an empty set.
    """
    if g.n > MAX_TREE_VERTICES:
        raise ValueError(f"tree enumeration is limited to n <= {MAX_TREE_VERTICES}, got n={g.n}")
    support = [(int(i), int(j)) for i, j in zip(g.src, g.dst)]
    if session is None:
        found = _trees_on(support, tuple(range(g.n)))
        return TreeSet(_canonical(found), "spanning")
    terminals = frozenset(int(v) for v in session)
    if len(terminals) < 2:
        raise ValueError("a Steiner family needs at least two session vertices")
    if min(terminals) < 0 or max(terminals) >= g.n:
        raise ValueError(f"session {sorted(terminals)} is not a subset of the {g.n} vertices")
    others = [v for v in range(g.n) if v not in terminals]
    found = []
    for r in range(len(others) + 1):
        for extra in combinations(others, r):
            vertices = tuple(sorted(terminals | set(extra)))
            for t in _trees_on(support, vertices):
                if _leaves(t) <= terminals:
                    found.append(t)
    return TreeSet(_canonical(found), "steiner", terminals)


def _canonical(found: list[tuple[Edge, ...]]) -> tuple[frozenset[Edge], ...]:
    unique = {tuple(sorted(t)): None for t in found}
    return tuple(frozenset(t) for t in sorted(unique, key=lambda t: (len(t), t)))
