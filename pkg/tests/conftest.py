"""Shared test helpers: small independent oracles and the acceptance summary."""

from __future__ import annotations

import itertools

import numpy as np
import pytest

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def set_partitions(items):
    """All set partitions of ``items`` by plain recursion (independent of the package's encoding)."""
    items = list(items)
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for part in set_partitions(rest):
        for i in range(len(part)):
            yield part[:i] + [[first] + part[i]] + part[i + 1:]
        yield [[first]] + part


def brute_strength(n, caps, session=None):
    best = float("inf")
    for part in set_partitions(range(n)):
        if len(part) < 2:
            continue
        if session is not None and any(not set(b) & set(session) for b in part):
            continue
        where = {v: i for i, b in enumerate(part) for v in b}
        cut = sum(c for (i, j), c in caps.items() if where[i] != where[j])
        best = min(best, cut / (len(part) - 1))
    return best


def brute_matching_size(left, right, edges):
    """Maximum matching by exhaustive recursion over left vertices."""
    adj = [sorted(j for (i, j) in edges if i == u) for u in range(left)]

    def go(u, used):
        if u == left:
            return 0
        best = go(u + 1, used)
        for v in adj[u]:
            if not used >> v & 1:
                best = max(best, 1 + go(u + 1, used | 1 << v))
        return best

    return go(0, 0)


def kirchhoff_count(n, edges):
    """Spanning-tree count by the matrix-tree theorem."""
    if n == 1:
        return 1
    lap = np.zeros((n, n))
    for i, j in edges:
        lap[i, i] += 1
        lap[j, j] += 1
        lap[i, j] -= 1
        lap[j, i] -= 1
    return int(round(np.linalg.det(lap[1:, 1:])))


def exact_no_matching_2x2(p):
    """Probability that G(2, 2, p) lacks a perfect matching, by listing all 16 graphs."""
    pairs = [(0, 0), (0, 1), (1, 0), (1, 1)]
    total = 0.0
    for mask in itertools.product([0, 1], repeat=4):
        edges = {e for e, m in zip(pairs, mask) if m}
        weight = np.prod([p if m else 1 - p for m in mask])
        has = ({(0, 0), (1, 1)} <= edges) or ({(0, 1), (1, 0)} <= edges)
        total += 0 if has else weight
    return total


@pytest.fixture
def k3():
    from pushpull.graph_models import CapGraph

    return CapGraph.complete(3)


def random_small_graph(rng, n, max_cap=3, density=0.6, connected=True):
    """Random graph with integer capacities in 1..max_cap; resampled until connected if asked."""
    from pushpull.graph_models import CapGraph

    while True:
        edges = [(i, j, int(rng.integers(1, max_cap + 1)))
                 for i in range(n) for j in range(i + 1, n) if rng.random() < density]
        g = CapGraph.from_edges(n, edges)
        if not connected or g.is_connected():
            return g
