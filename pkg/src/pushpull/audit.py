"""Replay helpers shared by the delivery auditors.

A usage log is four aligned arrays ``(tail, head, bit, phase)``. Replaying it
in phase order, and accepting a transmission only when the sender already
holds the bit, rebuilds who holds what without trusting any report field.
"""

from __future__ import annotations

import numpy as np

from .graph_models import CapGraph


def edge_loads(n: int, tail, head) -> tuple[np.ndarray, np.ndarray]:
    """Bits carried per undirected edge (both directions summed), as ``(codes, counts)``
    where ``code = min * n + max``."""
    tail = np.asarray(tail, dtype=np.int64)
    head = np.asarray(head, dtype=np.int64)
    return np.unique(np.minimum(tail, head) * n + np.maximum(tail, head), return_counts=True)


def capacity_problems(g: CapGraph, tail, head, unit: float = 1.0) -> list[str]:
    """Every used edge must exist in ``g`` and carry at most ``capacity / unit`` bits."""
    n = g.n
    codes, counts = edge_loads(n, tail, head)
    if codes.size == 0:
        return []
    if g.num_edges == 0:
        return [f"edge ({codes[0] // n}, {codes[0] % n}) carries bits but the graph has no edges"]
    pos = np.minimum(np.searchsorted(g.keys, codes), g.num_edges - 1)
    exists = g.keys[pos] == codes
    if not np.all(exists):
        bad = int(codes[~exists][0])
        return [f"edge ({bad // n}, {bad % n}) carries bits but is not in the graph"]
    over = counts * unit > g.cap[pos] + 1e-9
    if np.any(over):
        bad = int(codes[over][0])
        return [f"edge ({bad // n}, {bad % n}) carries {int(counts[over][0])} bits, over its capacity"]
    return []


def replay_holdings(
    n: int, source: int, B: int, tail, head, bit, phase, phases: tuple[int, ...]
) -> tuple[np.ndarray, list[str]]:
    """Replay the log phase by phase; returns the ``(n, B)`` holdings and any problems."""
    tail = np.asarray(tail, dtype=np.int64)
    head = np.asarray(head, dtype=np.int64)
    bit = np.asarray(bit, dtype=np.int64)
    phase = np.asarray(phase)
    problems: list[str] = []
    hold = np.zeros((n, B), dtype=bool)
    if B == 0:
        if tail.size:
            problems.append("usage log is non-empty but there are no bits")
        return hold, problems
    hold[source] = True
    if tail.size:
        if tail.min() < 0 or head.min() < 0 or max(tail.max(), head.max()) >= n:
            return hold, ["usage log names a vertex outside the graph"]
        if np.any(tail == head):
            return hold, ["usage log has a self-loop"]
        if bit.min() < 0 or bit.max() >= B:
            return hold, ["usage log names a bit outside 0..B-1"]
    if np.any(~np.isin(phase, phases)):
        problems.append("usage log has an unknown phase")
    for ph in phases:
        sel = phase == ph
        if np.any(~hold[tail[sel], bit[sel]]):
            problems.append(f"phase {ph} sends a bit the sender does not hold")
        hold[head[sel], bit[sel]] = True
    return hold, problems


def replay_depths(n: int, source: int, B: int, tail, head, bit, phase) -> np.ndarray:
    """Hop count from the source at which each node first holds each bit (-1 if never)."""
    depth = np.full((n, B), -1, dtype=np.int64)
    depth[source] = 0
    tail, head, bit = (np.asarray(a, dtype=np.int64) for a in (tail, head, bit))
    phase = np.asarray(phase)
    for ph in np.unique(phase):
        sel = phase == ph
        cand = depth[tail[sel], bit[sel]] + 1
        cur = depth[head[sel], bit[sel]]
        better = (cur < 0) | (cand < cur)
        depth[head[sel][better], bit[sel][better]] = cand[better]
    return depth
