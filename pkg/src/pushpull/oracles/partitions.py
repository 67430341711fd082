"""Exact strength by enumerating every set partition of the vertices.

Partitions are encoded as restricted growth strings: ``label[0] = 0`` and
``label[i] <= 1 + max(label[:i])``. Listing them in lexicographic order gives a
canonical enumeration, which fixes the tie-break for the minimizing partition.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from ..graph_models import CapGraph

MAX_VERTICES = 12
_CHUNK = 1 << 18
_TIE = 1e-12


@dataclass(frozen=True)
class Partition:
    blocks: tuple[tuple[int, ...], ...]

    @property
    def block_count(self) -> int:
        return len(self.blocks)

    @classmethod
    def from_labels(cls, labels) -> "Partition":
        groups: dict[int, list[int]] = {}
        for v, b in enumerate(labels):
            groups.setdefault(int(b), []).append(v)
        return cls(tuple(tuple(groups[b]) for b in sorted(groups)))

    def cut(self, g: CapGraph) -> float:
        label = np.empty(g.n, dtype=np.int64)
        for b, block in enumerate(self.blocks):
            label[list(block)] = b
        return float(g.cap[label[g.src] != label[g.dst]].sum())

    def to_list(self) -> list[list[int]]:
        return [list(b) for b in self.blocks]


@lru_cache(maxsize=None)
def restricted_growth_strings(n: int) -> np.ndarray:
    """All set partitions of ``range(n)`` as a ``(Bell(n), n)`` int8 array, lexicographic."""
    if n < 1:
        raise ValueError(f"need at least one vertex, got {n}")
    if n > MAX_VERTICES:
        raise ValueError(f"partition enumeration is limited to n <= {MAX_VERTICES}, got {n}")
    rows = np.zeros((1, 1), dtype=np.int8)
    top = np.zeros(1, dtype=np.int8)  # largest label used so far, per row
    for _ in range(1, n):
        fan = (top + 2).astype(np.int64)  # labels 0..top+1
        parent = np.repeat(np.arange(rows.shape[0]), fan)
        starts = np.cumsum(fan) - fan
        child = (np.arange(parent.size) - np.repeat(starts, fan)).astype(np.int8)
        rows = np.column_stack([rows[parent], child])
        top = np.maximum(top[parent], child)
    rows.setflags(write=False)
    return rows


def _check_size(g: CapGraph) -> None:
    if g.n < 2:
        raise ValueError(f"strength needs at least two vertices, got {g.n}")
    if g.n > MAX_VERTICES:
        raise ValueError(f"exact strength is limited to n <= {MAX_VERTICES}, got n={g.n}")


def _minimize(g: CapGraph, session: np.ndarray | None) -> tuple[float, Partition]:
    rgs = restricted_growth_strings(g.n)
    best_val, best_row = np.inf, -1
    for lo in range(0, rgs.shape[0], _CHUNK):
        block = rgs[lo: lo + _CHUNK]
        parts = block.max(axis=1).astype(np.int64) + 1
        cut = (block[:, g.src] != block[:, g.dst]).astype(np.float64) @ g.cap
        ok = parts >= 2
        if session is not None:
            covered = np.zeros((block.shape[0], g.n), dtype=bool)
            rows = np.arange(block.shape[0])
            for s in session:
                covered[rows, block[:, s]] = True
            ok &= covered.sum(axis=1) == parts
        if not np.any(ok):
            continue
        ratio = np.full(block.shape[0], np.inf)
        ratio[ok] = cut[ok] / (parts[ok] - 1)
        chunk_min = ratio.min()
        if chunk_min < best_val - _TIE * max(1.0, abs(best_val) if np.isfinite(best_val) else 1.0):
            best_val = float(chunk_min)
            best_row = lo + int(np.flatnonzero(ratio <= chunk_min + _TIE * max(1.0, chunk_min))[0])
    return best_val, Partition.from_labels(rgs[best_row])


def strength_exact(g: CapGraph) -> tuple[float, Partition]:
    """Minimum over partitions with at least two blocks of ``cut / (blocks - 1)``."""
    _check_size(g)
    return _minimize(g, None)


def strength_multicast_exact(g: CapGraph, session) -> float:
    """As :func:`strength_exact`, over partitions whose every block meets ``session``."""
    _check_size(g)
    members = sorted({int(v) for v in session})
    if len(members) < 2:
        raise ValueError("the session needs at least two vertices")
    if members[0] < 0 or members[-1] >= g.n:
        raise ValueError(f"session {members} is not a subset of the {g.n} vertices")
    value, _ = _minimize(g, np.array(members))
    return value


def strength_multicast_argmin(g: CapGraph, session) -> tuple[float, Partition]:
    _check_size(g)
    members = np.array(sorted({int(v) for v in session}))
    if members.size < 2 or members[0] < 0 or members[-1] >= g.n:
        raise ValueError("the session must be at least two vertices of the graph")
    return _minimize(g, members)
