"""The push-pull allcast algorithm on binary random graphs.

A run goes through five stages:

1. every edge gets a direction by a fair coin, except that source edges point
   away from the source;
2. the source sends bit ``i`` to its ``i``-th lowest-indexed neighbour (the
   owner of bit ``i``);
3. each owner forwards its bit along all of its outward edges;
4. every node keeps the bits that owners sent it directly;
5. every node pulls each missing bit from a distinct relay whose edge points
   toward it, using a bipartite matching between missing bits and helper relays.

Bits are indices, not payloads. Every transmission is recorded as a
``(tail, head, bit, phase)`` row so an auditor can replay the run from the
usage log alone.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .audit import capacity_problems, edge_loads, replay_depths, replay_holdings
from .graph_models import CapacityDistribution, CapGraph, choose_quantization, gen_gnp, quantize_layers
from .seeding import derive_rng, derive_seed

__all__ = [
    "PUSH1",
    "PUSH2",
    "PULL2",
    "Orientation",
    "orient_edges",
    "AllcastReport",
    "allcast_bit_budget",
    "allcast_beta",
    "run_allcast",
    "vanishing_p",
    "run_allcast_vanishing",
    "LayeredReport",
    "layered_allcast",
    "audit_delivery",
    "verify_delivery",
    "audit_layered",
    "delivery_depths",
    "edge_loads",
    "replay_depths",
]

PUSH1, PUSH2, PULL2 = 1, 2, 3


@dataclass(frozen=True, eq=False)
class Orientation:
    """Directions for the edges of a graph, aligned with its edge arrays."""

    source: int
    tail: np.ndarray
    head: np.ndarray

    @property
    def direction(self) -> dict[tuple[int, int], tuple[int, int]]:
        out = {}
        for t, h in zip(self.tail.tolist(), self.head.tolist()):
            out[(min(t, h), max(t, h))] = (t, h)
        return out

    def out_degrees(self, n: int) -> np.ndarray:
        return np.bincount(self.tail, minlength=n)

    def in_degrees(self, n: int) -> np.ndarray:
        return np.bincount(self.head, minlength=n)


def orient_edges(g: CapGraph, source: int, seed: int) -> Orientation:
    if not 0 <= source < g.n:
        raise ValueError(f"source {source} is not a vertex of a graph on {g.n} vertices")
    at_source = (g.src == source) | (g.dst == source)
    forward = np.ones(g.num_edges, dtype=bool)
    # one coin per non-source edge, in lexicographic edge order
    forward[~at_source] = derive_rng(seed, "orient").random(int((~at_source).sum())) < 0.5
    forward[at_source] = g.src[at_source] == source
    tail = np.where(forward, g.src, g.dst).astype(np.int32)
    head = np.where(forward, g.dst, g.src).astype(np.int32)
    return Orientation(source, tail, head)


def allcast_bit_budget(n: int, p: float, eps: float) -> int:
    """``floor((n - 1) p (1 - eps) / 2)``: the source serves the other ``n - 1`` nodes."""
    return math.floor((n - 1) * p * (1 - eps) / 2)


def allcast_beta(B: int, p: float, eps: float) -> int:
    return math.floor(B * (1 - p * (1 - eps) / 2))


@dataclass(eq=False)
class AllcastReport:
    n: int
    p: float
    eps: float
    source: int
    B: int
    beta: int
    restricted: bool
    owners: np.ndarray
    a1: bool
    a2: tuple[int, ...]
    a3: tuple[int, ...]
    m: tuple[int, ...]
    failed: tuple[int, ...]
    delivered: np.ndarray  # (n, B) bool; the source row is all True
    usage_tail: np.ndarray
    usage_head: np.ndarray
    usage_bit: np.ndarray
    usage_phase: np.ndarray
    causes: dict[int, str] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return not self.a1 and not self.failed

    @property
    def receivers(self) -> np.ndarray:
        return np.array([v for v in range(self.n) if v != self.source], dtype=np.int64)

    @property
    def common_bits(self) -> int:
        """Bits that reached every non-source node."""
        if self.B == 0 or self.n < 2:
            return 0
        return int(np.all(self.delivered[self.receivers], axis=0).sum())

    @property
    def fatal_events(self) -> list[str]:
        if self.a1:
            return ["A1"]
        return sorted(set(self.causes.values()))

    def delivered_sets(self) -> dict[int, set[int]]:
        return {v: set(np.flatnonzero(self.delivered[v]).tolist()) for v in range(self.n)}

    def edge_usage(self) -> dict[tuple[int, int], list[tuple[int, int, int]]]:
        out: dict[tuple[int, int], list[tuple[int, int, int]]] = {}
        for t, h, b, ph in zip(
            self.usage_tail.tolist(), self.usage_head.tolist(), self.usage_bit.tolist(), self.usage_phase.tolist()
        ):
            out.setdefault((min(t, h), max(t, h)), []).append((t, h, b))
        return out

    def usage_rows(self) -> list[list[int]]:
        return np.column_stack(
            [self.usage_tail, self.usage_head, self.usage_bit, self.usage_phase]
        ).astype(int).tolist()

    def to_dict(self, include_usage: bool = True) -> dict:
        out = {
            "n": self.n,
            "p": self.p,
            "eps": self.eps,
            "source": self.source,
            "B": self.B,
            "beta": self.beta,
            "restricted": self.restricted,
            "events": {"A1": self.a1, "A2": list(self.a2), "A3": list(self.a3), "M": list(self.m)},
            "failed": list(self.failed),
            "failure_causes": {str(k): v for k, v in sorted(self.causes.items())},
            "owners": self.owners.tolist(),
            "delivered_counts": self.delivered.sum(axis=1).astype(int).tolist() if self.B else [0] * self.n,
            "common_bits": self.common_bits,
            "success": self.success,
        }
        if include_usage:
            out["edge_usage"] = self.usage_rows()
        return out


def _incoming_csr(head: np.ndarray, tail: np.ndarray, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Group ``tail`` by ``head``: returns ``(indptr, tails)`` with tails ascending per head."""
    order = np.lexsort((tail, head))
    counts = np.bincount(head, minlength=n)
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.cumsum(counts, out=indptr[1:])
    return indptr, tail[order]


def _pull_columns(
    missing: np.ndarray, held: np.ndarray, own_bit: int, size: int
) -> np.ndarray:
    """Pad the missing bits with the lowest-indexed held bits (never ``own_bit``) up to ``size``."""
    extra = size - missing.size
    if extra <= 0:
        return missing
    filler = np.flatnonzero(held)
    if own_bit >= 0:
        filler = filler[filler != own_bit]
    return np.concatenate([missing, filler[:extra]])


def _match_columns(holds: csr_matrix, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """For each column, the index into ``rows`` matched to it, or -1."""
    if rows.size == 0 or cols.size == 0:
        return np.full(cols.size, -1, dtype=np.int64)
    sub = holds[rows][:, cols].tocsr()
    return np.asarray(maximum_bipartite_matching(sub, perm_type="row"), dtype=np.int64)


def run_allcast(
    g: CapGraph, source: int, eps: float, seed: int, p: float, restricted: bool = False
) -> AllcastReport:
    """Run the push-pull allcast on a binary graph generated with edge probability ``p``.

    With ``restricted=False`` (default) each node matches its missing bits
    against all of its helper relays. With ``restricted=True`` the pull uses a
    square problem: the missing bits padded with already-held bits to
    ``beta`` columns against the ``beta`` lowest-indexed helpers, so a node
    with fewer than ``beta`` helpers gives up.
    """
    if not g.is_binary():
        raise ValueError("run_allcast needs a graph with unit capacities")
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    n = g.n
    B = allcast_bit_budget(n, p, eps)
    if B < 1:
        raise ValueError(f"bit budget floor((n-1) p (1-eps) / 2) = {B} is below 1")
    beta = allcast_beta(B, p, eps)
    orient = orient_edges(g, source, seed)
    tail, head = orient.tail, orient.head

    neighbours = np.sort(head[tail == source])
    delivered = np.zeros((n, B), dtype=bool)
    delivered[source] = True
    empty = np.zeros(0, dtype=np.int32)
    if neighbours.size < B:
        failed = tuple(v for v in range(n) if v != source)
        return AllcastReport(
            n, p, eps, source, B, beta, restricted, np.zeros(0, dtype=np.int64), True, (), (), (), failed,
            delivered, empty, empty, empty, np.zeros(0, dtype=np.int8), {v: "A1" for v in failed},
        )

    owners = neighbours[:B].astype(np.int64)
    bit_of = np.full(n, -1, dtype=np.int64)
    bit_of[owners] = np.arange(B)

    # push 2: owner -> every outward neighbour
    pushed = bit_of[tail] >= 0
    p2_tail, p2_head = tail[pushed], head[pushed]
    p2_bit = bit_of[p2_tail].astype(np.int32)
    delivered[owners, np.arange(B)] = True
    delivered[p2_head, p2_bit] = True
    holds = csr_matrix((np.ones(p2_bit.size, dtype=np.int8), (p2_head, p2_bit)), shape=(n, B))

    direct = np.bincount(p2_head, minlength=n)
    lo, hi = B * (p / 2) * (1 - eps), B * (p / 2) * (1 + eps)
    a2 = tuple(int(t) for t in range(n) if t != source and not lo <= direct[t] <= hi)

    is_relay = bit_of < 0
    is_relay[source] = False
    from_relay = is_relay[tail]
    indptr, in_tails = _incoming_csr(head[from_relay], tail[from_relay], n)

    a3: list[int] = []
    m: list[int] = []
    causes: dict[int, str] = {}
    pull_tail, pull_head, pull_bit = [], [], []
    for t in range(n):
        if t == source:
            continue
        helpers = in_tails[indptr[t]:indptr[t + 1]]
        if helpers.size < beta:
            a3.append(t)
        held = delivered[t]
        missing = np.flatnonzero(~held)
        if missing.size == 0:
            continue
        if restricted:
            size = max(beta, missing.size)
            if helpers.size < size:
                if helpers.size >= beta:
                    a3.append(t)
                causes[t] = "A3"
                continue
            cols = _pull_columns(missing, held, int(bit_of[t]), size)
            rows = helpers[:size]
        else:
            cols, rows = missing, helpers
        match = _match_columns(holds, rows, cols)
        got = match[: missing.size]
        ok = got >= 0
        if not (np.all(match >= 0) if restricted else np.all(ok)):
            m.append(t)
            causes[t] = "M"
        senders = rows[got[ok]]
        bits = missing[ok]
        delivered[t, bits] = True
        pull_tail.append(senders)
        pull_head.append(np.full(bits.size, t, dtype=np.int32))
        pull_bit.append(bits)

    usage_tail = np.concatenate([np.full(B, source, dtype=np.int32), p2_tail] + [a.astype(np.int32) for a in pull_tail])
    usage_head = np.concatenate([owners.astype(np.int32), p2_head] + pull_head)
    usage_bit = np.concatenate([np.arange(B, dtype=np.int32), p2_bit] + [a.astype(np.int32) for a in pull_bit])
    n_pull = usage_tail.size - B - p2_tail.size
    usage_phase = np.concatenate(
        [np.full(B, PUSH1, dtype=np.int8), np.full(p2_tail.size, PUSH2, dtype=np.int8), np.full(n_pull, PULL2, dtype=np.int8)]
    )
    failed = tuple(sorted(causes))
    return AllcastReport(
        n, p, eps, source, B, beta, restricted, owners, False, a2, tuple(sorted(set(a3))), tuple(m), failed,
        delivered, usage_tail, usage_head, usage_bit, usage_phase, causes,
    )


def vanishing_p(n: int, tau: float) -> float:
    """``sqrt(tau * log(n) / n)``."""
    if n < 2 or tau <= 0:
        raise ValueError("need n >= 2 and tau > 0")
    p = math.sqrt(tau * math.log(n) / n)
    if p > 1.0 and p - 1.0 < 1e-12:
        p = 1.0
    return p


def run_allcast_vanishing(n: int, tau: float, eps: float, seed: int, restricted: bool = False) -> AllcastReport:
    p = vanishing_p(n, tau)
    if p > 1.0:
        raise ValueError(f"p_n = sqrt(tau log n / n) = {p:.6g} exceeds 1")
    g = gen_gnp(n, p, derive_seed(seed, "graph"))
    return run_allcast(g, 0, eps, derive_seed(seed, "allcast"), p, restricted=restricted)


# ---------------------------------------------------------------------------
# Layered variant for general capacities
# ---------------------------------------------------------------------------


@dataclass(eq=False)
class LayeredReport:
    n: int
    eps: float
    delta: float
    M: int
    layer_p: list[float]
    layers: list[AllcastReport | None]  # None where the layer's bit budget is below 1

    @property
    def layer_bits(self) -> list[int]:
        return [0 if r is None else r.common_bits for r in self.layers]

    @property
    def rate(self) -> float:
        return self.delta * sum(self.layer_bits)

    @property
    def normalized_rate(self) -> float:
        return self.rate / self.n

    @property
    def success(self) -> bool:
        return all(r is None or r.success for r in self.layers)

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "eps": self.eps,
            "delta": self.delta,
            "M": self.M,
            "layer_p": self.layer_p,
            "layer_bits": self.layer_bits,
            "layer_success": [None if r is None else r.success for r in self.layers],
            "rate": self.rate,
            "normalized_rate": self.normalized_rate,
            "success": self.success,
        }


def layered_allcast(
    g: CapGraph,
    dist: CapacityDistribution,
    eps: float,
    seed: int,
    source: int = 0,
    delta: float | None = None,
    M: int | None = None,
    restricted: bool = False,
) -> LayeredReport:
    """Run allcast independently on each threshold layer; each layer edge carries ``delta``.

    ``dist`` is the distribution ``g`` was drawn from; layer ``k`` is then a
    ``G(n, 1 - F(k delta))`` graph and gets that value as its nominal ``p``.
    """
    if g.total_capacity <= 0:
        raise ValueError("the graph has no positive capacity")
    if delta is None or M is None:
        delta, M = choose_quantization(dist, eps)
    layers = quantize_layers(g, delta, M)
    layer_p = [1.0 - dist.cdf(k * delta) for k in range(1, M + 1)]
    reports: list[AllcastReport | None] = []
    for k, (layer, pk) in enumerate(zip(layers, layer_p), start=1):
        if pk <= 0 or allcast_bit_budget(g.n, pk, eps) < 1:
            reports.append(None)
            continue
        reports.append(run_allcast(layer, source, eps, derive_seed(seed, "layer", k), pk, restricted=restricted))
    return LayeredReport(g.n, eps, delta, M, layer_p, reports)


# ---------------------------------------------------------------------------
# Independent audit
# ---------------------------------------------------------------------------


def audit_delivery(report: AllcastReport, g: CapGraph) -> list[str]:
    """Check a report against its graph using only the usage log. Returns problems found."""
    if report.n != g.n:
        return [f"report is for n={report.n} but the graph has n={g.n}"]
    problems = capacity_problems(g, report.usage_tail, report.usage_head)
    hold, replay = replay_holdings(
        report.n, report.source, report.B, report.usage_tail, report.usage_head,
        report.usage_bit, report.usage_phase, (PUSH1, PUSH2, PULL2),
    )
    problems += replay
    if hold.shape != report.delivered.shape or not np.array_equal(hold, report.delivered):
        problems.append("replaying the usage log does not reproduce the delivered sets")
    receivers = np.arange(report.n) != report.source
    replay_success = (not report.a1) and bool(np.all(hold[receivers]))
    if replay_success != report.success:
        problems.append("success flag disagrees with the replayed deliveries")
    return problems


def verify_delivery(report: AllcastReport, g: CapGraph) -> bool:
    return not audit_delivery(report, g)


def delivery_depths(report: AllcastReport) -> np.ndarray:
    return replay_depths(
        report.n, report.source, report.B, report.usage_tail, report.usage_head, report.usage_bit, report.usage_phase
    )


def audit_layered(report: LayeredReport, g: CapGraph) -> list[str]:
    """Audit each layer on its own graph, then check that the summed load stays within capacity."""
    problems: list[str] = []
    layers = quantize_layers(g, report.delta, report.M)
    tails, heads = [], []
    for k, (layer, sub) in enumerate(zip(layers, report.layers), start=1):
        if sub is None:
            continue
        problems += [f"layer {k}: {msg}" for msg in audit_delivery(sub, layer)]
        tails.append(sub.usage_tail)
        heads.append(sub.usage_head)
    if tails:
        problems += capacity_problems(g, np.concatenate(tails), np.concatenate(heads), unit=report.delta)
    return problems
