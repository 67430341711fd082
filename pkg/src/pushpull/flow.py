"""Single-source flows through a relay core, and the multicast composition.

``run_maxflow`` is the flood-then-pull scheme for one sink: the source floods
``B`` relays, the sink takes what its neighbours already hold and matches the
rest to relays next to it, each of which fetches one bit from a source-side
relay. ``run_maxflow_pushpull_multi`` pushes two levels up front (owner to
non-owner relays) so each sink only pulls. ``run_multicast`` splits one random
graph into its session clique (served by allcast) and the relay network
(served by the push-pull flow) and adds the two rates.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import maximum_bipartite_matching

from .allcast import AllcastReport, allcast_bit_budget, run_allcast
from .audit import capacity_problems, edge_loads, replay_holdings
from .graph_models import RelayNetwork, gen_gnp
from .seeding import derive_seed

__all__ = [
    "FlowReport",
    "MulticastReport",
    "flow_bit_budget",
    "flow_beta",
    "run_maxflow",
    "run_maxflow_pushpull_multi",
    "run_multicast",
    "audit_flow",
    "verify_flow",
    "multicast_overlap",
]

PUSH, FORWARD, PULL = 1, 2, 3


def flow_bit_budget(n: int, p: float, eps: float) -> int:
    return math.floor(n * p * (1 - eps))


def flow_beta(n: int, p: float, eps: float) -> int:
    q = p * (1 - eps)
    return math.floor(n * q * (1 - q))


@dataclass(eq=False)
class FlowReport:
    """Outcome of a flow run. Vertex ids follow :class:`RelayNetwork`."""

    algorithm: str
    k: int
    n: int
    p: float
    eps: float
    B: int
    beta: int
    restricted: bool
    owners: np.ndarray  # global vertex ids of the bit owners
    a1: bool
    a2: tuple[int, ...]
    a3: tuple[int, ...]
    m: tuple[int, ...]
    failed: tuple[int, ...]
    delivered: np.ndarray  # (k, B): session rows, row 0 is the source
    usage_tail: np.ndarray
    usage_head: np.ndarray
    usage_bit: np.ndarray
    usage_phase: np.ndarray
    causes: dict[int, str] = field(default_factory=dict)

    @property
    def success(self) -> bool:
        return not self.a1 and not self.failed

    @property
    def common_bits(self) -> int:
        """Bits held by every sink."""
        if self.B == 0:
            return 0
        return int(np.all(self.delivered[1:], axis=0).sum())

    @property
    def fatal_events(self) -> list[str]:
        if self.a1:
            return ["A1"]
        return sorted(set(self.causes.values()))

    def delivered_sets(self) -> dict[int, set[int]]:
        return {s: set(np.flatnonzero(self.delivered[s]).tolist()) for s in range(1, self.k)}

    def used_edges(self) -> set[tuple[int, int]]:
        lo = np.minimum(self.usage_tail, self.usage_head).tolist()
        hi = np.maximum(self.usage_tail, self.usage_head).tolist()
        return set(zip(lo, hi))

    def usage_rows(self) -> list[list[int]]:
        return np.column_stack(
            [self.usage_tail, self.usage_head, self.usage_bit, self.usage_phase]
        ).astype(int).tolist()

    def to_dict(self, include_usage: bool = True) -> dict:
        out = {
            "algorithm": self.algorithm,
            "k": self.k,
            "n": self.n,
            "p": self.p,
            "eps": self.eps,
            "B": self.B,
            "beta": self.beta,
            "restricted": self.restricted,
            "events": {"A1": self.a1, "A2": list(self.a2), "A3": list(self.a3), "M": list(self.m)},
            "failed": list(self.failed),
            "failure_causes": {str(s): c for s, c in sorted(self.causes.items())},
            "owners": self.owners.tolist(),
            "delivered_counts": self.delivered.sum(axis=1).astype(int).tolist(),
            "common_bits": self.common_bits,
            "success": self.success,
        }
        if include_usage:
            out["edge_usage"] = self.usage_rows()
        return out


class _Log:
    def __init__(self):
        self.parts: list[tuple[np.ndarray, np.ndarray, np.ndarray, int]] = []

    def add(self, tail, head, bit, phase: int) -> None:
        tail = np.asarray(tail, dtype=np.int32)
        self.parts.append((tail, np.broadcast_to(np.asarray(head, dtype=np.int32), tail.shape),
                           np.asarray(bit, dtype=np.int32), phase))

    def arrays(self):
        if not self.parts:
            z = np.zeros(0, dtype=np.int32)
            return z, z, z, np.zeros(0, dtype=np.int8)
        tail = np.concatenate([p[0] for p in self.parts])
        head = np.concatenate([p[1] for p in self.parts])
        bit = np.concatenate([p[2] for p in self.parts])
        phase = np.concatenate([np.full(p[0].size, p[3], dtype=np.int8) for p in self.parts])
        return tail, head, bit, phase


def _check_inputs(net: RelayNetwork, eps: float, p: float) -> None:
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    if not 0 < p <= 1:
        raise ValueError(f"p must lie in (0, 1], got {p}")
    if net.n < 1:
        raise ValueError("the relay network has no relays")


def _pull_rows_cols(
    missing: np.ndarray, held: np.ndarray, helpers: np.ndarray, beta: int, restricted: bool
) -> tuple[np.ndarray, np.ndarray] | None:
    """Columns (bits) and rows (relays) of one sink's pull problem, or None if too few helpers."""
    if not restricted:
        return missing, helpers
    size = max(beta, missing.size)
    if helpers.size < size:
        return None
    cols = missing
    if size > missing.size:
        cols = np.concatenate([missing, np.flatnonzero(held)[: size - missing.size]])
    return cols, helpers[:size]


def _match(bitmap: np.ndarray, rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Row position matched to each column (-1 if unmatched); ``bitmap`` is relays x bits."""
    if rows.size == 0 or cols.size == 0:
        return np.full(cols.size, -1, dtype=np.int64)
    sub = csr_matrix(bitmap[np.ix_(rows, cols)])
    return np.asarray(maximum_bipartite_matching(sub, perm_type="row"), dtype=np.int64)


def _flood(net: RelayNetwork, B: int):
    """Owners as relay-local indices, or None when the source has too few relay neighbours."""
    nbrs = np.flatnonzero(net.session_adj[0])
    if nbrs.size < B:
        return None
    return nbrs[:B]


def _a1_report(algorithm, net, p, eps, B, beta, restricted) -> FlowReport:
    delivered = np.zeros((net.k, B), dtype=bool)
    delivered[0] = True
    failed = tuple(range(1, net.k))
    z = np.zeros(0, dtype=np.int32)
    return FlowReport(
        algorithm, net.k, net.n, p, eps, B, beta, restricted, np.zeros(0, dtype=np.int64), True,
        (), (), (), failed, delivered, z, z, z, np.zeros(0, dtype=np.int8), {s: "A1" for s in failed},
    )


def run_maxflow(net: RelayNetwork, eps: float, p: float, restricted: bool = False) -> FlowReport:
    """Flood ``B`` relays, then pull at the single sink directly and through sink-side relays.

    A bit held by a relay not adjacent to the sink travels owner -> sink-side
    relay -> sink, with the owner/relay pairs chosen by a bipartite matching.
    The run is deterministic given the network.
    """
    if net.k != 2:
        raise ValueError(f"run_maxflow handles one sink (k=2), got k={net.k}; use run_maxflow_pushpull_multi")
    _check_inputs(net, eps, p)
    B, beta = flow_bit_budget(net.n, p, eps), flow_beta(net.n, p, eps)
    if B < 1:
        raise ValueError(f"bit budget floor(n p (1-eps)) = {B} is below 1")
    owners = _flood(net, B)
    if owners is None:
        return _a1_report("maxflow", net, p, eps, B, beta, restricted)
    k, sink = net.k, 1
    log = _Log()
    log.add(np.zeros(B), k + owners, np.arange(B), PUSH)
    delivered = np.zeros((k, B), dtype=bool)
    delivered[0] = True

    at_sink = net.session_adj[sink]
    direct = np.flatnonzero(at_sink[owners])
    log.add(k + owners[direct], sink, direct, FORWARD)
    delivered[sink, direct] = True
    lo, hi = B * p * (1 - eps), B * p * (1 + eps)
    a2 = () if lo <= direct.size <= hi else (sink,)

    is_owner = np.zeros(net.n, dtype=bool)
    is_owner[owners] = True
    helpers = np.flatnonzero(at_sink & ~is_owner)
    a3 = (sink,) if helpers.size < beta else ()
    missing = np.flatnonzero(~delivered[sink])
    m: tuple[int, ...] = ()
    causes: dict[int, str] = {}
    if missing.size:
        bitmap = net.relay_adj[:, owners]
        problem = _pull_rows_cols(missing, delivered[sink], helpers, beta, restricted)
        if problem is None:
            causes[sink] = "A3"
            a3 = (sink,)
        else:
            cols, rows = problem
            match = _match(bitmap, rows, cols)
            got = match[: missing.size]
            ok = got >= 0
            if not (np.all(match >= 0) if restricted else np.all(ok)):
                m = (sink,)
                causes[sink] = "M"
            relays, bits = rows[got[ok]], missing[ok]
            log.add(k + owners[bits], k + relays, bits, FORWARD)
            log.add(k + relays, sink, bits, PULL)
            delivered[sink, bits] = True
    return FlowReport(
        "maxflow", k, net.n, p, eps, B, beta, restricted, (k + owners).astype(np.int64), False,
        a2, a3, m, tuple(sorted(causes)), delivered, *log.arrays(), causes,
    )


def run_maxflow_pushpull_multi(net: RelayNetwork, eps: float, p: float, restricted: bool = False) -> FlowReport:
    """Two common push steps, then every sink pulls on its own.

    Owners push to their non-owner relay neighbours and to adjacent sinks;
    owner-owner links stay idle. Each sink matches its missing bits to
    adjacent non-owner relays over the resulting availability map.
    """
    if net.k < 2:
        raise ValueError(f"need at least one sink, got k={net.k}")
    _check_inputs(net, eps, p)
    B, beta = flow_bit_budget(net.n, p, eps), flow_beta(net.n, p, eps)
    if B < 1:
        raise ValueError(f"bit budget floor(n p (1-eps)) = {B} is below 1")
    owners = _flood(net, B)
    if owners is None:
        return _a1_report("pushpull", net, p, eps, B, beta, restricted)
    k = net.k
    log = _Log()
    log.add(np.zeros(B), k + owners, np.arange(B), PUSH)

    is_owner = np.zeros(net.n, dtype=bool)
    is_owner[owners] = True
    # push 2 toward non-owner relays: bitmap[r, j] = relay r holds bit j
    bitmap = net.relay_adj[:, owners] & ~is_owner[:, None]
    r_idx, b_idx = np.nonzero(bitmap)
    log.add(k + owners[b_idx], k + r_idx, b_idx, FORWARD)
    sink_owner = net.session_adj[1:, owners]
    s_idx, sb_idx = np.nonzero(sink_owner)
    log.add(k + owners[sb_idx], s_idx + 1, sb_idx, FORWARD)

    delivered = np.zeros((k, B), dtype=bool)
    delivered[0] = True
    delivered[1:] = sink_owner
    lo, hi = B * p * (1 - eps), B * p * (1 + eps)
    direct = sink_owner.sum(axis=1)
    a2 = tuple(int(s) + 1 for s in np.flatnonzero((direct < lo) | (direct > hi)))

    a3: list[int] = []
    m: list[int] = []
    causes: dict[int, str] = {}
    for sink in range(1, k):
        helpers = np.flatnonzero(net.session_adj[sink] & ~is_owner)
        if helpers.size < beta:
            a3.append(sink)
        missing = np.flatnonzero(~delivered[sink])
        if missing.size == 0:
            continue
        problem = _pull_rows_cols(missing, delivered[sink], helpers, beta, restricted)
        if problem is None:
            if helpers.size >= beta:
                a3.append(sink)
            causes[sink] = "A3"
            continue
        cols, rows = problem
        match = _match(bitmap, rows, cols)
        got = match[: missing.size]
        ok = got >= 0
        if not (np.all(match >= 0) if restricted else np.all(ok)):
            m.append(sink)
            causes[sink] = "M"
        relays, bits = rows[got[ok]], missing[ok]
        log.add(k + relays, sink, bits, PULL)
        delivered[sink, bits] = True
    return FlowReport(
        "pushpull", k, net.n, p, eps, B, beta, restricted, (k + owners).astype(np.int64), False,
        a2, tuple(sorted(set(a3))), tuple(m), tuple(sorted(causes)), delivered, *log.arrays(), causes,
    )


def audit_flow(report: FlowReport, net: RelayNetwork) -> list[str]:
    """Replay a flow report's usage log against its network; returns problems found."""
    if (report.k, report.n) != (net.k, net.n):
        return [f"report is for k={report.k}, n={report.n} but the network has k={net.k}, n={net.n}"]
    g = net.to_capgraph()
    problems = capacity_problems(g, report.usage_tail, report.usage_head)
    hold, replay = replay_holdings(
        g.n, 0, report.B, report.usage_tail, report.usage_head, report.usage_bit, report.usage_phase,
        (PUSH, FORWARD, PULL),
    )
    problems += replay
    if hold[: report.k].shape != report.delivered.shape or not np.array_equal(hold[: report.k], report.delivered):
        problems.append("replaying the usage log does not reproduce the sinks' delivered sets")
    replay_success = (not report.a1) and bool(np.all(hold[1: report.k]))
    if replay_success != report.success:
        problems.append("success flag disagrees with the replayed deliveries")
    # pull 1 never goes through a relay; pull 2 never repeats a bit a sink already had
    sink_heads = report.usage_head < report.k
    relay_to_sink = sink_heads & (report.usage_phase == PULL)
    if np.any(np.isin(report.usage_tail[sink_heads & (report.usage_phase == FORWARD)], report.owners, invert=True)):
        problems.append("a direct pull came from a vertex that is not an owner")
    pulled = report.usage_head[relay_to_sink].astype(np.int64) * max(report.B, 1) + report.usage_bit[relay_to_sink]
    direct = sink_heads & (report.usage_phase == FORWARD)
    direct_codes = report.usage_head[direct].astype(np.int64) * max(report.B, 1) + report.usage_bit[direct]
    if np.unique(pulled).size != pulled.size or np.intersect1d(pulled, direct_codes).size:
        problems.append("a sink pulled the same bit twice")
    return problems


def verify_flow(report: FlowReport, net: RelayNetwork) -> bool:
    return not audit_flow(report, net)


@dataclass(eq=False)
class MulticastReport:
    n: int
    k: int
    p: float
    eps: float
    session: AllcastReport | None
    relay: FlowReport | None

    @property
    def alpha(self) -> float:
        return self.k / self.n

    @property
    def session_bits(self) -> int:
        return 0 if self.session is None else self.session.common_bits

    @property
    def relay_bits(self) -> int:
        return 0 if self.relay is None else self.relay.common_bits

    @property
    def total(self) -> int:
        return self.session_bits + self.relay_bits

    @property
    def normalized_rate(self) -> float:
        return self.total / self.n

    @property
    def target(self) -> float:
        """Rate the composition is built to beat: ``(1 - alpha/2) p (1 - 2 eps)``."""
        return (1 - self.alpha / 2) * self.p * (1 - 2 * self.eps)

    @property
    def success(self) -> bool:
        return all(r is None or r.success for r in (self.session, self.relay))

    def to_dict(self, include_usage: bool = False) -> dict:
        return {
            "n": self.n,
            "k": self.k,
            "alpha": self.alpha,
            "p": self.p,
            "eps": self.eps,
            "session_bits": self.session_bits,
            "relay_bits": self.relay_bits,
            "total": self.total,
            "normalized_rate": self.normalized_rate,
            "target": self.target,
            "success": self.success,
            "session": None if self.session is None else self.session.to_dict(include_usage),
            "relay": None if self.relay is None else self.relay.to_dict(include_usage),
        }


def run_multicast(n: int, k: int, p: float, eps: float, seed: int, restricted: bool = False) -> MulticastReport:
    """Serve a session of the first ``k`` vertices of one ``G(n, p)``.

    Allcast runs on the session clique (skipped when its bit budget is 0, e.g.
    ``k = 2``); the push-pull flow runs on the relay network left after the
    session-internal links are removed (skipped when ``k = n``). The two parts
    use disjoint edge sets, so their rates add.
    """
    if not 2 <= k <= n:
        raise ValueError(f"session size k must lie in [2, n={n}], got {k}")
    g = gen_gnp(n, p, derive_seed(seed, "graph"))
    session = None
    if allcast_bit_budget(k, p, eps) >= 1:
        session = run_allcast(g.induced(k), 0, eps, derive_seed(seed, "allcast"), p, restricted=restricted)
    relay = None
    if k < n and flow_bit_budget(n - k, p, eps) >= 1:
        relay = run_maxflow_pushpull_multi(RelayNetwork.from_capgraph(g, k), eps, p, restricted=restricted)
    return MulticastReport(n, k, p, eps, session, relay)


def multicast_overlap(report: MulticastReport) -> set[tuple[int, int]]:
    """Edges used by both sub-schemes; empty when the composition is sound."""
    if report.session is None or report.relay is None:
        return set()
    codes_s, _ = edge_loads(report.n, report.session.usage_tail, report.session.usage_head)
    codes_r, _ = edge_loads(report.n, report.relay.usage_tail, report.relay.usage_head)
    both = np.intersect1d(codes_s, codes_r)
    return {(int(c) // report.n, int(c) % report.n) for c in both}
