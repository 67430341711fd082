"""Bipartite matching, Hall-violator certificates and the no-matching bounds.

``max_matching`` scans left vertices in ascending order and explores
neighbours in ascending order, so the returned matching is a deterministic
function of the graph.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.special import logsumexp
from scipy.stats import binomtest

from .graph_models import BipartiteGraph, gen_bipartite
from .seeding import derive_seed

__all__ = [
    "Matching",
    "HallCertificate",
    "max_matching",
    "hall_violator",
    "check_certificate",
    "epsilon_bound",
    "gamma_bound",
    "wilson_interval",
    "FrequencyReport",
    "matching_failure_frequency",
    "beta_sequence",
]


@dataclass(frozen=True)
class Matching:
    pairs: tuple[tuple[int, int], ...]
    complete: bool

    def __len__(self) -> int:
        return len(self.pairs)


@dataclass(frozen=True)
class HallCertificate:
    side: str  # "left" or "right"
    A: frozenset
    neighborhood: frozenset


def _augmenting_matching(adj: list[list[int]], right_size: int) -> list[int]:
    """Return ``match_right`` (-1 where unmatched) using Kuhn's augmenting paths."""
    match_left = [-1] * len(adj)
    match_right = [-1] * right_size
    for root in range(len(adj)):
        # cheap pass first: a free neighbour closes the path immediately
        for v in adj[root]:
            if match_right[v] < 0:
                match_left[root] = v
                match_right[v] = root
                break
        if match_left[root] >= 0:
            continue
        seen = [False] * right_size
        parent_right: dict[int, int] = {}  # right vertex -> left vertex that reached it
        stack = [(root, 0)]
        found = -1
        while stack and found < 0:
            u, pos = stack[-1]
            nbrs = adj[u]
            while pos < len(nbrs) and seen[nbrs[pos]]:
                pos += 1
            if pos == len(nbrs):
                stack.pop()
                continue
            v = nbrs[pos]
            stack[-1] = (u, pos + 1)
            seen[v] = True
            parent_right[v] = u
            if match_right[v] < 0:
                found = v
            else:
                stack.append((match_right[v], 0))
        if found < 0:
            continue
        v = found
        while True:
            u = parent_right[v]
            prev = match_left[u]
            match_left[u] = v
            match_right[v] = u
            if u == root:
                break
            v = prev
    return match_right


def max_matching(g: BipartiteGraph) -> Matching:
    match_right = _augmenting_matching(g.left_adjacency, g.right_size)
    pairs = tuple(sorted((u, v) for v, u in enumerate(match_right) if u >= 0))
    return Matching(pairs, complete=len(pairs) == g.left_size)


def _alternating_tree(adj: list[list[int]], match_other: dict[int, int], root: int) -> tuple[set[int], set[int]]:
    """Vertices reachable from ``root`` by alternating paths.

    ``adj`` maps this side to the other side, ``match_other`` maps matched
    other-side vertices back to their partner. Returns (this side, other side).
    """
    mine, theirs = {root}, set()
    frontier = [root]
    while frontier:
        u = frontier.pop()
        for v in adj[u]:
            if v in theirs:
                continue
            theirs.add(v)
            w = match_other.get(v)
            if w is not None and w not in mine:
                mine.add(w)
                frontier.append(w)
    return mine, theirs


def _violator_inside(adj: list[list[int]], candidates: set[int]) -> tuple[set[int], set[int]]:
    """Shrink a deficient set to one with exactly ``|A| - 1`` neighbours, connected."""
    cand = sorted(candidates)
    sub_adj = [adj[u] for u in cand]
    other = sorted({v for row in sub_adj for v in row})
    index = {v: i for i, v in enumerate(other)}
    local = [[index[v] for v in row] for row in sub_adj]
    match_right = _augmenting_matching(local, len(other))
    matched_left = {u for u in match_right if u >= 0}
    root = next(i for i in range(len(cand)) if i not in matched_left)
    match_other = {v: u for v, u in enumerate(match_right) if u >= 0}
    mine, theirs = _alternating_tree(local, match_other, root)
    return {cand[i] for i in mine}, {other[j] for j in theirs}


def hall_violator(g: BipartiteGraph) -> HallCertificate | None:
    """A set ``A`` on one side with ``|N(A)| = |A| - 1``, ``A ∪ N(A)`` connected, ``2 <= |A| <= (n+1)/2``.

    Only defined for square graphs without isolated vertices and without a
    complete matching; returns ``None`` otherwise. The left side is tried first.
    """
    n = g.left_size
    if n != g.right_size or n == 0 or g.has_isolated_vertex():
        return None
    if max_matching(g).complete:
        return None
    left_adj, right_adj = g.left_adjacency, g.right_adjacency
    A, gamma = _violator_inside(left_adj, set(range(n)))
    if 2 * len(A) <= n + 1:
        return HallCertificate("left", frozenset(A), frozenset(gamma))
    # No edges run from A to the right vertices outside N(A), so those form a
    # deficient set of size n + 1 - |A| < (n + 1) / 2 on the right.
    rest = set(range(n)) - gamma
    B, gamma_b = _violator_inside(right_adj, rest)
    return HallCertificate("right", frozenset(B), frozenset(gamma_b))


def check_certificate(g: BipartiteGraph, cert: HallCertificate) -> list[str]:
    """Evaluate the three certificate conditions directly; returns the violated ones."""
    n = g.left_size
    adj = g.left_adjacency if cert.side == "left" else g.right_adjacency
    problems = []
    gamma = {v for u in cert.A for v in adj[u]}
    if gamma != set(cert.neighborhood):
        problems.append("neighborhood field does not equal N(A)")
    if len(gamma) != len(cert.A) - 1:
        problems.append(f"|N(A)| = {len(gamma)} but |A| - 1 = {len(cert.A) - 1}")
    if not (2 <= len(cert.A) and 2 * len(cert.A) <= n + 1):
        problems.append(f"|A| = {len(cert.A)} outside [2, (n+1)/2] for n={n}")
    # connectivity of the subgraph spanned by A ∪ N(A)
    if cert.A:
        start = next(iter(cert.A))
        seen_a, seen_b, frontier = {start}, set(), [("a", start)]
        other_adj = g.right_adjacency if cert.side == "left" else g.left_adjacency
        while frontier:
            kind, x = frontier.pop()
            if kind == "a":
                for y in adj[x]:
                    if y in gamma and y not in seen_b:
                        seen_b.add(y)
                        frontier.append(("b", y))
            else:
                for y in other_adj[x]:
                    if y in cert.A and y not in seen_a:
                        seen_a.add(y)
                        frontier.append(("a", y))
        if seen_a != set(cert.A) or seen_b != gamma:
            problems.append("A ∪ N(A) is not connected")
    return problems


def epsilon_bound(n: int, p: float) -> float:
    """``min(1, 2 * sum_{a=2}^{floor((n+1)/2)} n^(2a-1) (1-p)^(an) (1-p)^(-a^2))``, in log space."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == 1.0:
        return 0.0
    if p == 0.0:
        return 1.0
    a = np.arange(2, (n + 1) // 2 + 1, dtype=np.float64)
    if a.size == 0:
        return 0.0
    log_terms = math.log(2.0) + (2 * a - 1) * math.log(n) + (a * n - a * a) * math.log1p(-p)
    log_total = float(logsumexp(log_terms))
    return 1.0 if log_total >= 0 else math.exp(log_total)


def gamma_bound(n: int, p: float) -> float:
    """``min(1, 2n(1-p)^n + epsilon_bound(n, p))``."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"p must lie in [0, 1], got {p}")
    if p == 1.0:
        return 0.0
    isolated = 2.0 * n * math.exp(n * math.log1p(-p)) if p < 1 else 0.0
    return min(1.0, isolated + epsilon_bound(n, p))


def wilson_interval(successes: int, trials: int) -> tuple[float, float]:
    ci = binomtest(int(successes), int(trials)).proportion_ci(confidence_level=0.95, method="wilson")
    return max(0.0, float(ci.low)), min(1.0, float(ci.high))


@dataclass(frozen=True)
class FrequencyReport:
    n: int
    p: float
    trials: int
    failures: int
    frequency: float
    wilson_low: float
    wilson_high: float
    gamma_bound: float

    @property
    def interval(self) -> tuple[float, float]:
        return self.wilson_low, self.wilson_high

    def to_dict(self) -> dict:
        return {
            "n": self.n,
            "p": self.p,
            "trials": self.trials,
            "failures": self.failures,
            "frequency": self.frequency,
            "wilson_low": self.wilson_low,
            "wilson_high": self.wilson_high,
            "gamma_bound": self.gamma_bound,
        }


def matching_failure_frequency(n: int, p: float, trials: int, seed: int) -> FrequencyReport:
    """Fraction of ``G(n, n, p)`` samples without a complete matching."""
    if trials < 1:
        raise ValueError(f"trials must be at least 1, got {trials}")
    failures = 0
    for j in range(trials):
        g = gen_bipartite(n, n, p, derive_seed(seed, "matchprob", j))
        if not max_matching(g).complete:
            failures += 1
    low, high = wilson_interval(failures, trials)
    bound = gamma_bound(n, p) if n >= 2 else 1.0
    return FrequencyReport(n, p, trials, failures, failures / trials, low, high, bound)


def beta_sequence(n: int, c: float) -> int:
    if not 0 < c < 1:
        raise ValueError(f"c must lie in (0, 1), got {c}")
    return math.floor(c * n)
