"""Random network models and capacity quantization.

All generators are pure functions of their parameters and a nonnegative
integer seed. Pair draws are consumed in lexicographic order from one uniform
stream per structure, so a graph is reproducible bit for bit and
``gen_gnp(n, p, s)`` coincides edge for edge with
``gen_complete_capacitated(n, Bernoulli(p), s)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Union

import numpy as np

from .seeding import derive_rng

__all__ = [
    "Bernoulli",
    "Uniform",
    "Exponential",
    "Discrete",
    "CapacityDistribution",
    "distribution_from_dict",
    "CapGraph",
    "BipartiteGraph",
    "RelayNetwork",
    "gen_complete_capacitated",
    "gen_gnp",
    "gen_bipartite",
    "gen_relay_network",
    "quantize_layers",
    "quantization_sum",
    "choose_quantization",
    "load_json",
]


# ---------------------------------------------------------------------------
# Capacity distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Bernoulli:
    p: float

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0:
            raise ValueError(f"Bernoulli p must lie in [0, 1], got {self.p}")

    @property
    def mean(self) -> float:
        return float(self.p)

    @property
    def max_support(self) -> float:
        return 1.0

    def cdf(self, x: float) -> float:
        if x < 0:
            return 0.0
        return 1.0 - self.p if x < 1 else 1.0

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return (u < self.p).astype(np.float64)

    def to_dict(self) -> dict:
        return {"kind": "bernoulli", "p": self.p}


@dataclass(frozen=True)
class Uniform:
    a: float
    b: float

    def __post_init__(self):
        if not (0.0 <= self.a <= self.b) or not math.isfinite(self.b):
            raise ValueError(f"Uniform needs 0 <= a <= b < inf, got a={self.a}, b={self.b}")

    @property
    def mean(self) -> float:
        return 0.5 * (self.a + self.b)

    @property
    def max_support(self) -> float:
        return float(self.b)

    def cdf(self, x: float) -> float:
        if x < self.a:
            return 0.0
        if x >= self.b:
            return 1.0
        return (x - self.a) / (self.b - self.a)

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return self.a + (self.b - self.a) * u

    def to_dict(self) -> dict:
        return {"kind": "uniform", "a": self.a, "b": self.b}


@dataclass(frozen=True)
class Exponential:
    mean_value: float

    def __post_init__(self):
        if not (self.mean_value > 0 and math.isfinite(self.mean_value)):
            raise ValueError(f"Exponential mean must be positive and finite, got {self.mean_value}")

    @property
    def mean(self) -> float:
        return float(self.mean_value)

    @property
    def max_support(self) -> float:
        return math.inf

    def cdf(self, x: float) -> float:
        return 0.0 if x <= 0 else -math.expm1(-x / self.mean_value)

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        return -self.mean_value * np.log1p(-u)

    def to_dict(self) -> dict:
        return {"kind": "exponential", "mean": self.mean_value}


@dataclass(frozen=True)
class Discrete:
    values: tuple[float, ...]
    probabilities: tuple[float, ...]

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        probs = tuple(float(q) for q in self.probabilities)
        if not vals or len(vals) != len(probs):
            raise ValueError("Discrete needs equally many values and probabilities (at least one)")
        if any(v < 0 or not math.isfinite(v) for v in vals):
            raise ValueError("Discrete values must be finite and nonnegative")
        if any(q < 0 for q in probs) or abs(sum(probs) - 1.0) > 1e-12:
            raise ValueError("Discrete probabilities must be nonnegative and sum to 1")
        order = sorted(range(len(vals)), key=vals.__getitem__)
        object.__setattr__(self, "values", tuple(vals[i] for i in order))
        object.__setattr__(self, "probabilities", tuple(probs[i] for i in order))

    @property
    def mean(self) -> float:
        return float(sum(v * q for v, q in zip(self.values, self.probabilities)))

    @property
    def max_support(self) -> float:
        return max(v for v, q in zip(self.values, self.probabilities) if q > 0)

    def cdf(self, x: float) -> float:
        return min(1.0, sum(q for v, q in zip(self.values, self.probabilities) if v <= x))

    def from_uniform(self, u: np.ndarray) -> np.ndarray:
        cum = np.cumsum(self.probabilities)
        cum[-1] = 1.0
        idx = np.searchsorted(cum, u, side="right")
        return np.asarray(self.values, dtype=np.float64)[np.minimum(idx, len(self.values) - 1)]

    def to_dict(self) -> dict:
        return {"kind": "discrete", "values": list(self.values), "probabilities": list(self.probabilities)}


CapacityDistribution = Union[Bernoulli, Uniform, Exponential, Discrete]


def distribution_from_dict(obj: dict) -> CapacityDistribution:
    kind = str(obj.get("kind", "")).lower()
    try:
        if kind == "bernoulli":
            return Bernoulli(float(obj["p"]))
        if kind == "uniform":
            return Uniform(float(obj.get("a", 0.0)), float(obj.get("b", 1.0)))
        if kind == "exponential":
            return Exponential(float(obj["mean"]))
        if kind == "discrete":
            return Discrete(tuple(obj["values"]), tuple(obj["probabilities"]))
    except KeyError as exc:
        raise ValueError(f"distribution {kind!r} is missing field {exc.args[0]!r}") from None
    raise ValueError(f"unknown distribution kind {obj.get('kind')!r}")


# ---------------------------------------------------------------------------
# Graph containers
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CapGraph:
    """Undirected graph on vertices ``0..n-1`` with positive edge capacities.

    Edges are stored as three parallel arrays sorted lexicographically by
    ``(src, dst)`` with ``src < dst``. A pair that is not stored has capacity 0.
    """

    n: int
    src: np.ndarray
    dst: np.ndarray
    cap: np.ndarray

    @classmethod
    def from_edges(cls, n: int, edges) -> "CapGraph":
        """Build from an iterable of ``(i, j, capacity)`` or a ``{(i, j): c}`` mapping."""
        if isinstance(edges, dict):
            edges = [(i, j, c) for (i, j), c in edges.items()]
        merged: dict[tuple[int, int], float] = {}
        for i, j, c in edges:
            i, j, c = int(i), int(j), float(c)
            if i == j:
                raise ValueError(f"self-loop at vertex {i}")
            if not (0 <= i < n and 0 <= j < n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={n}")
            if c < 0 or not math.isfinite(c):
                raise ValueError(f"capacity on ({i}, {j}) must be finite and nonnegative, got {c}")
            key = (min(i, j), max(i, j))
            if key in merged:
                raise ValueError(f"duplicate edge {key}")
            merged[key] = c
        keys = sorted(k for k, c in merged.items() if c > 0)
        src = np.array([k[0] for k in keys], dtype=np.int64)
        dst = np.array([k[1] for k in keys], dtype=np.int64)
        cap = np.array([merged[k] for k in keys], dtype=np.float64)
        return cls(int(n), src, dst, cap)

    @classmethod
    def from_arrays(cls, n: int, src, dst, cap) -> "CapGraph":
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        cap = np.asarray(cap, dtype=np.float64)
        keep = cap > 0
        src, dst, cap = src[keep], dst[keep], cap[keep]
        lo, hi = np.minimum(src, dst), np.maximum(src, dst)
        if np.any(lo == hi):
            raise ValueError("self-loops are not allowed")
        order = np.lexsort((hi, lo))
        return cls(int(n), lo[order], hi[order], cap[order])

    @classmethod
    def complete(cls, n: int, capacity: float = 1.0) -> "CapGraph":
        iu, ju = np.triu_indices(n, k=1)
        return cls(int(n), iu.astype(np.int64), ju.astype(np.int64), np.full(iu.size, float(capacity)))

    @property
    def num_edges(self) -> int:
        return int(self.src.size)

    @cached_property
    def keys(self) -> np.ndarray:
        """Sorted int64 codes ``src * n + dst``, one per stored edge."""
        return self.src.astype(np.int64) * self.n + self.dst.astype(np.int64)

    @property
    def capacities(self) -> dict[tuple[int, int], float]:
        return {(int(i), int(j)): float(c) for i, j, c in zip(self.src, self.dst, self.cap)}

    def capacity(self, i: int, j: int) -> float:
        if i == j:
            return 0.0
        a, b = (i, j) if i < j else (j, i)
        code = a * self.n + b
        pos = int(np.searchsorted(self.keys, code))
        if pos < self.keys.size and self.keys[pos] == code:
            return float(self.cap[pos])
        return 0.0

    def edges(self) -> Iterator[tuple[int, int, float]]:
        for i, j, c in zip(self.src.tolist(), self.dst.tolist(), self.cap.tolist()):
            yield i, j, c

    def degrees(self) -> np.ndarray:
        return np.bincount(self.src, minlength=self.n) + np.bincount(self.dst, minlength=self.n)

    def neighbors(self, v: int) -> np.ndarray:
        return np.sort(np.concatenate([self.dst[self.src == v], self.src[self.dst == v]]))

    @property
    def total_capacity(self) -> float:
        return float(self.cap.sum())

    def is_binary(self) -> bool:
        return bool(np.all(self.cap == 1.0))

    def induced(self, k: int) -> "CapGraph":
        """Subgraph on vertices ``0..k-1``."""
        keep = self.dst < k
        return CapGraph(int(k), self.src[keep], self.dst[keep], self.cap[keep])

    def is_connected(self) -> bool:
        if self.n <= 1:
            return True
        from scipy.sparse import coo_matrix
        from scipy.sparse.csgraph import connected_components

        adj = coo_matrix((np.ones(self.num_edges), (self.src, self.dst)), shape=(self.n, self.n))
        count, _ = connected_components(adj, directed=False)
        return count == 1

    def __eq__(self, other) -> bool:
        if not isinstance(other, CapGraph):
            return NotImplemented
        return (
            self.n == other.n
            and np.array_equal(self.src, other.src)
            and np.array_equal(self.dst, other.dst)
            and np.array_equal(self.cap, other.cap)
        )

    __hash__ = None  # type: ignore[assignment]

    def to_dict(self) -> dict:
        edges = []
        for i, j, c in self.edges():
            edges.append([i, j, int(c) if c.is_integer() else c])
        return {"n": self.n, "edges": edges}

    @classmethod
    def from_dict(cls, obj: dict) -> "CapGraph":
        if "n" not in obj or "edges" not in obj:
            raise ValueError("graph JSON needs fields 'n' and 'edges'")
        n = obj["n"]
        if not isinstance(n, int) or n < 1:
            raise ValueError(f"graph field 'n' must be a positive integer, got {n!r}")
        rows = obj["edges"]
        for row in rows:
            if not isinstance(row, (list, tuple)) or len(row) != 3:
                raise ValueError(f"graph field 'edges' entries must be [i, j, capacity], got {row!r}")
            if row[0] >= row[1]:
                raise ValueError(f"graph field 'edges' needs i < j, got {row!r}")
        return cls.from_edges(n, rows)


@dataclass(frozen=True)
class BipartiteGraph:
    left_size: int
    right_size: int
    edges: frozenset = field(default_factory=frozenset)

    def __post_init__(self):
        if self.left_size < 0 or self.right_size < 0:
            raise ValueError("side sizes must be nonnegative")
        edges = frozenset((int(u), int(v)) for u, v in self.edges)
        for u, v in edges:
            if not (0 <= u < self.left_size and 0 <= v < self.right_size):
                raise ValueError(f"bipartite edge ({u}, {v}) out of range")
        object.__setattr__(self, "edges", edges)

    @cached_property
    def left_adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.left_size)]
        for u, v in self.edges:
            adj[u].append(v)
        for row in adj:
            row.sort()
        return adj

    @cached_property
    def right_adjacency(self) -> list[list[int]]:
        adj: list[list[int]] = [[] for _ in range(self.right_size)]
        for u, v in self.edges:
            adj[v].append(u)
        for row in adj:
            row.sort()
        return adj

    def has_isolated_vertex(self) -> bool:
        return any(not row for row in self.left_adjacency) or any(not row for row in self.right_adjacency)

    def to_dict(self) -> dict:
        return {"left": self.left_size, "right": self.right_size, "edges": sorted([list(e) for e in self.edges])}

    @classmethod
    def from_dict(cls, obj: dict) -> "BipartiteGraph":
        try:
            return cls(int(obj["left"]), int(obj["right"]), frozenset(tuple(e) for e in obj["edges"]))
        except KeyError as exc:
            raise ValueError(f"bipartite JSON is missing field {exc.args[0]!r}") from None


@dataclass(frozen=True, eq=False)
class RelayNetwork:
    """One source, ``k - 1`` sinks and ``n`` relays with no session-internal links.

    Vertex ids: 0 is the source, ``1..k-1`` are sinks, ``k..k+n-1`` are relays.
    ``session_adj[s, r]`` says session node ``s`` is linked to relay ``r``
    (relay-local index); ``relay_adj`` is the symmetric relay-relay adjacency.
    """

    k: int
    n: int
    session_adj: np.ndarray
    relay_adj: np.ndarray

    def __post_init__(self):
        if self.session_adj.shape != (self.k, self.n) or self.relay_adj.shape != (self.n, self.n):
            raise ValueError("adjacency shapes do not match (k, n)")
        if np.any(np.diag(self.relay_adj)) or not np.array_equal(self.relay_adj, self.relay_adj.T):
            raise ValueError("relay adjacency must be symmetric without self-loops")

    @property
    def session_size(self) -> int:
        return self.k

    @property
    def relay_count(self) -> int:
        return self.n

    @property
    def source_relay_edges(self) -> set[tuple[int, int]]:
        return {(0, self.k + int(r)) for r in np.flatnonzero(self.session_adj[0])}

    @property
    def sink_relay_edges(self) -> set[tuple[int, int]]:
        s, r = np.nonzero(self.session_adj[1:])
        return {(int(a) + 1, self.k + int(b)) for a, b in zip(s, r)}

    @property
    def relay_relay_edges(self) -> set[tuple[int, int]]:
        i, j = np.nonzero(np.triu(self.relay_adj, k=1))
        return {(self.k + int(a), self.k + int(b)) for a, b in zip(i, j)}

    def to_capgraph(self) -> CapGraph:
        s, r = np.nonzero(self.session_adj)
        i, j = np.nonzero(np.triu(self.relay_adj, k=1))
        src = np.concatenate([s, i + self.k])
        dst = np.concatenate([r + self.k, j + self.k])
        return CapGraph.from_arrays(self.k + self.n, src, dst, np.ones(src.size))

    @classmethod
    def from_capgraph(cls, g: CapGraph, k: int) -> "RelayNetwork":
        """Split a graph whose first ``k`` vertices are the session; session-internal links are dropped."""
        if not 2 <= k <= g.n:
            raise ValueError(f"session size k must lie in [2, {g.n}], got {k}")
        if not g.is_binary():
            raise ValueError("relay networks carry unit capacities only")
        n = g.n - k
        session_adj = np.zeros((k, n), dtype=bool)
        relay_adj = np.zeros((n, n), dtype=bool)
        cross = (g.src < k) & (g.dst >= k)
        session_adj[g.src[cross], g.dst[cross] - k] = True
        inner = g.src >= k
        relay_adj[g.src[inner] - k, g.dst[inner] - k] = True
        relay_adj |= relay_adj.T
        return cls(k, n, session_adj, relay_adj)

    def to_dict(self) -> dict:
        return {
            "k": self.k,
            "n": self.n,
            "source_relay": sorted(r for _, r in self.source_relay_edges),
            "sink_relay": sorted([list(e) for e in self.sink_relay_edges]),
            "relay_relay": sorted([list(e) for e in self.relay_relay_edges]),
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "RelayNetwork":
        try:
            k, n = int(obj["k"]), int(obj["n"])
            session_adj = np.zeros((k, n), dtype=bool)
            relay_adj = np.zeros((n, n), dtype=bool)
            for r in obj["source_relay"]:
                session_adj[0, int(r) - k] = True
            for s, r in obj["sink_relay"]:
                if not 1 <= s < k:
                    raise ValueError(f"relay JSON field 'sink_relay' has bad sink id {s}")
                session_adj[s, r - k] = True
            for i, j in obj["relay_relay"]:
                relay_adj[i - k, j - k] = relay_adj[j - k, i - k] = True
        except KeyError as exc:
            raise ValueError(f"relay JSON is missing field {exc.args[0]!r}") from None
        except IndexError:
            raise ValueError("relay JSON has a vertex id out of range") from None
        return cls(k, n, session_adj, relay_adj)


def load_json(obj: dict) -> Union[CapGraph, BipartiteGraph, RelayNetwork]:
    """Dispatch an interchange object to the matching container."""
    if "relay_relay" in obj:
        return RelayNetwork.from_dict(obj)
    if "left" in obj:
        return BipartiteGraph.from_dict(obj)
    return CapGraph.from_dict(obj)


# ---------------------------------------------------------------------------
# Generators
# ---------------------------------------------------------------------------


def _check_probability(p: float, name: str = "p") -> None:
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"{name} must lie in [0, 1], got {p}")


def _pair_rows(rng: np.random.Generator, n: int):
    """Yield ``(i, u)`` with one uniform per pair ``(i, j)``, ``j > i``, in lexicographic order."""
    for i in range(n - 1):
        yield i, rng.random(n - 1 - i)


def gen_complete_capacitated(n: int, dist: CapacityDistribution, seed: int) -> CapGraph:
    """Complete graph with iid capacities drawn from ``dist``."""
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    rng = derive_rng(seed, "pairs")
    srcs, dsts, caps = [], [], []
    for i, u in _pair_rows(rng, n):
        c = dist.from_uniform(u)
        js = np.flatnonzero(c > 0)
        srcs.append(np.full(js.size, i, dtype=np.int64))
        dsts.append(js.astype(np.int64) + i + 1)
        caps.append(c[js])
    return CapGraph(n, np.concatenate(srcs), np.concatenate(dsts), np.concatenate(caps).astype(np.float64))


def gen_gnp(n: int, p: float, seed: int) -> CapGraph:
    _check_probability(p)
    if n < 2:
        raise ValueError(f"n must be at least 2, got {n}")
    # Same stream as gen_complete_capacitated with Bernoulli(p), without the float detour.
    rng = derive_rng(seed, "pairs")
    srcs, dsts = [], []
    for i, u in _pair_rows(rng, n):
        js = np.flatnonzero(u < p)
        srcs.append(np.full(js.size, i, dtype=np.int64))
        dsts.append(js.astype(np.int64) + i + 1)
    src = np.concatenate(srcs)
    return CapGraph(n, src, np.concatenate(dsts), np.ones(src.size))


def gen_bipartite(left: int, right: int, p: float, seed: int) -> BipartiteGraph:
    if left < 1 or right < 1:
        raise ValueError("both sides need at least one vertex")
    _check_probability(p)
    u = derive_rng(seed, "bipartite").random((left, right))
    rows, cols = np.nonzero(u < p)
    return BipartiteGraph(left, right, frozenset(zip(rows.tolist(), cols.tolist())))


def gen_relay_network(k: int, n: int, p: float, seed: int) -> RelayNetwork:
    if k < 2:
        raise ValueError(f"session size k must be at least 2, got {k}")
    if n < 1:
        raise ValueError(f"relay count n must be at least 1, got {n}; the session would be disconnected")
    _check_probability(p)
    rng = derive_rng(seed, "relay")
    session_adj = rng.random((k, n)) < p
    relay_adj = np.zeros((n, n), dtype=bool)
    for i, u in _pair_rows(rng, n):
        relay_adj[i, i + 1:] = u < p
    relay_adj |= relay_adj.T
    return RelayNetwork(k, n, session_adj, relay_adj)


# ---------------------------------------------------------------------------
# Quantization into layered binary graphs
# ---------------------------------------------------------------------------


def quantize_layers(g: CapGraph, delta: float, M: int) -> list[CapGraph]:
    """Layer ``k`` (1-indexed) keeps edge ``e`` with unit capacity iff ``C_e > k * delta``."""
    if delta <= 0:
        raise ValueError(f"delta must be positive, got {delta}")
    if M < 1:
        raise ValueError(f"M must be at least 1, got {M}")
    layers = []
    for k in range(1, M + 1):
        keep = g.cap > k * delta
        layers.append(CapGraph(g.n, g.src[keep], g.dst[keep], np.ones(int(keep.sum()))))
    return layers


def quantization_sum(dist: CapacityDistribution, delta: float, M: int) -> float:
    """``sum_{k=1..M} delta * (1 - F(k * delta))``."""
    return float(sum(delta * (1.0 - dist.cdf(k * delta)) for k in range(1, M + 1)))


def choose_quantization(dist: CapacityDistribution, eps: float) -> tuple[float, int]:
    """Find ``(delta, M)`` whose layer sum reaches ``E[C] * (1 - eps)``.

    Starting from ``delta`` equal to the largest support point (or the mean when
    the support is unbounded), ``delta`` is halved until some ``M`` clears the
    threshold; the smallest such ``M`` is returned.
    """
    if not 0 < eps < 1:
        raise ValueError(f"eps must lie in (0, 1), got {eps}")
    mean = dist.mean
    if not mean > 0:
        raise ValueError("the capacity distribution has zero mean; nothing can be layered")
    target = mean * (1.0 - eps)
    top = dist.max_support
    if not math.isfinite(top):
        # tail mass beyond this point is below 1e-12 of the mean for the supported families
        top = mean * math.log(1e12)
    delta = dist.max_support if math.isfinite(dist.max_support) else mean
    for _ in range(64):
        total = 0.0
        for k in range(1, int(math.ceil(top / delta)) + 1):
            total += delta * (1.0 - dist.cdf(k * delta))
            if total >= target:
                return delta, k
        delta /= 2.0
    raise RuntimeError("quantization search did not converge")  # pragma: no cover


def dumps(obj) -> str:
    return json.dumps(obj.to_dict() if hasattr(obj, "to_dict") else obj, separators=(",", ":"))
