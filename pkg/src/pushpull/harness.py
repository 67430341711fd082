"""Monte Carlo driver: grids of seeded trials aggregated into convergence tables.

Each grid cell ``i`` runs trials ``j = 0..trials-1``; trial ``(i, j)`` draws all
of its randomness from ``derive_seed(root, kind, i, j)``, so any single trial
or cell can be re-run in isolation and reproduces its rows exactly.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import NamedTuple

from .allcast import layered_allcast, run_allcast, run_allcast_vanishing, vanishing_p
from .flow import run_maxflow, run_maxflow_pushpull_multi, run_multicast
from .graph_models import (
    CapacityDistribution,
    distribution_from_dict,
    gen_bipartite,
    gen_complete_capacitated,
    gen_gnp,
    gen_relay_network,
)
from .matching import gamma_bound, max_matching, wilson_interval
from .oracles import upper_bound_allcast, upper_bound_multicast
from .seeding import derive_seed

KINDS = (
    "allcast",
    "allcast_vanishing",
    "maxflow",
    "relay_multi",
    "multicast",
    "matching",
    "strength_sweep",
    "layered",
)
EVENTS = ("A1", "A2", "A3", "M")

CSV_HEADER = [
    "n", "k", "p", "eps", "trials", "success_freq", "wilson_low", "wilson_high",
    "mean_norm_rate", "theory_target", "a1", "a2", "a3", "m",
]


class PreconditionUnmet(NamedTuple):
    """Returned instead of a number when the tail bound's hypotheses fail."""

    reason: str


def raw_binomial_tail_bound(n: int, q: float, eps: float) -> float:
    """``exp(-n q eps^2 / 3) / sqrt(eps^2 n q)`` with no hypothesis checks."""
    x = eps * eps * n * q
    return math.exp(-x / 3) / math.sqrt(x)


def binomial_tail_bound(n: int, q: float, eps: float) -> float | PreconditionUnmet:
    """Bound on the chance a Binomial(n, q) count strays from ``nq`` by more than ``eps nq``.

    Valid only for ``0 < q < 1/2``, ``0 < eps < 1/12`` and ``eps n q (1-q) >= 12``;
    outside that range the function returns :class:`PreconditionUnmet`.
    """
    if not 0 < q < 0.5:
        return PreconditionUnmet(f"q={q} is not in (0, 1/2)")
    if not 0 < eps < 1 / 12:
        return PreconditionUnmet(f"eps={eps} is not in (0, 1/12)")
    if eps * n * q * (1 - q) < 12:
        return PreconditionUnmet(f"eps*n*q*(1-q) = {eps * n * q * (1 - q):.6g} is below 12")
    return raw_binomial_tail_bound(n, q, eps)


@dataclass
class ExperimentConfig:
    kind: str
    n: list[int]
    trials: int
    seed: int
    eps: float = 0.25
    p: float | None = None
    distribution: CapacityDistribution | None = None
    k: list[int] | None = None
    alpha: list[float] | None = None
    tau: float | None = None
    restricted: bool = False
    upper_bound: bool = False
    out: str | None = None

    def __post_init__(self):
        self.n = [int(v) for v in self.n]
        if self.k is not None:
            self.k = [int(v) for v in self.k]
        self.validate()

    def validate(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"config field 'kind' must be one of {', '.join(KINDS)}, got {self.kind!r}")
        if not self.n or any(v < 2 for v in self.n):
            raise ValueError("config field 'n' must be a nonempty list of sizes >= 2")
        if self.trials < 1:
            raise ValueError(f"config field 'trials' must be at least 1, got {self.trials}")
        if self.seed < 0:
            raise ValueError(f"config field 'seed' must be nonnegative, got {self.seed}")
        if not 0 < self.eps < 1:
            raise ValueError(f"config field 'eps' must lie in (0, 1), got {self.eps}")
        needs_p = self.kind in ("allcast", "maxflow", "relay_multi", "multicast", "matching")
        if needs_p and (self.p is None or not 0 < self.p <= 1):
            raise ValueError(f"config field 'p' must lie in (0, 1] for kind {self.kind!r}")
        if self.kind in ("strength_sweep", "layered") and self.distribution is None:
            raise ValueError(f"config field 'distribution' is required for kind {self.kind!r}")
        if self.kind == "allcast_vanishing" and (self.tau is None or self.tau <= 0):
            raise ValueError("config field 'tau' must be positive for kind 'allcast_vanishing'")
        if self.kind in ("relay_multi", "multicast"):
            if (self.k is None) == (self.alpha is None):
                raise ValueError(f"exactly one of config fields 'k' and 'alpha' is required for kind {self.kind!r}")
            if self.alpha is not None and any(not 0 < a <= 1 for a in self.alpha):
                raise ValueError("config field 'alpha' entries must lie in (0, 1]")
            for n in self.n:
                for k in self.session_sizes(n):
                    top = n if self.kind == "multicast" else None
                    if k < 2 or (top is not None and k > top):
                        raise ValueError(f"config field 'k' gives k={k} which is out of range for n={n}")

    def session_sizes(self, n: int) -> list[int]:
        if self.k is not None:
            return list(self.k)
        if self.alpha is not None:
            return [max(2, math.ceil(a * n)) for a in self.alpha]
        return [None]

    def cells(self) -> list[tuple[int, int | None]]:
        out = []
        for n in self.n:
            for k in self.session_sizes(n):
                out.append((n, k))
        return out

    def to_dict(self) -> dict:
        d = asdict(self)
        d["distribution"] = None if self.distribution is None else self.distribution.to_dict()
        return {key: v for key, v in d.items() if v is not None}

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"config has unknown field {sorted(unknown)[0]!r}")
        for required in ("kind", "n", "trials", "seed"):
            if required not in obj:
                raise ValueError(f"config is missing field {required!r}")
        data = dict(obj)
        if isinstance(data["n"], int):
            data["n"] = [data["n"]]
        if isinstance(data.get("k"), int):
            data["k"] = [data["k"]]
        if isinstance(data.get("alpha"), (int, float)):
            data["alpha"] = [data["alpha"]]
        if data.get("distribution") is not None:
            data["distribution"] = distribution_from_dict(data["distribution"])
        return cls(**data)


@dataclass
class TrialRecord:
    index: int
    seed: int
    success: bool
    bits: float  # delivered bits, or rate units for capacitated kinds
    denominator: float
    events: dict[str, int]
    primary: str | None
    upper_bound: float | None = None

    @property
    def rate(self) -> float:
        return self.bits / self.denominator


@dataclass
class CellStats:
    kind: str
    n: int
    k: int | None
    p: float | None
    eps: float
    trials: int
    successes: int
    wilson_low: float
    wilson_high: float
    mean_norm_rate: float
    theory_target: float
    counts: dict[str, int]
    upper_bound: float | None = None
    records: list[TrialRecord] = field(default_factory=list)

    @property
    def frequency(self) -> float:
        return self.successes / self.trials

    @property
    def mean_rate_success(self) -> float | None:
        rates = [r.rate for r in self.records if r.success]
        return sum(rates) / len(rates) if rates else None

    def to_dict(self, include_records: bool = False) -> dict:
        out = {
            "kind": self.kind, "n": self.n, "k": self.k, "p": self.p, "eps": self.eps,
            "trials": self.trials, "successes": self.successes, "success_freq": self.frequency,
            "wilson_low": self.wilson_low, "wilson_high": self.wilson_high,
            "mean_norm_rate": self.mean_norm_rate, "theory_target": self.theory_target,
            "events": dict(self.counts), "upper_bound": self.upper_bound,
        }
        if include_records:
            out["trials_log"] = [asdict(r) for r in self.records]
        return out


def _primary(causes: dict[int, str], per_node: dict[str, set[int]]) -> str | None:
    """Earliest-phase event among those that fired at a failed node."""
    if not causes:
        return None
    fired = set()
    for node in causes:
        fired |= {ev for ev, nodes in per_node.items() if node in nodes}
        fired.add(causes[node])
    return min(fired, key=EVENTS.index)


def _from_run(report) -> tuple[dict[str, int], str | None]:
    events = {"A1": int(report.a1), "A2": len(report.a2), "A3": len(report.a3), "M": len(report.m)}
    if report.a1:
        return events, "A1"
    per_node = {"A2": set(report.a2), "A3": set(report.a3), "M": set(report.m)}
    return events, _primary(report.causes, per_node)


def _merge(parts: list[tuple[dict[str, int], str | None]]) -> tuple[dict[str, int], str | None]:
    events = {e: sum(p[0][e] for p in parts) for e in EVENTS}
    primaries = [p[1] for p in parts if p[1] is not None]
    return events, (min(primaries, key=EVENTS.index) if primaries else None)


def theory_target(cfg: ExperimentConfig, n: int, k: int | None) -> float:
    kind, eps = cfg.kind, cfg.eps
    if kind == "allcast":
        return cfg.p / 2 * (1 - eps)
    if kind == "allcast_vanishing":
        return 0.5
    if kind in ("maxflow", "relay_multi"):
        return cfg.p * (1 - eps)
    if kind == "multicast":
        return (1 - k / n / 2) * cfg.p * (1 - 2 * eps)
    if kind == "matching":
        return 1.0 - gamma_bound(n, cfg.p)
    if kind == "strength_sweep":
        return cfg.distribution.mean / 2
    return cfg.distribution.mean / 2 * (1 - 2 * eps)


def run_trial(cfg: ExperimentConfig, cell: int, j: int, keep_report: bool = False):
    """One seeded trial of cell ``cell``; returns a TrialRecord (and the raw report if asked)."""
    n, k = cfg.cells()[cell]
    seed = derive_seed(cfg.seed, cfg.kind, cell, j)
    upper = None
    if cfg.kind == "allcast":
        g = gen_gnp(n, cfg.p, derive_seed(seed, "graph"))
        report = run_allcast(g, 0, cfg.eps, derive_seed(seed, "allcast"), cfg.p, restricted=cfg.restricted)
        events, primary = _from_run(report)
        bits, denom = report.common_bits, n
        if cfg.upper_bound:
            upper = upper_bound_allcast(g) / n
    elif cfg.kind == "allcast_vanishing":
        report = run_allcast_vanishing(n, cfg.tau, cfg.eps, seed, restricted=cfg.restricted)
        events, primary = _from_run(report)
        bits, denom = report.common_bits, n * report.p
        if cfg.upper_bound:
            g = gen_gnp(n, report.p, derive_seed(seed, "graph"))
            upper = upper_bound_allcast(g) / denom
    elif cfg.kind in ("maxflow", "relay_multi"):
        sessions = 2 if cfg.kind == "maxflow" else k
        net = gen_relay_network(sessions, n, cfg.p, derive_seed(seed, "relay"))
        run = run_maxflow if cfg.kind == "maxflow" else run_maxflow_pushpull_multi
        report = run(net, cfg.eps, cfg.p, restricted=cfg.restricted)
        events, primary = _from_run(report)
        bits, denom = report.common_bits, n
        if cfg.upper_bound:
            upper = float(net.session_adj[0].sum()) / n
    elif cfg.kind == "multicast":
        report = run_multicast(n, k, cfg.p, cfg.eps, seed, restricted=cfg.restricted)
        parts = [_from_run(r) for r in (report.session, report.relay) if r is not None]
        events, primary = _merge(parts) if parts else ({e: 0 for e in EVENTS}, None)
        bits, denom = report.total, n
        if cfg.upper_bound:
            upper = upper_bound_multicast(gen_gnp(n, cfg.p, derive_seed(seed, "graph")), k) / n
    elif cfg.kind == "matching":
        report = max_matching(gen_bipartite(n, n, cfg.p, derive_seed(seed, "bipartite")))
        events = {e: 0 for e in EVENTS}
        events["M"] = int(not report.complete)
        primary = None if report.complete else "M"
        bits, denom = len(report), n
        if cfg.upper_bound:
            upper = 1.0
    elif cfg.kind == "strength_sweep":
        report = gen_complete_capacitated(n, cfg.distribution, derive_seed(seed, "graph"))
        events, primary = {e: 0 for e in EVENTS}, None
        bits, denom = upper_bound_allcast(report), n
        if cfg.upper_bound:
            upper = bits / n
    else:  # layered
        g = gen_complete_capacitated(n, cfg.distribution, derive_seed(seed, "graph"))
        report = layered_allcast(g, cfg.distribution, cfg.eps, derive_seed(seed, "layered"), restricted=cfg.restricted)
        parts = [_from_run(r) for r in report.layers if r is not None]
        events, primary = _merge(parts) if parts else ({e: 0 for e in EVENTS}, None)
        bits, denom = report.rate, n
        if cfg.upper_bound:
            upper = upper_bound_allcast(g) / n
    success = primary is None
    record = TrialRecord(j, seed, success, bits, denom, events, primary, upper)
    return (record, report) if keep_report else record


def _task(args):
    cfg_dict, cell, j = args
    return run_trial(ExperimentConfig.from_dict(cfg_dict), cell, j)


def aggregate(cfg: ExperimentConfig, cell: int, records: list[TrialRecord]) -> CellStats:
    n, k = cfg.cells()[cell]
    records = sorted(records, key=lambda r: r.index)
    successes = sum(r.success for r in records)
    low, high = wilson_interval(successes, len(records))
    counts = {e: sum(1 for r in records if r.primary == e) for e in EVENTS}
    p = cfg.p
    if cfg.kind == "allcast_vanishing":
        p = vanishing_p(n, cfg.tau)
    uppers = [r.upper_bound for r in records if r.upper_bound is not None]
    return CellStats(
        cfg.kind, n, k, p, cfg.eps, len(records), successes, low, high,
        sum(r.rate for r in records) / len(records), theory_target(cfg, n, k), counts,
        sum(uppers) / len(uppers) if uppers else None, records,
    )


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, cells: list[int] | None = None) -> list[CellStats]:
    """Run every (or the selected) grid cell and aggregate per cell."""
    chosen = list(range(len(cfg.cells()))) if cells is None else list(cells)
    tasks = [(cell, j) for cell in chosen for j in range(cfg.trials)]
    if jobs > 1 and len(tasks) > 1:
        cfg_dict = cfg.to_dict()
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_task, [(cfg_dict, c, j) for c, j in tasks]))
    else:
        results = [run_trial(cfg, c, j) for c, j in tasks]
    by_cell: dict[int, list[TrialRecord]] = {c: [] for c in chosen}
    for (cell, _), rec in zip(tasks, results):
        by_cell[cell].append(rec)
    return [aggregate(cfg, c, by_cell[c]) for c in chosen]


def _fmt(x) -> str:
    if x is None:
        return ""
    if isinstance(x, float):
        return repr(round(x, 12))
    return str(x)


def convergence_table(stats: list[CellStats]) -> str:
    """CSV text, one row per cell sorted by n then k; an upper-bound column appears when any cell has one."""
    if not stats:
        raise ValueError("need at least one cell to tabulate")
    with_upper = any(s.upper_bound is not None for s in stats)
    header = CSV_HEADER + (["upper_bound"] if with_upper else [])
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for s in sorted(stats, key=lambda s: (s.n, -1 if s.k is None else s.k)):
        row = [s.n, s.k, s.p, s.eps, s.trials, s.frequency, s.wilson_low, s.wilson_high,
               s.mean_norm_rate, s.theory_target, s.counts["A1"], s.counts["A2"], s.counts["A3"], s.counts["M"]]
        if with_upper:
            row.append(s.upper_bound)
        writer.writerow([_fmt(v) for v in row])
    return buf.getvalue()


def sidecar(cfg: ExperimentConfig, stats: list[CellStats]) -> str:
    """JSON with the full config and per-trial event logs."""
    return json.dumps(
        {"config": cfg.to_dict(), "cells": [s.to_dict(include_records=True) for s in stats]},
        indent=2, sort_keys=True,
    )


__all__ = [
    "KINDS",
    "CSV_HEADER",
    "PreconditionUnmet",
    "binomial_tail_bound",
    "raw_binomial_tail_bound",
    "ExperimentConfig",
    "TrialRecord",
    "CellStats",
    "theory_target",
    "run_trial",
    "aggregate",
    "run_experiment",
    "convergence_table",
    "sidecar",
]
