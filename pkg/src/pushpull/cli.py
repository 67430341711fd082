"""Command-line entry point.

Reports go to stdout (or ``--out``), diagnostics to stderr. Exit status is 0
on success, 1 when ``--strict`` is set and the algorithm reported a failure,
and 2 on usage or input errors.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from . import __version__
from .allcast import layered_allcast, run_allcast, run_allcast_vanishing
from .flow import run_maxflow, run_maxflow_pushpull_multi, run_multicast
from .graph_models import (
    CapGraph,
    RelayNetwork,
    distribution_from_dict,
    gen_bipartite,
    gen_complete_capacitated,
    gen_gnp,
    gen_relay_network,
    load_json,
)
from .harness import ExperimentConfig, convergence_table, run_experiment, sidecar
from .matching import epsilon_bound, gamma_bound, matching_failure_frequency
from .oracles import (
    catlin_value,
    enumerate_trees,
    strength_exact,
    strength_multicast_argmin,
    tree_pack_lp,
    upper_bound_allcast,
    upper_bound_multicast,
)
from .seeding import derive_seed


class UsageError(Exception):
    """Bad flags or input; reported on one line with exit status 2."""


def _read_json(path: str, what: str) -> dict:
    try:
        text = sys.stdin.read() if path == "-" else Path(path).read_text()
    except OSError as exc:
        raise UsageError(f"--{what}: cannot read {path}: {exc.strerror}") from None
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise UsageError(f"--{what}: malformed JSON in {path} (line {exc.lineno}: {exc.msg})") from None
    if not isinstance(obj, dict):
        raise UsageError(f"--{what}: {path} must hold a JSON object")
    return obj


def _load(path: str, expected: type):
    try:
        obj = load_json(_read_json(path, "graph"))
    except ValueError as exc:
        raise UsageError(f"--graph: {exc}") from None
    if not isinstance(obj, expected):
        raise UsageError(f"--graph: expected a {expected.__name__} JSON, got a {type(obj).__name__}")
    return obj


def _emit(args, payload, text: str | None = None) -> None:
    out = text if text is not None else json.dumps(payload, sort_keys=True) + "\n"
    if getattr(args, "out", None):
        Path(args.out).write_text(out)
    else:
        sys.stdout.write(out)


def _exclusive(args, file_flag: str, inline: list[str]) -> bool:
    """True when reading from a file; enforces that file and inline parameters are not mixed."""
    from_file = getattr(args, file_flag) is not None
    given = [f for f in inline if getattr(args, f) is not None]
    if from_file and given:
        raise UsageError(f"--{file_flag} cannot be combined with --{given[0]}")
    if not from_file:
        missing = [f for f in inline if getattr(args, f) is None]
        if missing:
            raise UsageError(f"--{missing[0]} is required unless --{file_flag} is given")
    return from_file


def _need(args, *flags: str) -> None:
    for f in flags:
        if getattr(args, f) is None:
            raise UsageError(f"--{f} is required")


def _session(text: str | None) -> list[int] | None:
    if text is None:
        return None
    try:
        return sorted({int(v) for v in text.split(",") if v.strip()})
    except ValueError:
        raise UsageError(f"--session must be comma-separated vertex ids, got {text!r}") from None


def _status(args, success: bool) -> int:
    return 1 if args.strict and not success else 0


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args) -> int:
    if args.model == "gnp":
        _need(args, "n", "p")
        obj = gen_gnp(args.n, args.p, args.seed)
    elif args.model == "capacitated":
        _need(args, "n", "dist")
        obj = gen_complete_capacitated(args.n, _dist(args.dist), args.seed)
    elif args.model == "bipartite":
        _need(args, "n", "p")
        obj = gen_bipartite(args.n, args.right or args.n, args.p, args.seed)
    else:
        _need(args, "k", "n", "p")
        obj = gen_relay_network(args.k, args.n, args.p, args.seed)
    _emit(args, obj.to_dict())
    return 0


def _dist(text: str):
    try:
        return distribution_from_dict(json.loads(text))
    except json.JSONDecodeError:
        raise UsageError(f"--dist must be a JSON object such as '{{\"kind\": \"uniform\"}}', got {text!r}") from None
    except (ValueError, AttributeError) as exc:
        raise UsageError(f"--dist: {exc}") from None


def cmd_allcast(args) -> int:
    usage = not args.no_usage
    if args.layered:
        _need(args, "dist")
        dist = _dist(args.dist)
        if args.graph is not None:
            if args.n is not None:
                raise UsageError("--graph cannot be combined with --n")
            g = _load(args.graph, CapGraph)
        else:
            _need(args, "n")
            g = gen_complete_capacitated(args.n, dist, derive_seed(args.seed, "graph"))
        report = layered_allcast(g, dist, args.eps, args.seed, source=args.source)
        _emit(args, report.to_dict())
        return _status(args, report.success)
    if args.tau is not None:
        if args.graph is not None or args.p is not None:
            raise UsageError("--tau generates its own graph; drop --graph and --p")
        _need(args, "n")
        report = run_allcast_vanishing(args.n, args.tau, args.eps, args.seed, restricted=args.restricted)
    else:
        _need(args, "p")
        if args.graph is not None:
            if args.n is not None:
                raise UsageError("--graph cannot be combined with --n")
            g = _load(args.graph, CapGraph)
        else:
            _need(args, "n")
            g = gen_gnp(args.n, args.p, derive_seed(args.seed, "graph"))
        if not 0 <= args.source < g.n:
            raise UsageError(f"--source {args.source} is not a vertex of a graph with n={g.n}")
        report = run_allcast(g, args.source, args.eps, args.seed, args.p, restricted=args.restricted)
    _emit(args, report.to_dict(include_usage=usage))
    return _status(args, report.success)


def _relay_input(args, k_fixed: int | None) -> RelayNetwork:
    inline = ["n"] if k_fixed is not None else ["n", "k"]
    if _exclusive(args, "graph", inline):
        net = _load(args.graph, RelayNetwork)
    else:
        _need(args, "seed")
        net = gen_relay_network(k_fixed or args.k, args.n, args.p, args.seed)
    if k_fixed is not None and net.k != k_fixed:
        raise UsageError(f"--graph: maxflow needs a relay network with k=2, got k={net.k}")
    return net


def cmd_maxflow(args) -> int:
    _need(args, "p")
    net = _relay_input(args, 2)
    report = run_maxflow(net, args.eps, args.p, restricted=args.restricted)
    _emit(args, report.to_dict(include_usage=not args.no_usage))
    return _status(args, report.success)


def cmd_relay(args) -> int:
    _need(args, "p")
    net = _relay_input(args, None)
    report = run_maxflow_pushpull_multi(net, args.eps, args.p, restricted=args.restricted)
    _emit(args, report.to_dict(include_usage=not args.no_usage))
    return _status(args, report.success)


def cmd_multicast(args) -> int:
    _need(args, "n", "k", "p")
    report = run_multicast(args.n, args.k, args.p, args.eps, args.seed, restricted=args.restricted)
    _emit(args, report.to_dict(include_usage=not args.no_usage))
    return _status(args, report.success)


def cmd_strength(args) -> int:
    g = _load(args.graph, CapGraph)
    session = _session(args.session)
    if session is None:
        value, part = strength_exact(g)
        payload = {"strength": value, "argmin_blocks": part.to_list()}
    else:
        value, part = strength_multicast_argmin(g, session)
        payload = {"strength": value, "session": session, "argmin_blocks": part.to_list()}
    _emit(args, payload)
    return 0


def cmd_treepack(args) -> int:
    g = _load(args.graph, CapGraph)
    trees = enumerate_trees(g, _session(args.session))
    if len(trees) == 0:
        _emit(args, {"lp_value": 0.0, "num_trees": 0, "weights": []})
        return 0
    result = tree_pack_lp(g, trees)
    weights = [
        {"tree": sorted(list(e) for e in trees.trees[i]), "weight": w} for i, w in result.weight_map.items()
    ]
    _emit(args, {"lp_value": result.value, "num_trees": len(trees), "weights": weights})
    return 0


def cmd_bounds(args) -> int:
    if args.graph is not None:
        if args.p is not None:
            raise UsageError("--graph cannot be combined with --p")
        g = _load(args.graph, CapGraph)
        payload = {"upper_bound_allcast": upper_bound_allcast(g), "catlin": catlin_value(g)}
        if args.k is not None:
            if not 2 <= args.k <= g.n:
                raise UsageError(f"--k must lie in [2, {g.n}], got {args.k}")
            payload["upper_bound_multicast"] = upper_bound_multicast(g, args.k)
    else:
        _need(args, "n", "p")
        payload = {"n": args.n, "p": args.p, "epsilon_bound": epsilon_bound(args.n, args.p),
                   "gamma_bound": gamma_bound(args.n, args.p)}
    _emit(args, payload)
    return 0


def cmd_matchprob(args) -> int:
    _need(args, "n", "p")
    report = matching_failure_frequency(args.n, args.p, args.trials, args.seed)
    _emit(args, report.to_dict())
    return 0


def cmd_experiment(args) -> int:
    try:
        cfg = ExperimentConfig.from_dict(_read_json(args.config, "config"))
    except (ValueError, TypeError) as exc:
        raise UsageError(f"--config: {exc}") from None
    out = args.out or cfg.out
    stats = run_experiment(cfg, jobs=args.jobs)
    table = convergence_table(stats)
    if out:
        Path(out).write_text(table)
        if args.verbose:
            Path(str(out) + ".json").write_text(sidecar(cfg, stats) + "\n")
    else:
        sys.stdout.write(table)
        if args.verbose:
            sys.stderr.write(sidecar(cfg, stats) + "\n")
    return _status(args, all(s.successes == s.trials for s in stats))


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="pushpull", description="Push-pull multicast on random graphs.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seed_required: bool = False, strict: bool = True):
        p.add_argument("--out", help="write the result here instead of stdout")
        p.add_argument("--seed", type=int, required=seed_required, help="root seed (nonnegative)")
        if strict:
            p.add_argument("--strict", action="store_true", help="exit 1 when the algorithm reports a failure")

    def run_flags(p):
        p.add_argument("--eps", type=float, default=0.25)
        p.add_argument("--restricted", action="store_true", help="square pull problems of size beta")
        p.add_argument("--no-usage", action="store_true", help="omit the per-edge usage log")

    p = sub.add_parser("gen", help="generate a random graph as JSON")
    common(p, seed_required=True, strict=False)
    p.add_argument("--model", choices=["gnp", "capacitated", "bipartite", "relay"], default="gnp")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--k", type=int, help="session size for --model relay")
    p.add_argument("--right", type=int, help="right side size for --model bipartite (default n)")
    p.add_argument("--dist", help="capacity distribution JSON for --model capacitated")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("allcast", help="run the push-pull allcast")
    common(p, seed_required=True)
    run_flags(p)
    p.add_argument("--graph", help="graph JSON (instead of --n)")
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float, help="edge probability the graph was drawn with")
    p.add_argument("--tau", type=float, help="use p = sqrt(tau log n / n)")
    p.add_argument("--source", type=int, default=0)
    p.add_argument("--layered", action="store_true", help="capacitated graph split into threshold layers")
    p.add_argument("--dist", help="capacity distribution JSON for --layered")
    p.set_defaults(func=cmd_allcast)

    for name, func, text in (("maxflow", cmd_maxflow, "flood-and-pull flow to one sink"),
                             ("relay", cmd_relay, "push-pull flow to every sink of a relay network")):
        p = sub.add_parser(name, help=text)
        common(p)
        run_flags(p)
        p.add_argument("--graph", help="relay network JSON (instead of --n)")
        p.add_argument("--n", type=int, help="relay count")
        p.add_argument("--p", type=float)
        if name == "relay":
            p.add_argument("--k", type=int, help="session size (source plus sinks)")
        p.set_defaults(func=func)

    p = sub.add_parser("multicast", help="session allcast plus relay flow on one G(n, p)")
    common(p, seed_required=True)
    run_flags(p)
    p.add_argument("--n", type=int)
    p.add_argument("--k", type=int)
    p.add_argument("--p", type=float)
    p.set_defaults(func=cmd_multicast)

    for name, func, text in (("strength", cmd_strength, "exact strength by partition enumeration"),
                             ("treepack", cmd_treepack, "fractional tree packing LP")):
        p = sub.add_parser(name, help=text)
        p.add_argument("--out")
        p.add_argument("--graph", required=True)
        p.add_argument("--session", help="comma-separated session vertices")
        p.set_defaults(func=func)

    p = sub.add_parser("bounds", help="cut bounds of a graph, or matching bounds for (n, p)")
    p.add_argument("--out")
    p.add_argument("--graph")
    p.add_argument("--k", type=int)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.set_defaults(func=cmd_bounds)

    p = sub.add_parser("matchprob", help="Monte Carlo frequency of no complete matching")
    common(p, seed_required=True, strict=False)
    p.add_argument("--n", type=int)
    p.add_argument("--p", type=float)
    p.add_argument("--trials", type=int, default=1000)
    p.set_defaults(func=cmd_matchprob)

    p = sub.add_parser("experiment", help="run a harness config and write a CSV table")
    p.add_argument("--config", required=True)
    p.add_argument("--out")
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--verbose", action="store_true", help="also write a JSON sidecar with per-trial logs")
    p.add_argument("--strict", action="store_true")
    p.set_defaults(func=cmd_experiment)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "seed", None) is not None and args.seed < 0:
        parser.exit(2, f"{parser.prog}: error: --seed must be nonnegative, got {args.seed}\n")
    if getattr(args, "jobs", 1) < 1:
        parser.exit(2, f"{parser.prog}: error: --jobs must be at least 1\n")
    try:
        return args.func(args)
    except (UsageError, ValueError) as exc:
        sys.stderr.write(f"{parser.prog} {args.command}: error: {exc}\n")
        return 2
    except BrokenPipeError:
        # reader went away (e.g. piped into head); silence the flush at exit
        os.dup2(os.open(os.devnull, os.O_WRONLY), sys.stdout.fileno())
        return 0


if __name__ == "__main__":
    sys.exit(main())
