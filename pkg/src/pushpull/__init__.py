"""Push-pull multicast on random capacitated graphs.

Generators for the random network models, the allcast and relay-flow
algorithms with full delivery logs, exact small-graph oracles, and a Monte
Carlo harness that turns seeded trials into convergence tables.
"""

__version__ = "0.1.0"

from .allcast import AllcastReport, layered_allcast, run_allcast, run_allcast_vanishing, verify_delivery
from .flow import FlowReport, MulticastReport, run_maxflow, run_maxflow_pushpull_multi, run_multicast
from .graph_models import BipartiteGraph, CapGraph, RelayNetwork, gen_bipartite, gen_gnp, gen_relay_network
from .matching import max_matching

__all__ = [
    "AllcastReport",
    "BipartiteGraph",
    "CapGraph",
    "FlowReport",
    "MulticastReport",
    "RelayNetwork",
    "gen_bipartite",
    "gen_gnp",
    "gen_relay_network",
    "layered_allcast",
    "max_matching",
    "run_allcast",
    "run_allcast_vanishing",
    "run_maxflow",
    "run_maxflow_pushpull_multi",
    "run_multicast",
    "verify_delivery",
]
