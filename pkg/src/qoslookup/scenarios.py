"""Built-in eight-peer lookup scenario (peers A..H) used as a golden fixture.

A asks for object 0 under (2 Mbps, 20 ms), i.e. a max link cost of 6.25.
The A-B link rates worse than that, so only C is tried.  C passes the query
to D and E, which reach the two holders F and H::

    A --7.10-- B --- G
    |                 \\
   5.50           (never reached)
    |
    C --5.75-- D --6.25-- F   (14 files, accumulated 17.50)
    |
  5.55
    |
    E --6.00-- H              (6 files, accumulated 17.05)

A has seen F and H before with past responses 5 and 4.
"""

from __future__ import annotations

from typing import Dict, List, Tuple

from .cost import CostModel, CostWeights
from .engine import Simulator
from .protocol import NodeState, Strategy, probe_neighbors
from .topology import LinkProps, Topology, edge_key

NAMES = "ABCDEFGH"
A, B, C, D, E, F, G, H = range(8)
KEYWORD = 0
TTL = 3
MIN_BANDWIDTH = 2.0
MAX_LATENCY = 20.0

# (u, v, bandwidth Mbps, latency ms); ratings in the comments are (bw, latency) -> cost
LINKS: List[Tuple[int, int, float, float]] = [
    (A, B, 0.5, 25.0),  # (10, 3) -> 7.10, rejected by A
    (A, C, 4.5, 75.0),  # (6, 8) -> 5.50
    (C, D, 3.5, 55.0),  # (7, 6) -> 5.75
    (C, E, 3.5, 45.0),  # (7, 5) -> 5.55
    (D, F, 1.5, 15.0),  # (9, 2) -> 6.25, exactly at the limit
    (E, H, 2.5, 35.0),  # (8, 4) -> 6.00
    (B, G, 8.0, 10.0),
    (F, G, 9.0, 5.0),
    (G, H, 9.5, 5.0),
]
FILES = {F: 14, H: 6}
PRIORS = {F: 5.0, H: 4.0}


def fig2_model() -> CostModel:
    return CostModel(max_bw=10.0, max_ll=100.0, max_files=50, weights=CostWeights(0.65, 0.20, 0.15))


def fig2_topology() -> Topology:
    adjacency: Dict[int, set] = {n: set() for n in range(8)}
    links = {}
    for u, v, bw, ll in LINKS:
        adjacency[u].add(v)
        adjacency[v].add(u)
        links[edge_key(u, v)] = LinkProps(bw, ll)
    inventory = {n: frozenset({KEYWORD}) if n in FILES else frozenset() for n in range(8)}
    return Topology(adjacency, links, inventory, max_bw=10.0, max_ll=100.0)


def fig2_simulator(strategy: Strategy = Strategy.QOS_ADAPTIVE) -> Simulator:
    topo = fig2_topology()
    states = {}
    for n in topo.nodes:
        st = NodeState(n, topo.inventory[n], file_counts={KEYWORD: FILES[n]} if n in FILES else {})
        probe_neighbors(st, topo)
        states[n] = st
    states[A].hit_history.update(PRIORS)
    return Simulator(topo, fig2_model(), strategy, states=states)


def run_fig2(strategy: Strategy = Strategy.QOS_ADAPTIVE):
    """Run the scenario; returns (simulator, message id)."""
    sim = fig2_simulator(strategy)
    constraints = sim.model.constraints(MIN_BANDWIDTH, MAX_LATENCY)
    mid = sim.inject_query(A, KEYWORD, constraints, TTL)
    sim.run()
    return sim, mid
