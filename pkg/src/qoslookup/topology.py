"""Random overlay construction: graph, link properties and object placement.

The graph is built from a degree sequence. Target degrees are drawn from the
maximum-entropy law on ``[deg_min, deg_max]`` whose mean equals ``deg_avg``
(what a uniform draw looks like once conditioned on its average), the stubs
are paired at random, and self-loops or parallel edges produced by the pairing
are repaired with degree-preserving edge swaps (dense sequences that resist
this fall back to Havel-Hakimi plus random swaps).  Extra components are then
merged into the largest one by swapping one edge of each.
"""

from __future__ import annotations

import math
import random
from collections import deque
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Set, Tuple

from .errors import ConfigError

NodeId = int
ObjectId = int
Edge = Tuple[NodeId, NodeId]

_MAX_SWAP_TRIES = 2_000
_PAIRING_RESTARTS = 20


class _PairingFailed(Exception):
    pass


@dataclass(frozen=True)
class LinkProps:
    """Ground-truth bandwidth (Mbps) and latency (ms) of one undirected link."""

    bandwidth: float
    latency: float


def edge_key(u: NodeId, v: NodeId) -> Edge:
    return (u, v) if u < v else (v, u)


def _uniform_open_closed(rng: random.Random, upper: float) -> float:
    # random() lies in [0, 1), so upper * (1 - random()) lies in (0, upper]
    return upper * (1.0 - rng.random())


def draw_link(rng: random.Random, max_bw: float, max_ll: float) -> LinkProps:
    return LinkProps(_uniform_open_closed(rng, max_bw), _uniform_open_closed(rng, max_ll))


def draw_inventory(rng: random.Random, object_count: int, max_per_peer: int) -> FrozenSet[ObjectId]:
    size = rng.randint(0, max_per_peer)
    size = min(size, object_count)
    return frozenset(rng.sample(range(object_count), size))


@dataclass
class Topology:
    adjacency: Dict[NodeId, Set[NodeId]]
    links: Dict[Edge, LinkProps]
    inventory: Dict[NodeId, FrozenSet[ObjectId]]
    max_bw: float
    max_ll: float
    next_id: int = field(default=-1)

    def __post_init__(self) -> None:
        if self.next_id < 0:
            self.next_id = max(self.adjacency, default=-1) + 1

    @property
    def nodes(self) -> List[NodeId]:
        return sorted(self.adjacency)

    def __len__(self) -> int:
        return len(self.adjacency)

    def __contains__(self, node: object) -> bool:
        return node in self.adjacency

    def link(self, u: NodeId, v: NodeId) -> LinkProps:
        return self.links[edge_key(u, v)]

    def has_link(self, u: NodeId, v: NodeId) -> bool:
        return edge_key(u, v) in self.links

    def degree(self, node: NodeId) -> int:
        return len(self.adjacency[node])

    def degrees(self) -> Dict[NodeId, int]:
        return {n: len(nbrs) for n, nbrs in self.adjacency.items()}

    def edge_count(self) -> int:
        return len(self.links)

    def mean_degree(self) -> float:
        return 2.0 * len(self.links) / len(self.adjacency) if self.adjacency else 0.0

    def copy(self) -> "Topology":
        return Topology(
            adjacency={n: set(nbrs) for n, nbrs in self.adjacency.items()},
            links=dict(self.links),
            inventory=dict(self.inventory),
            max_bw=self.max_bw,
            max_ll=self.max_ll,
            next_id=self.next_id,
        )

    # In-place mutators used by the simulation engine. Pure wrappers live in
    # the churn code, which copies first.

    def remove_node(self, node: NodeId) -> None:
        for nbr in self.adjacency.pop(node):
            self.adjacency[nbr].discard(node)
            del self.links[edge_key(node, nbr)]
        self.inventory.pop(node, None)

    def add_node(
        self,
        node: NodeId,
        links: Dict[NodeId, LinkProps],
        inventory: Iterable[ObjectId] = (),
    ) -> None:
        if node in self.adjacency:
            raise ValueError(f"node {node} already present")
        self.adjacency[node] = set()
        self.inventory[node] = frozenset(inventory)
        for nbr, props in links.items():
            if nbr not in self.adjacency or nbr == node:
                raise ValueError(f"cannot link {node} to absent node {nbr}")
            self.adjacency[node].add(nbr)
            self.adjacency[nbr].add(node)
            self.links[edge_key(node, nbr)] = props
        self.next_id = max(self.next_id, node + 1)

    def components(self) -> List[List[NodeId]]:
        return _components(self.adjacency)

    def is_connected(self) -> bool:
        return len(self.components()) <= 1

    def structure_key(self) -> Tuple:
        """Hashable view of adjacency and latencies (bandwidths excluded)."""
        return (
            tuple((n, tuple(sorted(self.adjacency[n]))) for n in self.nodes),
            tuple((e, self.links[e].latency) for e in sorted(self.links)),
        )

    def dumps(self) -> str:
        lines = [f"nodes {len(self.adjacency)} maxbw {self.max_bw!r} maxll {self.max_ll!r}"]
        for (u, v) in sorted(self.links):
            p = self.links[(u, v)]
            lines.append(f"edge {u} {v} {p.bandwidth!r} {p.latency!r}")
        for n in self.nodes:
            objs = " ".join(str(o) for o in sorted(self.inventory.get(n, ())))
            lines.append(f"inv {n} {objs}".rstrip())
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Topology":
        adjacency: Dict[NodeId, Set[NodeId]] = {}
        links: Dict[Edge, LinkProps] = {}
        inventory: Dict[NodeId, FrozenSet[ObjectId]] = {}
        max_bw = max_ll = None
        declared = None
        for lineno, raw in enumerate(text.splitlines(), 1):
            parts = raw.split()
            if not parts or parts[0].startswith("#"):
                continue
            tag = parts[0]
            try:
                if tag == "nodes":
                    declared = int(parts[1])
                    max_bw = float(parts[3])
                    max_ll = float(parts[5])
                elif tag == "edge":
                    u, v = int(parts[1]), int(parts[2])
                    for n in (u, v):
                        adjacency.setdefault(n, set())
                    adjacency[u].add(v)
                    adjacency[v].add(u)
                    links[edge_key(u, v)] = LinkProps(float(parts[3]), float(parts[4]))
                elif tag == "inv":
                    n = int(parts[1])
                    adjacency.setdefault(n, set())
                    inventory[n] = frozenset(int(o) for o in parts[2:])
                else:
                    raise ValueError(f"unknown record {tag!r}")
            except (IndexError, ValueError) as exc:
                raise ValueError(f"line {lineno}: {exc}") from None
        if max_bw is None or max_ll is None:
            raise ValueError("missing 'nodes' header")
        if declared is not None and declared != len(adjacency):
            raise ValueError(f"header declares {declared} nodes, found {len(adjacency)}")
        for n in adjacency:
            inventory.setdefault(n, frozenset())
        return cls(adjacency, links, inventory, max_bw, max_ll)


def _components(adjacency: Dict[NodeId, Set[NodeId]]) -> List[List[NodeId]]:
    seen: Set[NodeId] = set()
    comps = []
    for start in sorted(adjacency):
        if start in seen:
            continue
        seen.add(start)
        comp = [start]
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v in adjacency[u]:
                if v not in seen:
                    seen.add(v)
                    comp.append(v)
                    queue.append(v)
        comps.append(sorted(comp))
    comps.sort(key=lambda c: (-len(c), c[0]))
    return comps


def _tilted_weights(lo: int, hi: int, mean: float) -> List[float]:
    """Weights p(d) proportional to exp(theta * d) on [lo, hi] with E[d] = mean."""
    support = range(lo, hi + 1)
    if hi == lo:
        return [1.0]
    if mean <= lo:
        return [1.0] + [0.0] * (hi - lo)
    if mean >= hi:
        return [0.0] * (hi - lo) + [1.0]

    def weights(theta: float) -> List[float]:
        # shift the exponent so the largest term is exp(0)
        ref = hi if theta > 0 else lo
        return [math.exp(theta * (d - ref)) for d in support]

    def mean_of(theta: float) -> float:
        w = weights(theta)
        return sum(d * x for d, x in zip(support, w)) / sum(w)

    a, b = -50.0, 50.0
    for _ in range(200):
        mid = 0.5 * (a + b)
        if mean_of(mid) < mean:
            a = mid
        else:
            b = mid
    return weights(0.5 * (a + b))


def _degree_sequence(n: int, lo: int, avg: float, hi: int, rng: random.Random) -> List[int]:
    total_min, total_max = n * lo, n * hi
    target = int(round(n * avg))
    target = min(max(target, total_min), total_max)
    # a connected simple graph on n nodes needs at least n - 1 edges
    if n > 1:
        target = max(target, 2 * (n - 1))
    if target % 2:
        target = target + 1 if target + 1 <= total_max else target - 1
    if target > total_max or target < total_min or target % 2 or (n > 1 and target < 2 * (n - 1)):
        raise ConfigError(
            f"no connected degree sequence for n={n} within [{lo}, {hi}] "
            f"(needs an even degree sum between {max(total_min, 2 * (n - 1))} and {total_max})"
        )

    degrees = rng.choices(range(lo, hi + 1), weights=_tilted_weights(lo, hi, avg), k=n)
    total = sum(degrees)
    while total > target:
        i = rng.randrange(n)
        if degrees[i] > lo:
            degrees[i] -= 1
            total -= 1
    while total < target:
        i = rng.randrange(n)
        if degrees[i] < hi:
            degrees[i] += 1
            total += 1
    return degrees


def _pair_stubs(degrees: List[int], rng: random.Random) -> Set[Edge]:
    stubs = [node for node, d in enumerate(degrees) for _ in range(d)]
    rng.shuffle(stubs)
    edges: Set[Edge] = set()
    edge_list: List[Edge] = []
    bad: List[Edge] = []
    for i in range(0, len(stubs), 2):
        u, v = stubs[i], stubs[i + 1]
        e = edge_key(u, v)
        if u == v or e in edges:
            bad.append((u, v))
        else:
            edges.add(e)
            edge_list.append(e)

    for u, v in bad:
        for _ in range(_MAX_SWAP_TRIES):
            if not edge_list:
                break
            x, y = edge_list[rng.randrange(len(edge_list))]
            if rng.random() < 0.5:
                x, y = y, x
            e1, e2 = edge_key(u, x), edge_key(v, y)
            if u == x or v == y or e1 == e2 or e1 in edges or e2 in edges:
                continue
            edges.remove(edge_key(x, y))
            edge_list.remove(edge_key(x, y))
            edges.update((e1, e2))
            edge_list.extend((e1, e2))
            break
        else:
            raise _PairingFailed
        if not edge_list:
            raise _PairingFailed
    return edges


def _havel_hakimi(degrees: List[int]) -> Set[Edge]:
    remaining = {node: d for node, d in enumerate(degrees)}
    edges: Set[Edge] = set()
    while True:
        live = sorted((d, node) for node, d in remaining.items() if d > 0)
        if not live:
            return edges
        d, node = live.pop()
        if d > len(live):
            raise ConfigError("degree sequence is not graphical")
        del remaining[node]
        for _, other in live[-d:]:
            remaining[other] -= 1
            edges.add(edge_key(node, other))


def _double_edge_swaps(edges: Set[Edge], rng: random.Random, count: int) -> None:
    edge_list = sorted(edges)
    if len(edge_list) < 2:
        return
    for _ in range(count):
        i, j = rng.randrange(len(edge_list)), rng.randrange(len(edge_list))
        (a, b), (c, d) = edge_list[i], edge_list[j]
        if rng.random() < 0.5:
            c, d = d, c
        e1, e2 = edge_key(a, c), edge_key(b, d)
        if len({a, b, c, d}) < 4 or e1 in edges or e2 in edges:
            continue
        edges.difference_update((edge_list[i], edge_list[j]))
        edges.update((e1, e2))
        edge_list[i], edge_list[j] = e1, e2


def _realise(degrees: List[int], rng: random.Random) -> Set[Edge]:
    """Random simple graph with exactly the given degrees."""
    for _ in range(_PAIRING_RESTARTS):
        try:
            return _pair_stubs(degrees, rng)
        except _PairingFailed:
            continue
    # dense corner cases: deterministic construction, then randomize
    edges = _havel_hakimi(degrees)
    _double_edge_swaps(edges, rng, 20 * len(edges))
    return edges


def _connect(n: int, edges: Set[Edge], rng: random.Random) -> Set[Edge]:
    adjacency: Dict[NodeId, Set[NodeId]] = {i: set() for i in range(n)}
    for u, v in edges:
        adjacency[u].add(v)
        adjacency[v].add(u)

    comps = _components(adjacency)
    while len(comps) > 1:
        main, small = comps[0], comps[-1]
        small_edges = sorted({edge_key(a, b) for a in small for b in adjacency[a]})
        main_edges = sorted({edge_key(c, d) for c in main for d in adjacency[c]})
        if not small_edges or not main_edges:
            raise ConfigError("cannot connect the overlay: a component has no edge to rewire")
        for _ in range(_MAX_SWAP_TRIES):
            a, b = small_edges[rng.randrange(len(small_edges))]
            c, d = main_edges[rng.randrange(len(main_edges))]
            # (a, b) + (c, d) -> (a, c) + (b, d); both new edges cross components
            for p, q in ((a, c), (b, d)):
                adjacency[p].add(q)
                adjacency[q].add(p)
            adjacency[a].discard(b)
            adjacency[b].discard(a)
            adjacency[c].discard(d)
            adjacency[d].discard(c)
            new_comps = _components(adjacency)
            if len(new_comps) < len(comps):
                comps = new_comps
                break
            for p, q in ((a, c), (b, d)):
                adjacency[p].discard(q)
                adjacency[q].discard(p)
            for p, q in ((a, b), (c, d)):
                adjacency[p].add(q)
                adjacency[q].add(p)
        else:
            raise ConfigError("cannot connect the overlay within the degree bounds")
    return {edge_key(u, v) for u in adjacency for v in adjacency[u]}


def place_objects(
    topology: Topology,
    object_count: int,
    max_per_peer: int,
    rng: random.Random,
) -> Topology:
    """Return a copy of ``topology`` with a fresh random inventory on every node."""
    if object_count < 1:
        raise ConfigError("object_count must be >= 1")
    if max_per_peer < 0:
        raise ConfigError("max_objects_per_peer must be >= 0")
    out = topology.copy()
    out.inventory = {n: draw_inventory(rng, object_count, max_per_peer) for n in out.nodes}
    return out


def generate_topology(config, rng: Optional[random.Random] = None) -> Topology:
    """Build the connected random overlay described by ``config``.

    ``config`` needs ``node_count``, ``deg_min``, ``deg_avg``, ``deg_max``,
    ``max_bw``, ``max_ll``, ``object_count`` and ``max_objects_per_peer``.
    """
    if rng is None:
        rng = random.Random(config.seed)
    n, lo, avg, hi = config.node_count, config.deg_min, config.deg_avg, config.deg_max
    if n < 2:
        raise ConfigError("node_count must be >= 2")
    if lo < 1:
        raise ConfigError("deg_min must be >= 1")
    if hi >= n:
        raise ConfigError("deg_max must be < node_count")
    if not lo <= avg <= hi:
        raise ConfigError("deg_min <= deg_avg <= deg_max must hold")
    if config.max_bw <= 0 or config.max_ll <= 0:
        raise ConfigError("max_bw and max_ll must be positive")

    degrees = _degree_sequence(n, lo, avg, hi, rng)
    edges = _connect(n, _realise(degrees, rng), rng)

    adjacency: Dict[NodeId, Set[NodeId]] = {i: set() for i in range(n)}
    links: Dict[Edge, LinkProps] = {}
    for u, v in sorted(edges):
        adjacency[u].add(v)
        adjacency[v].add(u)
        links[(u, v)] = draw_link(rng, config.max_bw, config.max_ll)
    topo = Topology(adjacency, links, {i: frozenset() for i in range(n)}, config.max_bw, config.max_ll)
    return place_objects(topo, config.object_count, config.max_objects_per_peer, rng)


def rerandomize_bandwidths(topology: Topology, rng: random.Random) -> Topology:
    """Copy of ``topology`` with every bandwidth redrawn; latencies and structure kept."""
    out = topology.copy()
    out.links = {
        e: LinkProps(_uniform_open_closed(rng, topology.max_bw), topology.links[e].latency)
        for e in sorted(topology.links)
    }
    return out
