"""Per-node query handling: admission, forwarding, hits and requester ranking."""

from __future__ import annotations

import enum
import random
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, List, Mapping, NamedTuple, Optional, Set, Tuple

from .cost import DEFAULT_PAST_RESPONSE, CostModel, QosConstraints, RankedHit, rank_hits
from .errors import BrokenPath, UnknownNeighbor
from .topology import LinkProps, NodeId, ObjectId, Topology


class Strategy(str, enum.Enum):
    QOS_ADAPTIVE = "qos"
    FLOODING = "flooding"

    @classmethod
    def parse(cls, text: str) -> "Strategy":
        text = text.strip().lower()
        for s in cls:
            if text in (s.value, s.name.lower()):
                return s
        raise ValueError(f"unknown strategy {text!r} (expected 'qos' or 'flooding')")


@dataclass(frozen=True)
class QueryMessage:
    message_id: int
    keyword: ObjectId
    ttl: int
    constraints: QosConstraints
    accumulated_cost: float
    sender_id: NodeId
    requester_id: NodeId


@dataclass(frozen=True)
class QueryHitMessage:
    message_id: int
    responder_id: NodeId
    num_files: int
    accumulated_cost: float


@dataclass
class NodeState:
    node_id: NodeId
    inventory: FrozenSet[ObjectId] = frozenset()
    # neighbor -> last probed LinkProps; replaced wholesale on every probe
    neighbors: Dict[NodeId, LinkProps] = field(default_factory=dict)
    seen: Set[int] = field(default_factory=set)
    reverse_path: Dict[int, NodeId] = field(default_factory=dict)
    hit_history: Dict[NodeId, float] = field(default_factory=dict)
    # optional per-object match counts; a held object without an entry counts as 1 file
    file_counts: Dict[ObjectId, int] = field(default_factory=dict)
    _costs: Dict[NodeId, float] = field(default_factory=dict, repr=False, compare=False)

    def files_for(self, keyword: ObjectId) -> int:
        if keyword not in self.inventory:
            return 0
        return self.file_counts.get(keyword, 1)

    def cost_to(self, neighbor: NodeId, model: CostModel) -> float:
        try:
            return self._costs[neighbor]
        except KeyError:
            pass
        try:
            props = self.neighbors[neighbor]
        except KeyError:
            raise UnknownNeighbor(f"node {self.node_id} has no link to {neighbor}") from None
        cost = self._costs[neighbor] = model.link_cost(props)
        return cost

    def set_neighbors(self, table: Dict[NodeId, LinkProps]) -> None:
        self.neighbors = table
        self._costs = {}

    def new_epoch(self) -> None:
        """Forget per-query caches; hit history survives."""
        self.seen.clear()
        self.reverse_path.clear()


class QueryDecision(NamedTuple):
    outbound: List[Tuple[NodeId, QueryMessage]]
    hit: Optional[QueryHitMessage]
    outcome: str  # "dup" | "hit" | "ttl" | "accept"
    rejected: List[Tuple[NodeId, float]]


def process_query(
    state: NodeState,
    q: QueryMessage,
    strategy: Strategy,
    model: CostModel,
) -> QueryDecision:
    if q.message_id in state.seen:
        return QueryDecision([], None, "dup", [])

    files = state.files_for(q.keyword)
    if files:
        # cached too, so a hit node answers each message id once
        state.seen.add(q.message_id)
        state.reverse_path[q.message_id] = q.sender_id
        hit = QueryHitMessage(q.message_id, state.node_id, files, q.accumulated_cost)
        return QueryDecision([], hit, "hit", [])

    if q.ttl <= 0:
        return QueryDecision([], None, "ttl", [])

    state.seen.add(q.message_id)
    state.reverse_path[q.message_id] = q.sender_id

    limit = q.constraints.max_cost
    check = strategy is Strategy.QOS_ADAPTIVE
    outbound = []
    rejected = []
    for nbr in sorted(state.neighbors):
        if nbr == q.sender_id:
            continue
        cost = state.cost_to(nbr, model)
        if check and cost > limit:
            rejected.append((nbr, cost))
            continue
        copy = replace(
            q,
            ttl=q.ttl - 1,
            accumulated_cost=q.accumulated_cost + cost,
            sender_id=state.node_id,
        )
        outbound.append((nbr, copy))
    return QueryDecision(outbound, None, "accept", rejected)


DELIVERED = "DELIVERED"


def route_hit(states: Mapping[NodeId, NodeState], hit: QueryHitMessage, at_node: NodeId):
    """Next reverse-path hop for ``hit`` sitting at ``at_node``, or DELIVERED.

    The requester's own reverse-path entry points at itself, which marks the
    end of the path.
    """
    state = states.get(at_node)
    if state is None:
        raise BrokenPath(f"node {at_node} left the overlay")
    try:
        nxt = state.reverse_path[hit.message_id]
    except KeyError:
        raise BrokenPath(f"node {at_node} has no reverse path for message {hit.message_id}") from None
    if nxt == at_node:
        return DELIVERED
    if nxt not in states:
        raise BrokenPath(f"next hop {nxt} of node {at_node} left the overlay")
    return nxt


@dataclass(frozen=True)
class ScoredHit:
    message_id: int
    responder: NodeId
    num_files: int
    accumulated_cost: float
    past_response: float
    final_cost: float


def receive_query_hit(state: NodeState, hit: QueryHitMessage, model: CostModel) -> ScoredHit:
    prior = state.hit_history.get(hit.responder_id, DEFAULT_PAST_RESPONSE)
    past = model.update_past(prior, hit.num_files)
    state.hit_history[hit.responder_id] = past
    return ScoredHit(
        hit.message_id,
        hit.responder_id,
        hit.num_files,
        hit.accumulated_cost,
        past,
        model.final_cost(hit.accumulated_cost, past),
    )


def collect_and_rank(hits: List[ScoredHit]) -> List[RankedHit]:
    ids = {h.message_id for h in hits}
    if len(ids) > 1:
        raise ValueError(f"hits from several queries mixed together: {sorted(ids)}")
    return rank_hits((h.final_cost, h.num_files, h.responder) for h in hits)


def probe_neighbors(
    state: NodeState,
    topology: Topology,
    noise: float = 0.0,
    rng: Optional[random.Random] = None,
) -> Dict[NodeId, LinkProps]:
    """Refresh the node's neighbor table from the overlay's ground truth."""
    table = {}
    for nbr in sorted(topology.adjacency.get(state.node_id, ())):
        props = topology.link(state.node_id, nbr)
        if noise > 0:
            props = _noisy(props, noise, rng or random.Random(0), topology)
        table[nbr] = props
    state.set_neighbors(table)
    return table


def _noisy(props: LinkProps, noise: float, rng: random.Random, topology: Topology) -> LinkProps:
    def jitter(value: float, upper: float) -> float:
        v = value * (1.0 + rng.gauss(0.0, noise))
        return min(max(v, upper * 1e-6), upper)

    return LinkProps(jitter(props.bandwidth, topology.max_bw), jitter(props.latency, topology.max_ll))
