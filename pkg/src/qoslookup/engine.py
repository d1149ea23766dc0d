"""Deterministic discrete-event engine driving the per-node protocol.

Events are ordered by ``(time, seq)``; ``seq`` is the insertion counter, so
simultaneous events run in the order they were scheduled.  A message sent
over a link arrives exactly one link latency later; transmission time is
ignored.
"""

from __future__ import annotations

import enum
import heapq
import random
from dataclasses import dataclass, field
from typing import Any, Dict, FrozenSet, List, Optional, Tuple

from . import trace as tr
from .config import SimConfig
from .cost import CostModel, QosConstraints, RankedHit
from .errors import BrokenPath, ConfigError, UnknownNode
from .protocol import (
    DELIVERED,
    NodeState,
    QueryHitMessage,
    QueryMessage,
    ScoredHit,
    Strategy,
    collect_and_rank,
    probe_neighbors,
    process_query,
    receive_query_hit,
    route_hit,
)
from .topology import (
    LinkProps,
    NodeId,
    ObjectId,
    Topology,
    draw_inventory,
    draw_link,
    generate_topology,
    rerandomize_bandwidths,
)
from .trace import RunMetrics, TraceRecord, classify_unwanted


class EventKind(str, enum.Enum):
    DELIVER_QUERY = tr.DELIVER_QUERY
    DELIVER_HIT = tr.DELIVER_HIT
    PROBE_TICK = tr.PROBE_TICK
    NODE_JOIN = tr.NODE_JOIN
    NODE_LEAVE = tr.NODE_LEAVE
    QUERY_START = tr.QUERY_START


@dataclass(order=True)
class Event:
    time: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: Any = field(compare=False, default=None)


@dataclass(frozen=True)
class ChurnModel:
    leave_rate: float = 0.0  # departures per query epoch
    join_rate: float = 0.0  # arrivals per query epoch
    seed: Optional[int] = None
    deg_min: int = 3
    deg_max: int = 12
    object_count: int = 50
    max_objects_per_peer: int = 15

    @classmethod
    def from_config(cls, config: SimConfig) -> "ChurnModel":
        return cls(
            config.leave_rate,
            config.join_rate,
            config.seed,
            config.deg_min,
            config.deg_max,
            config.object_count,
            config.max_objects_per_peer,
        )

    @property
    def enabled(self) -> bool:
        return self.leave_rate > 0 or self.join_rate > 0


@dataclass(frozen=True)
class ChurnEvent:
    kind: str  # "leave" | "join"
    node: NodeId
    links: Dict[NodeId, LinkProps] = field(default_factory=dict)
    inventory: FrozenSet[ObjectId] = frozenset()


def _draw_count(rate: float, rng: random.Random) -> int:
    whole = int(rate)
    return whole + (1 if rng.random() < rate - whole else 0)


MIN_NODES = 2


def apply_churn(
    topology: Topology,
    churn: ChurnModel,
    rng: Optional[random.Random] = None,
) -> Tuple[Topology, List[ChurnEvent]]:
    """Draw one epoch of departures and arrivals.

    Returns the resulting topology (the input is not modified) and the event
    list that produces it when applied in order.
    """
    if rng is None:
        rng = random.Random(churn.seed)
    out = topology.copy()
    events: List[ChurnEvent] = []

    leaves = min(_draw_count(churn.leave_rate, rng), max(len(out) - MIN_NODES, 0))
    for node in sorted(rng.sample(out.nodes, leaves)):
        out.remove_node(node)
        events.append(ChurnEvent("leave", node))

    for _ in range(_draw_count(churn.join_rate, rng)):
        node = out.next_id
        present = out.nodes
        want = min(rng.randint(churn.deg_min, churn.deg_max), len(present))
        open_slots = [n for n in present if out.degree(n) < churn.deg_max]
        pool = open_slots if len(open_slots) >= want else present
        targets = sorted(rng.sample(pool, want))
        links = {t: draw_link(rng, out.max_bw, out.max_ll) for t in targets}
        inventory = draw_inventory(rng, churn.object_count, churn.max_objects_per_peer)
        out.add_node(node, links, inventory)
        events.append(ChurnEvent("join", node, links, inventory))
    return out, events


@dataclass
class QueryOutcome:
    message_id: int
    requester: NodeId
    keyword: ObjectId
    hits: List[ScoredHit] = field(default_factory=list)
    self_hit: bool = False

    def ranked(self) -> List[RankedHit]:
        ranked = collect_and_rank(self.hits)
        if self.self_hit:
            # a local match is free and always shown first
            ranked = [RankedHit(1, 0.0, 0, self.requester)] + [r._replace(rank=r.rank + 1) for r in ranked]
        return ranked


class Simulator:
    """One overlay, one strategy, single-threaded event loop."""

    def __init__(
        self,
        topology: Topology,
        model: CostModel,
        strategy: Strategy,
        *,
        probe_noise: float = 0.0,
        noise_rng: Optional[random.Random] = None,
        states: Optional[Dict[NodeId, NodeState]] = None,
    ) -> None:
        self.topology = topology
        self.model = model
        self.strategy = strategy
        self.probe_noise = probe_noise
        self.noise_rng = noise_rng or random.Random(0)
        self.now = 0.0
        self.trace: List[TraceRecord] = []
        self.outcomes: Dict[int, QueryOutcome] = {}
        self.snapshots: Dict[int, Dict[NodeId, Dict[NodeId, LinkProps]]] = {}
        self._queue: List[Event] = []
        self._event_seq = 0
        self._record_seq = 0
        self._next_message = 1
        if states is None:
            states = {n: NodeState(n, topology.inventory.get(n, frozenset())) for n in topology.nodes}
            for st in states.values():
                probe_neighbors(st, topology, probe_noise, self.noise_rng)
        self.states = states
        self._handlers = {
            EventKind.QUERY_START: self._on_query_start,
            EventKind.DELIVER_QUERY: self._on_deliver_query,
            EventKind.DELIVER_HIT: self._on_deliver_hit,
            EventKind.PROBE_TICK: self._on_probe_tick,
            EventKind.NODE_LEAVE: self._on_leave,
            EventKind.NODE_JOIN: self._on_join,
        }

    # -- scheduling -------------------------------------------------------

    def schedule(self, delay: float, kind: EventKind, payload: Any = None) -> Event:
        if delay < 0:
            raise ValueError("cannot schedule into the past")
        ev = Event(self.now + delay, self._event_seq, kind, payload)
        self._event_seq += 1
        heapq.heappush(self._queue, ev)
        return ev

    def schedule_at(self, time: float, kind: EventKind, payload: Any = None) -> Event:
        return self.schedule(time - self.now, kind, payload)

    def pending(self) -> int:
        return len(self._queue)

    def step(self) -> Event:
        ev = heapq.heappop(self._queue)
        self.now = ev.time
        self._handlers[ev.kind](ev)
        return ev

    def run(self, until: Optional[float] = None) -> None:
        while self._queue and (until is None or self._queue[0].time <= until):
            self.step()

    def _log(self, kind: str, node: NodeId, message_id: int = tr.NO_MESSAGE, cost: float = 0.0, detail: str = "") -> None:
        self.trace.append(TraceRecord(self.now, self._record_seq, kind, node, message_id, cost, detail))
        self._record_seq += 1

    # -- public operations --------------------------------------------------

    def inject_query(
        self,
        requester: NodeId,
        keyword: ObjectId,
        constraints: QosConstraints,
        ttl: int,
        delay: float = 0.0,
    ) -> int:
        if requester not in self.states:
            raise UnknownNode(f"requester {requester} is not in the overlay")
        mid = self._next_message
        self._next_message += 1
        q = QueryMessage(mid, keyword, ttl, constraints, 0.0, requester, requester)
        self.outcomes[mid] = QueryOutcome(mid, requester, keyword)
        self.schedule(delay, EventKind.QUERY_START, q)
        return mid

    def schedule_probe(self, delay: float = 0.0) -> None:
        self.schedule(delay, EventKind.PROBE_TICK)

    def schedule_leave(self, node: NodeId, delay: float = 0.0) -> None:
        self.schedule(delay, EventKind.NODE_LEAVE, ChurnEvent("leave", node))

    def schedule_churn(self, events: List[ChurnEvent], delay: float = 0.0) -> None:
        for ev in events:
            kind = EventKind.NODE_LEAVE if ev.kind == "leave" else EventKind.NODE_JOIN
            self.schedule(delay, kind, ev)

    def probe_all(self) -> None:
        for st in self.states.values():
            probe_neighbors(st, self.topology, self.probe_noise, self.noise_rng)

    def new_epoch(self) -> None:
        for st in self.states.values():
            st.new_epoch()

    def set_topology(self, topology: Topology) -> None:
        """Swap in new ground truth (e.g. re-randomized bandwidths); tables stay stale until probed."""
        self.topology = topology

    def ranked(self, message_id: int) -> List[RankedHit]:
        return self.outcomes[message_id].ranked()

    # -- handlers -------------------------------------------------------------

    def _latency(self, u: NodeId, v: NodeId) -> float:
        if self.topology.has_link(u, v):
            return self.topology.link(u, v).latency
        # link vanished with a departed peer; the sender still uses its table
        return self.states[u].neighbors[v].latency

    def _on_query_start(self, ev: Event) -> None:
        q: QueryMessage = ev.payload
        node = q.requester_id
        self._log(tr.QUERY_START, node, q.message_id, 0.0, f"obj={q.keyword} ttl={q.ttl}")
        if node not in self.states:
            self._log(tr.DROP_GONE, node, q.message_id, 0.0, f"from={node}")
            return
        self.snapshots[q.message_id] = {n: st.neighbors for n, st in self.states.items()}
        self._handle_query(node, q)

    def _on_deliver_query(self, ev: Event) -> None:
        node, q = ev.payload
        self._log(tr.DELIVER_QUERY, node, q.message_id, q.accumulated_cost, f"from={q.sender_id}")
        if node not in self.states:
            self._log(tr.DROP_GONE, node, q.message_id, q.accumulated_cost, f"from={q.sender_id}")
            return
        self._handle_query(node, q)

    def _handle_query(self, node: NodeId, q: QueryMessage) -> None:
        state = self.states[node]
        decision = process_query(state, q, self.strategy, self.model)
        m = q.message_id
        if decision.outcome == "dup":
            self._log(tr.DROP_DUP, node, m, q.accumulated_cost, f"from={q.sender_id}")
        elif decision.outcome == "ttl":
            self._log(tr.DROP_TTL, node, m, q.accumulated_cost, f"from={q.sender_id}")
        elif decision.outcome == "hit":
            hit = decision.hit
            if node == q.requester_id:
                self.outcomes[m].self_hit = True
                self._log(tr.SELF_HIT, node, m, 0.0, f"files={hit.num_files}")
                return
            self._log(tr.HIT_SENT, node, m, hit.accumulated_cost, f"to={q.sender_id} files={hit.num_files}")
            self._route_hit(node, hit)
        else:
            self._log(tr.ACCEPT, node, m, q.accumulated_cost, f"from={q.sender_id}")
            for nbr, cost in decision.rejected:
                self._log(tr.DROP_COST, node, m, cost, f"to={nbr}")
            for nbr, copy in decision.outbound:
                self._log(tr.FORWARD, node, m, copy.accumulated_cost, f"to={nbr}")
                self.schedule(self._latency(node, nbr), EventKind.DELIVER_QUERY, (nbr, copy))

    def _route_hit(self, node: NodeId, hit: QueryHitMessage) -> None:
        try:
            nxt = route_hit(self.states, hit, node)
        except BrokenPath as exc:
            self._log(tr.HIT_LOST, node, hit.message_id, hit.accumulated_cost, f"responder={hit.responder_id}")
            return
        if nxt == DELIVERED:
            self._log(
                tr.HIT_DELIVERED,
                node,
                hit.message_id,
                hit.accumulated_cost,
                f"responder={hit.responder_id} files={hit.num_files}",
            )
            scored = receive_query_hit(self.states[node], hit, self.model)
            self.outcomes[hit.message_id].hits.append(scored)
            return
        self.schedule(self._latency(node, nxt), EventKind.DELIVER_HIT, (nxt, node, hit))

    def _on_deliver_hit(self, ev: Event) -> None:
        node, prev, hit = ev.payload
        self._log(tr.DELIVER_HIT, node, hit.message_id, hit.accumulated_cost, f"from={prev} responder={hit.responder_id}")
        self._route_hit(node, hit)

    def _on_probe_tick(self, ev: Event) -> None:
        self._log(tr.PROBE_TICK, -1)
        self.probe_all()

    def _on_leave(self, ev: Event) -> None:
        node = ev.payload.node
        if node not in self.states:
            return
        self._log(tr.NODE_LEAVE, node)
        del self.states[node]
        self.topology = self.topology.copy()
        self.topology.remove_node(node)

    def _on_join(self, ev: Event) -> None:
        spec: ChurnEvent = ev.payload
        self._log(tr.NODE_JOIN, spec.node, detail="links=" + ",".join(str(n) for n in sorted(spec.links)))
        self.topology = self.topology.copy()
        self.topology.add_node(spec.node, spec.links, spec.inventory)
        state = NodeState(spec.node, frozenset(spec.inventory))
        probe_neighbors(state, self.topology, self.probe_noise, self.noise_rng)
        self.states[spec.node] = state


@dataclass
class SimulationResult:
    trace: List[TraceRecord]
    metrics: RunMetrics
    outcomes: List[QueryOutcome]
    topology: Topology

    def __iter__(self):
        # (trace, metrics) unpacking
        return iter((self.trace, self.metrics))


def _streams(seed: int) -> Dict[str, random.Random]:
    names = ("topology", "bandwidth", "workload", "churn", "noise")
    return {name: random.Random(f"{seed}:{name}") for name in names}


def run_simulation(
    config: SimConfig,
    *,
    keep_trace: bool = True,
    topology: Optional[Topology] = None,
) -> SimulationResult:
    """Run ``config.queries_per_run`` sequential query epochs.

    Each epoch: churn (from the second epoch on), bandwidth re-randomization,
    a probe tick every ``probe_period`` epochs, then one query from a random
    requester for a random object, run until every message has settled.
    """
    config.validate()
    rngs = _streams(config.seed)
    model = config.cost_model()
    constraints = model.constraints(config.min_bandwidth, config.max_latency)
    strategy = config.strategy_enum
    if topology is None:
        topology = generate_topology(config, rngs["topology"])
    sim = Simulator(topology, model, strategy, probe_noise=config.probe_noise, noise_rng=rngs["noise"])
    churn = ChurnModel.from_config(config)
    metrics = RunMetrics(config.ttl, strategy.value, config.seed)
    full_trace: List[TraceRecord] = []
    outcomes: List[QueryOutcome] = []

    for epoch in range(config.queries_per_run):
        sim.new_epoch()
        if epoch > 0 and churn.enabled:
            _, events = apply_churn(sim.topology, churn, rngs["churn"])
            sim.schedule_churn(events)
            sim.run()
        sim.set_topology(rerandomize_bandwidths(sim.topology, rngs["bandwidth"]))
        if epoch % config.probe_period == 0:
            sim.schedule_probe()
            sim.run()

        requester = rngs["workload"].choice(sorted(sim.states))
        keyword = rngs["workload"].randrange(config.object_count)
        start = len(sim.trace)
        mid = sim.inject_query(requester, keyword, constraints, config.ttl)
        sim.run()

        epoch_trace = sim.trace[start:]
        snapshot = sim.snapshots.pop(mid, {})
        unwanted = classify_unwanted(epoch_trace, {mid: snapshot}, constraints, model)
        metrics.absorb(epoch_trace, unwanted)
        outcomes.append(sim.outcomes.pop(mid))
        if keep_trace:
            full_trace.extend(sim.trace)
        sim.trace.clear()

    return SimulationResult(full_trace, metrics, outcomes, sim.topology)
