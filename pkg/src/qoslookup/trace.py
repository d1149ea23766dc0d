"""Trace records, hit-path reconstruction and per-run metrics."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass
from typing import Dict, Iterable, List, Mapping, NamedTuple, Optional, Sequence, TextIO, Tuple

from .cost import CostModel, QosConstraints
from .errors import TraceError
from .topology import LinkProps, NodeId

# engine events
QUERY_START = "QUERY_START"
DELIVER_QUERY = "DELIVER_QUERY"
DELIVER_HIT = "DELIVER_HIT"
PROBE_TICK = "PROBE_TICK"
NODE_JOIN = "NODE_JOIN"
NODE_LEAVE = "NODE_LEAVE"
# protocol outcomes
ACCEPT = "ACCEPT"
FORWARD = "FORWARD"
DROP_DUP = "DROP_DUP"
DROP_TTL = "DROP_TTL"
DROP_COST = "DROP_COST"
DROP_GONE = "DROP_GONE"
HIT_SENT = "HIT_SENT"
HIT_DELIVERED = "HIT_DELIVERED"
HIT_LOST = "HIT_LOST"
SELF_HIT = "SELF_HIT"

NO_MESSAGE = -1

Snapshot = Mapping[NodeId, Mapping[NodeId, LinkProps]]


class TraceRecord(NamedTuple):
    time: float
    seq: int
    kind: str
    node: NodeId
    message_id: int
    cost: float
    detail: str

    def field(self, key: str) -> Optional[str]:
        """Value of ``key=value`` inside ``detail``."""
        for part in self.detail.split():
            k, _, v = part.partition("=")
            if k == key:
                return v
        return None

    def int_field(self, key: str) -> int:
        v = self.field(key)
        if v is None:
            raise TraceError(f"record {self} has no {key!r}")
        return int(v)

    def to_line(self) -> str:
        return "\t".join(
            (repr(self.time), str(self.seq), self.kind, str(self.node), str(self.message_id), repr(self.cost), self.detail)
        )

    @classmethod
    def from_line(cls, line: str) -> "TraceRecord":
        t, seq, kind, node, mid, cost, detail = line.rstrip("\n").split("\t")
        return cls(float(t), int(seq), kind, int(node), int(mid), float(cost), detail)


def write_trace(records: Iterable[TraceRecord], out: TextIO) -> None:
    for r in records:
        out.write(r.to_line())
        out.write("\n")


def read_trace(lines: Iterable[str]) -> List[TraceRecord]:
    return [TraceRecord.from_line(line) for line in lines if line.strip()]


def trace_digest(records: Iterable[TraceRecord]) -> str:
    h = hashlib.sha256()
    for r in records:
        h.update(r.to_line().encode())
        h.update(b"\n")
    return h.hexdigest()


@dataclass(frozen=True)
class HitPath:
    message_id: int
    responder: NodeId
    requester: NodeId
    nodes: Tuple[NodeId, ...]  # requester first, responder last
    accumulated_cost: float

    @property
    def links(self) -> List[Tuple[NodeId, NodeId]]:
        return list(zip(self.nodes, self.nodes[1:]))

    @property
    def hops(self) -> int:
        return len(self.nodes) - 1


def hit_paths(trace: Sequence[TraceRecord]) -> List[HitPath]:
    """Query path of every delivered hit, rebuilt from ACCEPT / HIT_SENT records."""
    requester: Dict[int, NodeId] = {}
    came_from: Dict[Tuple[NodeId, int], NodeId] = {}
    delivered = []
    for r in trace:
        if r.kind == QUERY_START:
            requester[r.message_id] = r.node
        elif r.kind == ACCEPT:
            came_from[(r.node, r.message_id)] = r.int_field("from")
        elif r.kind == HIT_SENT:
            came_from[(r.node, r.message_id)] = r.int_field("to")
        elif r.kind == HIT_DELIVERED:
            delivered.append(r)

    paths = []
    for r in delivered:
        m = r.message_id
        if m not in requester:
            raise TraceError(f"no QUERY_START for message {m}")
        origin = requester[m]
        responder = r.int_field("responder")
        nodes = [responder]
        node = responder
        while node != origin:
            try:
                node = came_from[(node, m)]
            except KeyError:
                raise TraceError(f"path of hit {responder} for message {m} breaks at node {nodes[-1]}") from None
            if node in nodes:
                raise TraceError(f"path of hit {responder} for message {m} loops at node {node}")
            nodes.append(node)
        nodes.reverse()
        paths.append(HitPath(m, responder, origin, tuple(nodes), r.cost))
    return paths


def classify_unwanted(
    trace: Sequence[TraceRecord],
    snapshots: Mapping[int, Snapshot],
    constraints: QosConstraints,
    model: CostModel,
) -> Dict[Tuple[int, NodeId], bool]:
    """Map (message id, responder) -> True when the hit's path has a link over max_cost.

    ``snapshots[message_id][u][v]`` is the LinkProps node ``u`` had probed for
    its link to ``v`` while the query was in flight.
    """
    verdict = {}
    for path in hit_paths(trace):
        try:
            tables = snapshots[path.message_id]
            costs = [model.link_cost(tables[u][v]) for u, v in path.links]
        except KeyError:
            raise TraceError(f"no link snapshot for a hop of message {path.message_id}") from None
        verdict[(path.message_id, path.responder)] = any(c > constraints.max_cost for c in costs)
    return verdict


@dataclass
class RunMetrics:
    ttl: int
    strategy: str
    seed: int
    queries: int = 0
    messages: int = 0
    hits: int = 0
    unwanted_hits: int = 0
    lost_hits: int = 0

    @property
    def avg_messages_per_query(self) -> float:
        return self.messages / self.queries if self.queries else 0.0

    @property
    def avg_hits_per_query(self) -> float:
        return self.hits / self.queries if self.queries else 0.0

    def absorb(self, trace: Sequence[TraceRecord], unwanted: Mapping[Tuple[int, NodeId], bool]) -> None:
        for r in trace:
            if r.kind == FORWARD:
                self.messages += 1
            elif r.kind == HIT_DELIVERED:
                self.hits += 1
            elif r.kind == HIT_LOST:
                self.lost_hits += 1
            elif r.kind == QUERY_START:
                self.queries += 1
        self.unwanted_hits += sum(unwanted.values())
