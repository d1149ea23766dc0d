"""Ratings on a 1..10 scale and the composite cost built from them.

Every metric is bucketed into tenths of its global maximum using half-open
buckets ``((k-1)*M/10, k*M/10]``.  Rating 1 is always the best value:

* bandwidth and returned-file count: bucket k -> rating ``11 - k``
* latency: bucket k -> rating ``k``

A link's cost is ``w_bandwidth * rating(bw) + w_latency * rating(latency)``;
a link is admissible for a query iff its cost does not exceed the cost of the
user's own (minimum bandwidth, maximum latency) pair.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Iterable, List, NamedTuple, Sequence, Tuple

from .errors import DomainError
from .topology import LinkProps, NodeId

log = logging.getLogger(__name__)

MIN_RATING = 1
MAX_RATING = 10
DEFAULT_PAST_RESPONSE = 5.0
PAST_DECAY = 0.8  # weight kept by the previous past-response value
PAST_GAIN = 0.2  # weight of the rating of the current hit


def _bucket(value: float, maximum: float) -> int:
    """Bucket index k in 1..10 such that value lies in ((k-1)*M/10, k*M/10]."""
    if not (isinstance(value, (int, float)) and isinstance(maximum, (int, float))):
        raise DomainError(f"non-numeric rating input: {value!r} / {maximum!r}")
    if not maximum > 0:
        raise DomainError(f"maximum must be positive, got {maximum!r}")
    if not 0 < value <= maximum:
        raise DomainError(f"value {value!r} outside (0, {maximum!r}]")
    scaled = 10.0 * value / maximum
    if abs(scaled - round(scaled)) < 1e-9:
        # close to a bucket edge: decide with exact rational arithmetic
        return math.ceil(Fraction(value) * 10 / Fraction(maximum))
    return math.ceil(scaled)


def rate_bandwidth(bw: float, max_bw: float) -> int:
    return 11 - _bucket(bw, max_bw)


def rate_latency(ll: float, max_ll: float) -> int:
    return _bucket(ll, max_ll)


def rate_files(n_files: int, max_files: int) -> int:
    """Rating of a QueryHit's file count; more files rate better (lower)."""
    if max_files < 1:
        raise DomainError(f"max_files must be >= 1, got {max_files!r}")
    if n_files < 1:
        raise DomainError(f"a QueryHit reports at least one file, got {n_files!r}")
    if n_files > max_files:
        log.warning("file count %d above max_files %d; clamped", n_files, max_files)
        n_files = max_files
    return 11 - _bucket(n_files, max_files)


def _exact(x: float) -> Fraction:
    # the shortest repr is the decimal the caller wrote (0.65, not 0.6500000000000000222)
    return Fraction(repr(float(x)))


@dataclass(frozen=True)
class CostWeights:
    w_bandwidth: float = 0.65
    w_latency: float = 0.20
    w_past: float = 0.15

    def __post_init__(self) -> None:
        parts = (self.w_bandwidth, self.w_latency, self.w_past)
        if any(not math.isfinite(w) or w < 0 for w in parts):
            raise DomainError(f"weights must be finite and >= 0, got {parts}")
        if abs(sum(parts) - 1.0) > 1e-9:
            raise DomainError(f"weights must sum to 1, got {sum(parts)!r}")

    def combine(self, bw_rating: int, ll_rating: int) -> float:
        """Weighted sum of two ratings, correctly rounded (0.65*9 + 0.2*2 == 6.25)."""
        return float(_exact(self.w_bandwidth) * bw_rating + _exact(self.w_latency) * ll_rating)

    @property
    def min_link_cost(self) -> float:
        return self.combine(MIN_RATING, MIN_RATING)

    @property
    def max_link_cost(self) -> float:
        return self.combine(MAX_RATING, MAX_RATING)


DEFAULT_WEIGHTS = CostWeights()


def link_cost(props: LinkProps, max_bw: float, max_ll: float, weights: CostWeights = DEFAULT_WEIGHTS) -> float:
    return weights.combine(rate_bandwidth(props.bandwidth, max_bw), rate_latency(props.latency, max_ll))


@dataclass(frozen=True)
class QosConstraints:
    min_bandwidth: float
    max_latency: float
    max_cost: float


def make_constraints(
    min_bandwidth: float,
    max_latency: float,
    max_bw: float,
    max_ll: float,
    weights: CostWeights = DEFAULT_WEIGHTS,
) -> QosConstraints:
    return QosConstraints(
        min_bandwidth,
        max_latency,
        max_cost(min_bandwidth, max_latency, max_bw, max_ll, weights),
    )


def max_cost(
    min_bandwidth: float,
    max_latency: float,
    max_bw: float,
    max_ll: float,
    weights: CostWeights = DEFAULT_WEIGHTS,
) -> float:
    """Largest admissible per-link cost for a (minimum bandwidth, maximum latency) pair."""
    return link_cost(LinkProps(min_bandwidth, max_latency), max_bw, max_ll, weights)


def update_past_response(old: float, n_files: int, max_files: int) -> float:
    if not MIN_RATING <= old <= MAX_RATING:
        raise DomainError(f"past response {old!r} outside [1, 10]")
    return PAST_DECAY * old + PAST_GAIN * rate_files(n_files, max_files)


def final_hit_cost(accumulated_cost: float, past: float, weights: CostWeights = DEFAULT_WEIGHTS) -> float:
    return accumulated_cost + weights.w_past * past


class RankedHit(NamedTuple):
    rank: int
    final_cost: float
    num_files: int
    responder: NodeId


def hit_order_key(hit: Tuple[float, int, NodeId]) -> Tuple[float, int, NodeId]:
    final, files, responder = hit
    return (final, -files, responder)


def rank_hits(hits: Iterable[Tuple[float, int, NodeId]]) -> List[RankedHit]:
    """Sort hits by final cost, then more files first, then responder id; ranks from 1."""
    ordered = sorted((tuple(h) for h in hits), key=hit_order_key)
    return [RankedHit(i, cost, files, node) for i, (cost, files, node) in enumerate(ordered, 1)]


@dataclass
class CostModel:
    """Network-wide maxima plus weights; caches the 10x10 rating-pair cost table."""

    max_bw: float = 10.0
    max_ll: float = 100.0
    max_files: int = 50
    weights: CostWeights = DEFAULT_WEIGHTS
    _table: Sequence[Sequence[float]] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        if self.max_bw <= 0 or self.max_ll <= 0 or self.max_files < 1:
            raise DomainError("max_bw, max_ll and max_files must be positive")
        r = range(MIN_RATING, MAX_RATING + 1)
        self._table = tuple(tuple(self.weights.combine(b, l) for l in r) for b in r)

    def link_cost(self, props: LinkProps) -> float:
        b = rate_bandwidth(props.bandwidth, self.max_bw)
        l = rate_latency(props.latency, self.max_ll)
        return self._table[b - 1][l - 1]

    def constraints(self, min_bandwidth: float, max_latency: float) -> QosConstraints:
        return make_constraints(min_bandwidth, max_latency, self.max_bw, self.max_ll, self.weights)

    def laxest_constraints(self) -> QosConstraints:
        """Constraints every link satisfies (max_cost = 10 * (w_bandwidth + w_latency))."""
        return self.constraints(self.max_bw / 10, self.max_ll)

    def update_past(self, old: float, n_files: int) -> float:
        return update_past_response(old, n_files, self.max_files)

    def final_cost(self, accumulated_cost: float, past: float) -> float:
        return final_hit_cost(accumulated_cost, past, self.weights)
