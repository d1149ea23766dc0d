"""Discrete-event simulator of QoS-constrained lookup in unstructured P2P overlays."""

from .config import SimConfig, load_config
from .cost import (
    CostModel,
    CostWeights,
    QosConstraints,
    final_hit_cost,
    link_cost,
    max_cost,
    rank_hits,
    rate_bandwidth,
    rate_files,
    rate_latency,
    update_past_response,
)
from .engine import ChurnModel, Simulator, apply_churn, run_simulation
from .errors import BrokenPath, ConfigError, DomainError, TraceError, UnknownNeighbor, UnknownNode
from .experiments import SweepSpec, emit_csv, read_csv, run_sweep
from .protocol import NodeState, QueryHitMessage, QueryMessage, Strategy, process_query, route_hit
from .topology import LinkProps, Topology, generate_topology, place_objects, rerandomize_bandwidths
from .trace import RunMetrics, classify_unwanted

__version__ = "0.1.0"
