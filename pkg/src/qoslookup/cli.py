"""Command-line entry point: ``sweep``, ``run`` and ``fig2``."""

from __future__ import annotations

import argparse
import logging
import sys
from pathlib import Path
from typing import List, Optional

from . import scenarios
from .config import SimConfig, load_config
from .engine import run_simulation
from .errors import ConfigError
from .experiments import SweepSpec, run_sweep, write_sweep
from .protocol import Strategy
from .trace import write_trace

EXIT_CONFIG = 2


def _int_list(text: str) -> List[int]:
    try:
        return [int(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _base_config(args) -> SimConfig:
    cfg = load_config(args.config) if args.config else SimConfig()
    if getattr(args, "queries", None) is not None:
        cfg = cfg.replace(queries_per_run=args.queries)
    return cfg


def _cmd_sweep(args) -> int:
    base = _base_config(args)
    strategies = tuple(s.strip() for s in args.strategies.split(",") if s.strip())
    seeds = tuple(args.seeds) if args.seeds else (base.seed,)
    spec = SweepSpec((args.ttl_min, args.ttl_max), strategies, seeds, base)
    rows = run_sweep(spec, jobs=args.jobs)
    for path in write_sweep(rows, args.out):
        print(path)
    return 0


def _cmd_run(args) -> int:
    cfg = _base_config(args)
    changes = {}
    if args.ttl is not None:
        changes["ttl"] = args.ttl
    if args.strategy is not None:
        changes["strategy"] = args.strategy
    if args.seed is not None:
        changes["seed"] = args.seed
    cfg = cfg.replace(**changes).validate()
    result = run_simulation(cfg, keep_trace=args.trace is not None)
    if args.trace:
        with open(args.trace, "w") as f:
            write_trace(result.trace, f)
    m = result.metrics
    print(
        f"ttl={m.ttl} strategy={m.strategy} seed={m.seed} queries={m.queries} "
        f"messages={m.messages} hits={m.hits} unwanted_hits={m.unwanted_hits} lost_hits={m.lost_hits} "
        f"avg_messages_per_query={m.avg_messages_per_query:.4f} avg_hits_per_query={m.avg_hits_per_query:.4f}"
    )
    return 0


def _cmd_fig2(args) -> int:
    try:
        strategy = Strategy.parse(args.strategy)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    sim, mid = scenarios.run_fig2(strategy)
    print(f"max cost: {sim.model.constraints(scenarios.MIN_BANDWIDTH, scenarios.MAX_LATENCY).max_cost:.2f}")
    scored = {h.responder: h for h in sim.outcomes[mid].hits}
    print("rank  peer  files  route_cost  past_response  final_cost")
    for r in sim.ranked(mid):
        h = scored[r.responder]
        print(
            f"{r.rank:>4}  {scenarios.NAMES[r.responder]:>4}  {h.num_files:>5}  "
            f"{h.accumulated_cost:>10.2f}  {h.past_response:>13.2f}  {h.final_cost:>10.2f}"
        )
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="qoslookup", description="QoS-constrained P2P lookup simulator")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    sw = sub.add_parser("sweep", help="TTL sweep over strategies and seeds, written as CSV")
    sw.add_argument("--config", type=Path)
    sw.add_argument("--ttl-min", type=int, default=1)
    sw.add_argument("--ttl-max", type=int, default=5)
    sw.add_argument("--strategies", default="qos,flooding")
    sw.add_argument("--seeds", type=_int_list)
    sw.add_argument("--queries", type=int)
    sw.add_argument("--jobs", type=int, default=1)
    sw.add_argument("--out", type=Path, required=True)
    sw.set_defaults(func=_cmd_sweep)

    run = sub.add_parser("run", help="single (ttl, strategy, seed) cell")
    run.add_argument("--config", type=Path)
    run.add_argument("--ttl", type=int)
    run.add_argument("--strategy")
    run.add_argument("--seed", type=int)
    run.add_argument("--queries", type=int)
    run.add_argument("--trace", type=Path, help="write the tab-separated event log here")
    run.set_defaults(func=_cmd_run)

    fig = sub.add_parser("fig2", help="run the built-in eight-peer scenario and print the ranking")
    fig.add_argument("--strategy", default="qos")
    fig.set_defaults(func=_cmd_fig2)
    return parser


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
