"""TTL sweeps over both strategies and their CSV tables."""

from __future__ import annotations

import csv
import io
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields
from pathlib import Path
from statistics import mean
from typing import Dict, List, Sequence, Tuple, Union

from .config import SimConfig
from .engine import run_simulation
from .errors import ConfigError
from .protocol import Strategy
from .trace import RunMetrics, classify_unwanted  # noqa: F401  (re-exported)

CSV_HEADER = [
    "ttl",
    "strategy",
    "seed",
    "queries",
    "messages",
    "hits",
    "unwanted_hits",
    "lost_hits",
    "avg_messages_per_query",
    "avg_hits_per_query",
]


@dataclass(frozen=True)
class SweepSpec:
    ttl_range: Tuple[int, int] = (1, 5)
    strategies: Tuple[str, ...] = ("qos", "flooding")
    seeds: Tuple[int, ...] = (1,)
    base: SimConfig = field(default_factory=SimConfig)

    def validate(self) -> "SweepSpec":
        lo, hi = self.ttl_range
        if not 1 <= lo <= hi:
            raise ConfigError(f"ttl range must satisfy 1 <= lo <= hi, got {self.ttl_range}")
        if not self.strategies or not self.seeds:
            raise ConfigError("a sweep needs at least one strategy and one seed")
        for s in self.strategies:
            try:
                Strategy.parse(s)
            except ValueError as exc:
                raise ConfigError(str(exc)) from None
        self.base.validate()
        return self

    def cells(self) -> List[SimConfig]:
        lo, hi = self.ttl_range
        strategies = [Strategy.parse(s).value for s in self.strategies]
        return [
            self.base.replace(ttl=ttl, strategy=s, seed=seed)
            for ttl in range(lo, hi + 1)
            for s in strategies
            for seed in self.seeds
        ]


def _run_cell(config: SimConfig) -> RunMetrics:
    return run_simulation(config, keep_trace=False).metrics


def run_sweep(spec: SweepSpec, jobs: int = 1) -> List[RunMetrics]:
    """One RunMetrics row per (ttl, strategy, seed), ordered by that triple."""
    spec.validate()
    cells = spec.cells()
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_run_cell, cells))
    else:
        rows = [_run_cell(c) for c in cells]
    order = {Strategy.parse(s).value: i for i, s in enumerate(spec.strategies)}
    return sorted(rows, key=lambda r: (r.ttl, order[r.strategy], r.seed))


@dataclass(frozen=True)
class SummaryRow:
    ttl: int
    strategy: str
    seeds: int
    messages: float
    hits: float
    unwanted_hits: float
    lost_hits: float
    avg_messages_per_query: float
    avg_hits_per_query: float
    avg_unwanted_per_query: float


def _avg(values) -> float:
    return float(mean(values))


def aggregate(rows: Sequence[RunMetrics]) -> List[SummaryRow]:
    """Mean over seeds for every (ttl, strategy), first-seen order preserved."""
    groups: Dict[Tuple[int, str], List[RunMetrics]] = {}
    for r in rows:
        groups.setdefault((r.ttl, r.strategy), []).append(r)
    out = []
    for (ttl, strategy), grp in groups.items():
        out.append(
            SummaryRow(
                ttl,
                strategy,
                len(grp),
                _avg(r.messages for r in grp),
                _avg(r.hits for r in grp),
                _avg(r.unwanted_hits for r in grp),
                _avg(r.lost_hits for r in grp),
                _avg(r.avg_messages_per_query for r in grp),
                _avg(r.avg_hits_per_query for r in grp),
                _avg(r.unwanted_hits / r.queries if r.queries else 0.0 for r in grp),
            )
        )
    return out


def _fmt(value) -> str:
    return f"{value:.4f}" if isinstance(value, float) else str(value)


def format_csv(rows: Sequence[RunMetrics]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for r in rows:
        w.writerow(
            _fmt(v)
            for v in (
                r.ttl,
                r.strategy,
                r.seed,
                r.queries,
                r.messages,
                r.hits,
                r.unwanted_hits,
                r.lost_hits,
                r.avg_messages_per_query,
                r.avg_hits_per_query,
            )
        )
    return buf.getvalue()


def emit_csv(rows: Sequence[RunMetrics], path: Union[str, Path]) -> Path:
    if not rows:
        raise ValueError("no metrics rows to write")
    path = Path(path)
    path.write_text(format_csv(rows))
    return path


def read_csv(path: Union[str, Path]) -> List[RunMetrics]:
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != CSV_HEADER:
            raise ValueError(f"unexpected header {reader.fieldnames}")
        return [
            RunMetrics(
                int(d["ttl"]),
                d["strategy"],
                int(d["seed"]),
                int(d["queries"]),
                int(d["messages"]),
                int(d["hits"]),
                int(d["unwanted_hits"]),
                int(d["lost_hits"]),
            )
            for d in reader
        ]


FIGURES = {
    "messages": "avg_messages_per_query",
    "hits": "avg_hits_per_query",
    "unwanted": "avg_unwanted_per_query",
}


def figure_tables(summary: Sequence[SummaryRow]) -> Dict[str, str]:
    """Per-figure CSV text: one row per ttl, one column per strategy."""
    strategies = list(dict.fromkeys(r.strategy for r in summary))
    ttls = sorted({r.ttl for r in summary})
    by_key = {(r.ttl, r.strategy): r for r in summary}
    tables = {}
    for name, attr in FIGURES.items():
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["ttl", *strategies])
        for ttl in ttls:
            w.writerow([ttl, *(_fmt(float(getattr(by_key[(ttl, s)], attr))) for s in strategies)])
        tables[name] = buf.getvalue()
    return tables


SUMMARY_HEADER = [f.name for f in fields(SummaryRow)]


def format_summary(summary: Sequence[SummaryRow]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SUMMARY_HEADER)
    for r in summary:
        w.writerow(_fmt(getattr(r, name)) for name in SUMMARY_HEADER)
    return buf.getvalue()


def write_sweep(rows: Sequence[RunMetrics], out_dir: Union[str, Path]) -> List[Path]:
    """metrics.csv (per seed), summary.csv (mean over seeds) and one CSV per figure."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    summary = aggregate(rows)
    written = [emit_csv(rows, out / "metrics.csv")]
    (out / "summary.csv").write_text(format_summary(summary))
    written.append(out / "summary.csv")
    for name, text in figure_tables(summary).items():
        p = out / f"{name}.csv"
        p.write_text(text)
        written.append(p)
    return written
