import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from qoslookup import scenarios
from qoslookup import trace as tr
from qoslookup.config import config_from_mapping, load_config
from qoslookup.cost import CostModel, QosConstraints
from qoslookup.engine import ChurnEvent, ChurnModel, EventKind, Simulator, apply_churn, run_simulation
from qoslookup.errors import ConfigError, UnknownNode
from qoslookup.protocol import Strategy
from qoslookup.topology import LinkProps, generate_topology

from conftest import make_topology, small_config
from replay import check_conservation, check_cost_replay, check_path_lengths, duplicate_processing

FLOOD, QOS = Strategy.FLOODING, Strategy.QOS_ADAPTIVE


def kinds(trace, kind):
    return [r for r in trace if r.kind == kind]


def test_zero_queries_gives_empty_trace():
    result = run_simulation(small_config(queries_per_run=0))
    assert result.trace == []
    m = result.metrics
    assert (m.queries, m.messages, m.hits, m.unwanted_hits, m.lost_hits) == (0, 0, 0, 0, 0)
    assert m.avg_messages_per_query == 0.0


def test_same_seed_same_trace():
    cfg = small_config(queries_per_run=15, strategy="flooding")
    a = run_simulation(cfg)
    b = run_simulation(cfg)
    assert tr.trace_digest(a.trace) == tr.trace_digest(b.trace)
    assert a.metrics == b.metrics
    c = run_simulation(cfg.replace(seed=8))
    assert tr.trace_digest(c.trace) != tr.trace_digest(a.trace)


def test_trace_round_trips_through_text(tmp_path):
    result = run_simulation(small_config(queries_per_run=5))
    path = tmp_path / "t.tsv"
    with open(path, "w") as f:
        tr.write_trace(result.trace, f)
    with open(path) as f:
        again = tr.read_trace(f)
    assert again == result.trace
    assert all(len(line.split("\t")) == 7 for line in path.read_text().splitlines())


def test_invalid_config_raises():
    with pytest.raises(ConfigError):
        run_simulation(small_config(ttl=0))
    with pytest.raises(ConfigError):
        run_simulation(small_config(w_past=0.5))


@pytest.mark.parametrize("strategy", ["qos", "flooding"])
def test_conservation_and_replay(strategy):
    cfg = small_config(queries_per_run=25, strategy=strategy, ttl=4)
    topo = generate_topology(cfg, random.Random(5))
    result = run_simulation(cfg, topology=topo)
    check_conservation(result.trace)
    assert kinds(result.trace, tr.HIT_LOST) == []
    assert duplicate_processing(result.trace) == []
    check_path_lengths(result.trace)
    assert result.metrics.queries == 25


def test_delivery_time_is_forward_time_plus_latency():
    cfg = small_config(queries_per_run=20, strategy="flooding", ttl=4)
    topo = generate_topology(cfg, random.Random(5))
    result = run_simulation(cfg, topology=topo)
    sent = {}
    for r in result.trace:
        if r.kind == tr.FORWARD:
            sent[(r.node, r.int_field("to"), r.message_id)] = r.time
        elif r.kind == tr.DELIVER_QUERY:
            u = r.int_field("from")
            assert r.time == sent[(u, r.node, r.message_id)] + topo.link(u, r.node).latency
    assert sent
    per_query = {}
    for r in result.trace:
        if r.message_id != tr.NO_MESSAGE:
            per_query.setdefault(r.message_id, []).append(r.time)
    assert all(ts == sorted(ts) for ts in per_query.values())


def test_events_processed_in_time_then_seq_order():
    sim = Simulator(make_topology([(0, 1, 5, 5)]), CostModel(), FLOOD)
    order = []
    sim._handlers[EventKind.PROBE_TICK] = lambda ev: order.append(ev.payload)
    sim.schedule(5, EventKind.PROBE_TICK, "b")
    sim.schedule(1, EventKind.PROBE_TICK, "a")
    sim.schedule(5, EventKind.PROBE_TICK, "c")
    sim.schedule(0, EventKind.PROBE_TICK, "first")
    sim.run()
    assert order == ["first", "a", "b", "c"]
    with pytest.raises(ValueError):
        sim.schedule(-1, EventKind.PROBE_TICK)


def test_run_until_stops_early():
    sim = Simulator(make_topology([(0, 1, 5, 5)]), CostModel(), FLOOD)
    for t in (1, 2, 3):
        sim.schedule(t, EventKind.PROBE_TICK)
    sim.run(until=2)
    assert sim.pending() == 1 and sim.now == 2


# -- inject_query -----------------------------------------------------------------


def test_fig2_hits_exactly_f_and_h():
    sim, mid = scenarios.run_fig2()
    responders = {r.int_field("responder") for r in kinds(sim.trace, tr.HIT_DELIVERED)}
    assert responders == {scenarios.F, scenarios.H}
    forwards = {(r.node, r.int_field("to")) for r in kinds(sim.trace, tr.FORWARD)}
    assert (scenarios.A, scenarios.C) in forwards
    assert (scenarios.A, scenarios.B) not in forwards
    ranked = sim.ranked(mid)
    assert [r.responder for r in ranked] == [scenarios.H, scenarios.F]


def test_fig2_flooding_reaches_more_peers():
    sim, mid = scenarios.run_fig2(FLOOD)
    assert (scenarios.A, scenarios.B) in {(r.node, r.int_field("to")) for r in kinds(sim.trace, tr.FORWARD)}


def test_requester_holding_object_gets_self_hit():
    topo = make_topology([(0, 1, 9, 5), (1, 2, 9, 5)], {0: [3], 2: [3]})
    sim = Simulator(topo, CostModel(), FLOOD)
    mid = sim.inject_query(0, 3, CostModel().constraints(1, 100), 3)
    sim.run()
    assert [r.kind for r in sim.trace] == [tr.QUERY_START, tr.SELF_HIT]
    ranked = sim.ranked(mid)
    assert ranked[0].rank == 1 and ranked[0].final_cost == 0.0 and ranked[0].responder == 0


def test_below_minimum_cost_means_no_forwards():
    topo = generate_topology(small_config(), random.Random(2))
    sim = Simulator(topo, CostModel(), QOS)
    sim.inject_query(0, 1, QosConstraints(10, 1, 0.84), 5)
    sim.run()
    assert kinds(sim.trace, tr.FORWARD) == []


def test_unknown_requester():
    sim = Simulator(make_topology([(0, 1, 5, 5)]), CostModel(), FLOOD)
    with pytest.raises(UnknownNode):
        sim.inject_query(7, 0, CostModel().constraints(2, 20), 3)


def test_unwanted_hits_never_exceed_hits():
    m = run_simulation(small_config(queries_per_run=30, strategy="flooding", ttl=4)).metrics
    assert 0 < m.unwanted_hits <= m.hits


# -- churn ----------------------------------------------------------------------------


def line_scenario():
    """A-B-C-D with 10 ms links; D holds the object."""
    return make_topology([(0, 1, 9, 10), (1, 2, 9, 10), (2, 3, 9, 10)], {3: [0]})


def test_departure_on_reverse_path_loses_the_hit():
    sim = Simulator(line_scenario(), CostModel(), FLOOD)
    sim.inject_query(0, 0, CostModel().constraints(1, 100), 3)
    # hit leaves D at t=30, reaches C at 40 and would reach B at 50
    sim.schedule_leave(1, delay=45)
    sim.run()
    check_conservation(sim.trace)
    assert [(r.node, r.time) for r in kinds(sim.trace, tr.HIT_LOST)] == [(1, 50.0)]
    assert kinds(sim.trace, tr.HIT_DELIVERED) == []
    assert 1 not in sim.topology.adjacency


def test_departure_after_delivery_loses_nothing():
    sim = Simulator(line_scenario(), CostModel(), FLOOD)
    sim.inject_query(0, 0, CostModel().constraints(1, 100), 3)
    sim.schedule_leave(1, delay=75)
    sim.run()
    assert kinds(sim.trace, tr.HIT_LOST) == []
    assert len(kinds(sim.trace, tr.HIT_DELIVERED)) == 1


def star_scenario(relays, extras):
    """Requester 0; relay i links holder 100+i; extra leaves 200+j hold nothing."""
    edges = []
    inventory = {}
    for i in range(1, relays + 1):
        edges += [(0, i, 9, 10), (i, 100 + i, 9, 10)]
        inventory[100 + i] = [0]
    for j in range(extras):
        edges.append((0, 200 + j, 9, 10))
    return make_topology(edges, inventory)


@settings(max_examples=40, deadline=None)
@given(relays=st.integers(1, 8), extras=st.integers(0, 4), data=st.data())
def test_lost_hits_equal_departures_on_active_paths(relays, extras, data):
    on_path = data.draw(st.sets(st.integers(1, relays)))
    off_path = data.draw(st.sets(st.integers(200, 200 + extras - 1))) if extras else set()
    sim = Simulator(star_scenario(relays, extras), CostModel(), FLOOD)
    sim.inject_query(0, 0, CostModel().constraints(1, 100), 2)
    # hits are at the holders from t=20 and cross the relays at t=30
    for node in sorted(on_path | off_path):
        sim.schedule_leave(node, delay=25)
    sim.run()
    check_conservation(sim.trace)
    assert len(kinds(sim.trace, tr.HIT_LOST)) == len(on_path)
    assert len(kinds(sim.trace, tr.HIT_DELIVERED)) == relays - len(on_path)


def test_join_then_probe_makes_new_node_reachable():
    topo = make_topology([(0, 1, 9, 10)])
    model = CostModel()
    sim = Simulator(topo, model, QOS)
    sim.schedule_churn([ChurnEvent("join", 2, {1: LinkProps(9.5, 5)}, frozenset({4}))])
    sim.run()
    assert 2 in sim.states and 2 not in sim.states[1].neighbors
    c = model.constraints(2, 20)
    sim.new_epoch()
    sim.inject_query(0, 4, c, 3)
    sim.run()
    assert kinds(sim.trace, tr.HIT_DELIVERED) == []

    sim.schedule_probe()
    sim.run()
    assert sim.states[1].neighbors[2] == LinkProps(9.5, 5)
    sim.new_epoch()
    sim.inject_query(0, 4, c, 3)
    sim.run()
    assert (1, 2) in {(r.node, r.int_field("to")) for r in kinds(sim.trace, tr.FORWARD)}
    assert [r.int_field("responder") for r in kinds(sim.trace, tr.HIT_DELIVERED)] == [2]


def test_no_churn_leaves_topology_unchanged():
    topo = generate_topology(small_config(), random.Random(1))
    out, events = apply_churn(topo, ChurnModel(0, 0, seed=1), random.Random(3))
    assert events == [] and out.dumps() == topo.dumps()
    assert out is not topo


@settings(max_examples=30, deadline=None)
@given(leave=st.floats(0, 6), join=st.floats(0, 6), seed=st.integers(0, 1000))
def test_churn_events_replay_to_returned_topology(leave, join, seed):
    topo = generate_topology(small_config(node_count=20, deg_max=6), random.Random(seed))
    churn = ChurnModel(leave, join, seed, deg_min=2, deg_max=6, object_count=20, max_objects_per_peer=6)
    out, events = apply_churn(topo, churn, random.Random(seed))
    replay = topo.copy()
    for ev in events:
        if ev.kind == "leave":
            replay.remove_node(ev.node)
        else:
            assert 2 <= len(ev.links) <= 6
            replay.add_node(ev.node, ev.links, ev.inventory)
    assert replay.dumps() == out.dumps()
    assert len(out) >= 2
    # departed ids are never reused
    joined = [ev.node for ev in events if ev.kind == "join"]
    assert not set(joined) & set(topo.nodes)


def test_churn_never_drops_below_two_nodes():
    topo = make_topology([(0, 1, 5, 5), (1, 2, 5, 5)])
    out, _ = apply_churn(topo, ChurnModel(50, 0, seed=0), random.Random(0))
    assert len(out) == 2


def test_simulation_with_churn_runs_and_conserves():
    cfg = small_config(queries_per_run=30, leave_rate=1.5, join_rate=1.5, strategy="flooding")
    result = run_simulation(cfg)
    check_conservation(result.trace)
    assert kinds(result.trace, tr.NODE_LEAVE) and kinds(result.trace, tr.NODE_JOIN)
    # churn between epochs never cuts an in-flight reverse path
    assert result.metrics.lost_hits == 0
    assert tr.trace_digest(result.trace) == tr.trace_digest(run_simulation(cfg).trace)


def test_probe_period_controls_probe_ticks():
    every = run_simulation(small_config(queries_per_run=6))
    third = run_simulation(small_config(queries_per_run=6, probe_period=3))
    assert len(kinds(every.trace, tr.PROBE_TICK)) == 6
    assert len(kinds(third.trace, tr.PROBE_TICK)) == 2


def test_cost_replay_on_engine_run():
    model = CostModel()
    topo = generate_topology(small_config(), random.Random(4))
    sim = Simulator(topo, model, QOS)
    c = model.constraints(2, 30)
    for k in range(5):
        sim.new_epoch()
        sim.inject_query(k, k, c, 4)
        sim.run()
    check_cost_replay(sim.trace, sim.snapshots, model, c.max_cost)


# -- config -----------------------------------------------------------------------------


def test_load_config_flat_yaml(tmp_path):
    p = tmp_path / "c.yaml"
    p.write_text("node_count: 120\nttl: 3\nstrategy: flooding\nmin_bandwidth: 4\nw_bandwidth: 0.6\nw_latency: 0.25\n")
    cfg = load_config(p)
    assert cfg.node_count == 120 and cfg.ttl == 3 and cfg.strategy == "flooding"
    assert cfg.min_bandwidth == 4.0 and isinstance(cfg.min_bandwidth, float)
    assert cfg.deg_avg == 6.0


@pytest.mark.parametrize(
    "text",
    [
        "nodes: 3\n",
        "ttl: 0\n",
        "ttl: 2.5\n",
        "ttl: [1, 2]\n",
        "- a\n- b\n",
        "strategy: gossip\n",
        "w_past: 0.3\n",
        "min_bandwidth: 20\n",
        "ttl: : :\n",
    ],
)
def test_bad_config_files(tmp_path, text):
    p = tmp_path / "c.yaml"
    p.write_text(text)
    with pytest.raises(ConfigError):
        load_config(p)


def test_missing_config_file(tmp_path):
    with pytest.raises(ConfigError):
        load_config(tmp_path / "nope.yaml")


def test_config_mapping_round_trip():
    cfg = small_config(strategy="flooding", leave_rate=0.5)
    assert config_from_mapping(cfg.to_dict()) == cfg
