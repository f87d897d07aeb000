import math

import pytest

from ettrace.builder import TraceBuilder
from ettrace.costmodel import Topology, TopologyKind, all_reduce_time, p2p_time
from ettrace.schema import CommType, ETNode, NodeType, Trace, make_attributes
from ettrace.simulator import (
    DeadlockError,
    SimConfig,
    TimingMode,
    compute_breakdown,
    run_simulation,
    sweep_bandwidth,
    sweep_npus,
    sweep_rows_to_csv,
)
from ettrace.validate import InvalidTraceError
from ettrace.viz import parse_timeline_csv

from conftest import random_dag_parents
from oracles import exposed_time_oracle, replay_oracle

ONE = Topology(TopologyKind.TORUS_2D, 1, 1, 62e9, 62e9)
PAIR = Topology(TopologyKind.TORUS_2D, 2, 1, 1e9, 1e9)


def cfg(topo=ONE, **kw):
    return SimConfig(topology=topo, **kw)


def chain_comp(n, runtime=5):
    b = TraceBuilder(0)
    prev = None
    for i in range(n):
        prev = b.comp(f"c{i}", runtime, parents=[prev] if prev is not None else [])
    return b.build()


def test_two_comp_chain_makespan_and_csv():
    result = run_simulation([chain_comp(2, runtime=5)], cfg())
    assert result.makespan == 10
    csv = result.timeline_csv()
    lines = csv.strip().splitlines()
    assert len(lines) == 4
    assert lines[0] == "issue,[0],[0],[1],[c0]"
    assert lines[1] == "callback,[0],[5],[1],[c0]"
    assert lines[2] == "issue,[0],[5],[2],[c1]"
    assert lines[3] == "callback,[0],[10],[2],[c1]"
    # the CSV parses back to the same rows
    assert parse_timeline_csv(csv) == result.timeline


def test_callbacks_precede_issues_at_same_cycle():
    result = run_simulation([chain_comp(3, runtime=4)], cfg())
    events = [(r.event, r.cycle) for r in result.timeline]
    assert events == [
        ("issue", 0), ("callback", 4), ("issue", 4),
        ("callback", 8), ("issue", 8), ("callback", 12),
    ]


def overlap_traces(serial):
    b = TraceBuilder(0)
    comp = b.comp("comp", 10)
    b.coll("comm", CommType.ALL_REDUCE, 1024, "g",
           parents=[comp] if serial else [], extra={"runtime": 6})
    return [b.build()]


def test_compute_comm_overlap_hides_comm():
    config = cfg(comm_timing=TimingMode.FROM_TRACE)
    result = run_simulation(overlap_traces(serial=False), config)
    assert result.makespan == 10
    stats = result.per_npu[0]
    assert stats.compute_busy == 10
    assert stats.comm_busy == 6
    assert stats.exposed_comm == 0


def test_serial_comm_is_fully_exposed():
    config = cfg(comm_timing=TimingMode.FROM_TRACE)
    result = run_simulation(overlap_traces(serial=True), config)
    assert result.makespan == 16
    stats = result.per_npu[0]
    assert stats.exposed_comm == 6
    assert stats.comm_busy == 6


def test_partial_overlap_matches_interval_oracle():
    # the single compute unit serializes the COMPs: [0,4) then [4,11);
    # comm chained on the first occupies [4, 10) and is fully hidden
    b = TraceBuilder(0)
    lead = b.comp("lead", 4)
    b.comp("long", 7, parents=[])
    b.coll("comm", CommType.ALL_REDUCE, 64, "g", parents=[lead], extra={"runtime": 6})
    result = run_simulation([b.build()], cfg(comm_timing=TimingMode.FROM_TRACE))
    stats = result.per_npu[0]
    want = exposed_time_oracle(comm=[(4, 10)], compute=[(0, 4), (4, 11)])
    assert stats.exposed_comm == want == 0
    # shorter trailing compute: comm [4,14) vs compute [0,6) leaves 8 exposed
    b = TraceBuilder(0)
    lead = b.comp("lead", 4)
    b.comp("long", 2, parents=[])
    b.coll("comm", CommType.ALL_REDUCE, 64, "g", parents=[lead], extra={"runtime": 10})
    result = run_simulation([b.build()], cfg(comm_timing=TimingMode.FROM_TRACE))
    assert result.per_npu[0].exposed_comm == exposed_time_oracle([(4, 14)], [(0, 4), (4, 6)]) == 8


def test_collective_rendezvous_waits_for_last_arrival():
    b0 = TraceBuilder(0)
    b0.coll("ar", CommType.ALL_REDUCE, 1000, "g")
    b1 = TraceBuilder(1)
    lead = b1.comp("warmup", 7)
    b1.coll("ar", CommType.ALL_REDUCE, 2000, "g", parents=[lead])
    result = run_simulation([b0.build(), b1.build()], cfg(PAIR))
    # payload is the max across members; both spans identical
    dur = math.ceil(all_reduce_time(2000, 2, 1e9) / 1e-9)
    assert result.node_spans[(0, 1)] == (7, 7 + dur)
    assert result.node_spans[(1, 2)] == (7, 7 + dur)
    assert result.makespan == 7 + dur


def test_collective_participants_are_groupwise():
    # rank 2 never uses group "g", so it must not block the rendezvous
    b0 = TraceBuilder(0)
    b0.coll("ar", CommType.ALL_REDUCE, 1000, "g")
    b1 = TraceBuilder(1)
    b1.coll("ar", CommType.ALL_REDUCE, 1000, "g")
    b2 = TraceBuilder(2)
    b2.comp("alone", 3)
    result = run_simulation(
        [b0.build(), b1.build(), b2.build()],
        cfg(Topology(TopologyKind.TORUS_2D, 3, 1, 1e9, 1e9)),
    )
    assert result.node_spans[(0, 1)][0] == 0


def test_mismatched_collective_order_deadlocks_naming_nodes():
    b0 = TraceBuilder(0)
    first = b0.coll("A", CommType.ALL_REDUCE, 64, "g")
    b0.coll("B", CommType.ALL_GATHER, 64, "g", parents=[first])
    b1 = TraceBuilder(1)
    first = b1.coll("B", CommType.ALL_GATHER, 64, "g")
    b1.coll("A", CommType.ALL_REDUCE, 64, "g", parents=[first])
    with pytest.raises(DeadlockError) as err:
        run_simulation([b0.build(), b1.build()], cfg(PAIR))
    message = str(err.value)
    assert "'A'" in message and "'B'" in message
    stuck_names = {s.name for s in err.value.stuck}
    assert stuck_names == {"A", "B"}


def test_unmatched_p2p_deadlocks():
    b0 = TraceBuilder(0)
    b0.send("lonely", 64, comm_peer=1)
    b1 = TraceBuilder(1)
    b1.comp("busy", 2)
    with pytest.raises(DeadlockError, match="lonely"):
        run_simulation([b0.build(), b1.build()], cfg(PAIR))


def test_p2p_pair_transfers_with_model_timing():
    b0 = TraceBuilder(0)
    b0.send("s", 1000, comm_peer=1)
    b1 = TraceBuilder(1)
    lead = b1.comp("warmup", 3)
    b1.recv("r", 1000, comm_peer=0, parents=[lead])
    result = run_simulation([b0.build(), b1.build()], cfg(PAIR))
    dur = math.ceil(p2p_time(1000, 0, 1, PAIR) / 1e-9)
    assert dur == 1000
    assert result.node_spans[(0, 1)] == (3, 3 + dur)
    assert result.node_spans[(1, 2)] == (3, 3 + dur)


def test_p2p_tag_pairing_matches_out_of_order_tags():
    # both sides chain their ops in the same order but tags disambiguate sizes
    b0 = TraceBuilder(0)
    s1 = b0.send("s_small", 1000, comm_peer=1, tag=1)
    b0.send("s_big", 9000, comm_peer=1, parents=[s1], tag=2)
    b1 = TraceBuilder(1)
    r1 = b1.recv("r_small", 1000, comm_peer=0, tag=1)
    b1.recv("r_big", 9000, comm_peer=0, parents=[r1], tag=2)
    result = run_simulation([b0.build(), b1.build()], cfg(PAIR))
    assert result.node_spans[(0, 1)][1] - result.node_spans[(0, 1)][0] == 1000
    assert result.node_spans[(0, 2)][1] - result.node_spans[(0, 2)][0] == 9000


def test_p2p_untagged_pairs_kth_send_with_kth_recv():
    b0 = TraceBuilder(0)
    s1 = b0.send("s1", 1000, comm_peer=1)
    b0.send("s2", 5000, comm_peer=1, parents=[s1])
    b1 = TraceBuilder(1)
    r1 = b1.recv("r1", 1000, comm_peer=0)
    b1.recv("r2", 5000, comm_peer=0, parents=[r1])
    result = run_simulation([b0.build(), b1.build()], cfg(PAIR))
    assert result.node_spans[(0, 1)] == (0, 1000)
    assert result.node_spans[(0, 2)] == (1000, 6000)


def test_invalid_nodes_are_skipped_but_preserved_in_deps():
    b = TraceBuilder(0)
    a = b.comp("a", 5)
    ghost = b.add_node(NodeType.INVALID, "ghost", parents=[a])
    b.comp("c", 5, parents=[ghost])
    result = run_simulation([b.build()], cfg())
    assert result.makespan == 10
    names = [r.node_name for r in result.timeline]
    assert "ghost" not in names
    assert len(result.timeline) == 4


def test_model_compute_timing_uses_num_ops():
    b = TraceBuilder(0)
    b.add_node(NodeType.COMP, "mm", {"num_ops": 5000})
    config = cfg(
        compute_timing=TimingMode.MODEL, compute_rate=1e6, cycle_time=1e-3
    )
    result = run_simulation([b.build()], config)
    assert result.makespan == 5  # ceil(5000 ops / 1e6 ops/s / 1e-3 s/cycle)


def test_model_compute_falls_back_to_runtime():
    b = TraceBuilder(0)
    b.comp("mm", 42)
    result = run_simulation([b.build()], cfg(compute_timing=TimingMode.MODEL))
    assert result.makespan == 42


def test_memory_nodes_use_mem_bandwidth():
    b = TraceBuilder(0)
    b.add_node(NodeType.MEM_LOAD, "ld", {"tensor_size": 4096})
    result = run_simulation([b.build()], cfg(mem_bandwidth=1e12))
    assert result.makespan == math.ceil(4096 / 1e12 / 1e-9)
    assert result.per_npu[0].mem_busy == result.makespan


def test_prescan_names_offending_node():
    bad = Trace(0, (ETNode(3, "naked", NodeType.COMP),))
    with pytest.raises(ValueError, match="npu 0 node 3"):
        run_simulation([bad], cfg(), validate=False)


def test_validation_refusal():
    bad = Trace(0, (ETNode(1, "n", NodeType.COMP, parents=(9,)),))
    with pytest.raises(InvalidTraceError):
        run_simulation([bad], cfg())


def test_memory_compute_network_run_in_parallel():
    b = TraceBuilder(0)
    b.add_node(NodeType.MEM_LOAD, "ld", {"runtime": 8})
    b.comp("mm", 8)
    b.coll("ar", CommType.ALL_REDUCE, 64, "g", extra={"runtime": 8})
    result = run_simulation([b.build()], cfg(comm_timing=TimingMode.FROM_TRACE))
    assert result.makespan == 8  # three classes, one node each, all concurrent


def test_single_class_serializes():
    b = TraceBuilder(0)
    b.comp("a", 5)
    b.comp("b", 5)
    result = run_simulation([b.build()], cfg())
    assert result.makespan == 10  # one COMPUTE unit: no parallel COMP


def test_determinism_byte_identical_csv():
    from ettrace.workloads import Parallelism, WorkloadSpec, generate_workload

    spec = WorkloadSpec(npus=4, parallelism=Parallelism.DP_MP, layers=3)
    topo = Topology(TopologyKind.TORUS_2D, 2, 2, 31e9, 31e9)
    csvs = {
        run_simulation(generate_workload(spec), cfg(topo)).timeline_csv() for _ in range(3)
    }
    assert len(csvs) == 1


def test_every_node_gets_exactly_one_issue_and_callback(rng):
    for _ in range(30):
        parents_map = random_dag_parents(rng, rng.randint(1, 15))
        b = TraceBuilder(0)
        ids = {}
        for nid in sorted(parents_map):
            ids[nid] = b.comp(f"n{nid}", rng.randint(1, 9), parents=[ids[p] for p in sorted(parents_map[nid])])
        result = run_simulation([b.build()], cfg())
        issues = [r for r in result.timeline if r.event == "issue"]
        callbacks = [r for r in result.timeline if r.event == "callback"]
        assert len(issues) == len(callbacks) == len(parents_map)
        starts = {r.node_id: r.cycle for r in issues}
        for r in callbacks:
            assert r.cycle >= starts[r.node_id]
        # causality: a node never starts before all its parents finished
        finishes = {r.node_id: r.cycle for r in callbacks}
        for nid, ps in parents_map.items():
            for p in ps:
                assert starts[ids[nid]] >= finishes[ids[p]]


def test_single_npu_against_cycle_stepping_oracle(rng):
    for _ in range(60):
        n = rng.randint(1, 8)
        parents_map = random_dag_parents(rng, n, edge_prob=0.45)
        b = TraceBuilder(0)
        ids = {}
        oracle_nodes = {}
        for nid in sorted(parents_map):
            node_type = rng.choice([NodeType.COMP, NodeType.MEM_LOAD, NodeType.MEM_STORE])
            duration = rng.randint(1, 20)
            parents = [ids[p] for p in sorted(parents_map[nid])]
            ids[nid] = b.add_node(node_type, f"n{nid}", {"runtime": duration}, parents)
            cls = "compute" if node_type is NodeType.COMP else "memory"
            oracle_nodes[ids[nid]] = (cls, duration, set(parents))
        result = run_simulation([b.build()], cfg())
        want_makespan, want_spans = replay_oracle(oracle_nodes)
        assert result.makespan == want_makespan
        assert {k[1]: v for k, v in result.node_spans.items()} == want_spans


def test_compute_breakdown_table():
    result = run_simulation(overlap_traces(serial=True), cfg(comm_timing=TimingMode.FROM_TRACE))
    assert compute_breakdown(result) == [{"npu_id": 0, "compute": 10, "exposed_comm": 6}]


def test_sweep_npus_rows():
    rows = sweep_npus("mlp-dp", [1, 4], TopologyKind.TORUS_2D, 62e9)
    assert [r["npus"] for r in rows] == [1, 4]
    assert rows[0]["perf_norm"] == 1.0
    assert rows[0]["dims"] == "1x1"
    assert all(r["makespan_cycles"] > 0 for r in rows)
    csv = sweep_rows_to_csv(rows)
    header = csv.splitlines()[0]
    assert header == "preset,npus,dims,makespan_cycles,perf_norm,exposed_share"
    assert len(csv.splitlines()) == 3


def test_sweep_bandwidth_rows():
    rows = sweep_bandwidth("mlp-dp", 4, "torus2d", [31e9, 62e9])
    assert [(r["bw1"], r["bw2"]) for r in rows] == [(31e9, 31e9), (62e9, 62e9)]
    assert rows[0]["makespan_cycles"] >= rows[1]["makespan_cycles"]
    assert sweep_rows_to_csv([]) == ""


def test_empty_workload():
    result = run_simulation([], cfg())
    assert result.makespan == 0
    assert result.timeline == []
