"""Deterministic replay of per-NPU traces over a modeled machine.

Each NPU owns three resource classes (memory, compute, network); one node of
each class may be in flight at a time and further ready nodes of a busy class
wait FIFO. Collectives rendezvous: the k-th collective a rank issues in a
communicator matches the k-th of every other member, the transfer starts when
the last member arrives, and all members finish on the same cycle. SEND/RECV
pair up by explicit tag (or arrival order per directed rank pair) and also
complete simultaneously. The event loop is integer-cycle and fully
deterministic: identical inputs produce byte-identical timelines.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

from . import costmodel
from .costmodel import Topology
from .feeder import Feeder
from .schema import (
    ATTR_COMM_GROUP,
    ATTR_COMM_PEER,
    ATTR_COMM_SIZE,
    ATTR_COMM_TAG,
    ATTR_COMM_TYPE,
    ATTR_NUM_OPS,
    ATTR_RUNTIME,
    ATTR_TENSOR_SIZE,
    CommType,
    ETNode,
    NodeType,
    Trace,
    get_int_attr,
    get_str_attr,
)
from .validate import InvalidTraceError, validate_workload
from .viz import CALLBACK, ISSUE, TimelineRow, emit_timeline_csv


class TimingMode(Enum):
    FROM_TRACE = "from_trace"
    MODEL = "model"


class ResourceClass(Enum):
    MEMORY = "memory"
    COMPUTE = "compute"
    NETWORK = "network"


_CLASS_FOR_TYPE = {
    NodeType.MEM_LOAD: ResourceClass.MEMORY,
    NodeType.MEM_STORE: ResourceClass.MEMORY,
    NodeType.COMP: ResourceClass.COMPUTE,
    NodeType.COMM_SEND: ResourceClass.NETWORK,
    NodeType.COMM_RECV: ResourceClass.NETWORK,
    NodeType.COMM_COLL: ResourceClass.NETWORK,
}

# Fixed iteration order keeps the engine deterministic.
_CLASS_ORDER = (ResourceClass.MEMORY, ResourceClass.COMPUTE, ResourceClass.NETWORK)


@dataclass(frozen=True)
class SimConfig:
    topology: Topology
    compute_timing: TimingMode = TimingMode.FROM_TRACE
    comm_timing: TimingMode = TimingMode.MODEL
    cycle_time: float = 1e-9  # seconds per cycle
    compute_rate: "float | None" = None  # ops/sec for MODEL compute
    mem_bandwidth: float = 1e12  # bytes/sec for MODEL memory nodes

    def __post_init__(self) -> None:
        if self.cycle_time <= 0:
            raise ValueError("cycle_time must be positive")
        if self.mem_bandwidth <= 0:
            raise ValueError("mem_bandwidth must be positive")
        if self.compute_rate is not None and self.compute_rate <= 0:
            raise ValueError("compute_rate must be positive")

    def seconds_to_cycles(self, seconds: float) -> int:
        return max(0, math.ceil(seconds / self.cycle_time))


@dataclass(frozen=True)
class NpuStats:
    compute_busy: int
    comm_busy: int
    mem_busy: int
    exposed_comm: int


@dataclass
class SimResult:
    makespan: int
    per_npu: "dict[int, NpuStats]"
    node_spans: "dict[tuple[int, int], tuple[int, int]]"  # (npu, node) -> (start, finish)
    timeline: list[TimelineRow]

    def timeline_csv(self) -> str:
        return emit_timeline_csv(self.timeline)


@dataclass(frozen=True)
class StuckNode:
    npu_id: int
    node_id: int
    name: str
    state: str  # "in-flight" | "queued" | "blocked"


class DeadlockError(RuntimeError):
    """No event can make progress while unfinished nodes remain."""

    def __init__(self, stuck: Sequence[StuckNode]):
        self.stuck = tuple(stuck)
        shown = ", ".join(
            f"npu {s.npu_id} node {s.node_id} ({s.name!r}, {s.state})" for s in self.stuck[:20]
        )
        more = "" if len(self.stuck) <= 20 else f" ... and {len(self.stuck) - 20} more"
        super().__init__(f"simulation deadlocked; stuck nodes: {shown}{more}")


def compute_breakdown(result: SimResult) -> list[dict]:
    """Per-NPU compute vs exposed-communication table (cycle counts)."""
    return [
        {
            "npu_id": npu,
            "compute": stats.compute_busy,
            "exposed_comm": stats.exposed_comm,
        }
        for npu, stats in sorted(result.per_npu.items())
    ]


# --------------------------------------------------------------------------
# Engine internals
# --------------------------------------------------------------------------


@dataclass
class _Npu:
    npu_id: int
    feeder: Feeder
    queues: "dict[ResourceClass, list[int]]" = field(
        default_factory=lambda: {c: [] for c in _CLASS_ORDER}
    )
    busy: "dict[ResourceClass, int | None]" = field(
        default_factory=lambda: {c: None for c in _CLASS_ORDER}
    )
    issue_cycle: "dict[int, int]" = field(default_factory=dict)
    intervals: "dict[ResourceClass, list[tuple[int, int]]]" = field(
        default_factory=lambda: {c: [] for c in _CLASS_ORDER}
    )


@dataclass
class _Rendezvous:
    participants: frozenset[int]
    arrived: "dict[int, ETNode]" = field(default_factory=dict)  # rank -> node

    def complete(self) -> bool:
        return set(self.arrived) == set(self.participants)


def _collective_participants(traces: Sequence[Trace]) -> "dict[str, frozenset[int]]":
    groups: dict[str, set[int]] = {}
    for trace in traces:
        for node in trace.nodes:
            if node.type is NodeType.COMM_COLL:
                group = get_str_attr(node, ATTR_COMM_GROUP)
                groups.setdefault(group, set()).add(trace.npu_id)
    return {g: frozenset(r) for g, r in groups.items()}


def _prescan_timing(traces: Sequence[Trace], cfg: SimConfig) -> None:
    for trace in traces:
        for node in trace.nodes:
            if node.type is NodeType.COMP:
                if cfg.compute_timing is TimingMode.FROM_TRACE:
                    if get_int_attr(node, ATTR_RUNTIME) is None:
                        raise ValueError(
                            f"npu {trace.npu_id} node {node.id}: FROM_TRACE compute timing "
                            f"requires a 'runtime' attribute"
                        )
                else:
                    if get_int_attr(node, ATTR_NUM_OPS) is None and get_int_attr(node, ATTR_RUNTIME) is None:
                        raise ValueError(
                            f"npu {trace.npu_id} node {node.id}: MODEL compute timing requires "
                            f"'num_ops' (or a 'runtime' fallback)"
                        )
            elif node.type in (NodeType.MEM_LOAD, NodeType.MEM_STORE):
                if get_int_attr(node, ATTR_TENSOR_SIZE) is None and get_int_attr(node, ATTR_RUNTIME) is None:
                    raise ValueError(
                        f"npu {trace.npu_id} node {node.id}: memory node needs 'tensor_size' or 'runtime'"
                    )
            elif node.type in (NodeType.COMM_SEND, NodeType.COMM_RECV, NodeType.COMM_COLL):
                if cfg.comm_timing is TimingMode.FROM_TRACE and get_int_attr(node, ATTR_RUNTIME) is None:
                    raise ValueError(
                        f"npu {trace.npu_id} node {node.id}: FROM_TRACE comm timing requires 'runtime'"
                    )


def _local_duration(node: ETNode, cfg: SimConfig) -> int:
    """Duration in cycles for nodes that run without a peer (COMP / MEM)."""
    if node.type is NodeType.COMP:
        if cfg.compute_timing is TimingMode.FROM_TRACE:
            return get_int_attr(node, ATTR_RUNTIME)
        ops = get_int_attr(node, ATTR_NUM_OPS)
        if ops is None or cfg.compute_rate is None:
            return get_int_attr(node, ATTR_RUNTIME)
        return cfg.seconds_to_cycles(ops / cfg.compute_rate)
    # memory node
    size = get_int_attr(node, ATTR_TENSOR_SIZE)
    if size is None:
        return get_int_attr(node, ATTR_RUNTIME)
    return cfg.seconds_to_cycles(size / cfg.mem_bandwidth)


def _p2p_key(node: ETNode, npu_id: int, seq: "dict[tuple[int, int, int], int]") -> tuple:
    """Pairing key shared by both sides of a transfer."""
    peer = get_int_attr(node, ATTR_COMM_PEER)
    if node.type is NodeType.COMM_SEND:
        src, dst, direction = npu_id, peer, 0
    else:
        src, dst, direction = peer, npu_id, 1
    tag = get_int_attr(node, ATTR_COMM_TAG)
    if tag is not None:
        return (src, dst, "tag", tag)
    k = seq[(src, dst, direction)] = seq.get((src, dst, direction), -1) + 1
    return (src, dst, "seq", k)


def run_simulation(
    traces: Sequence[Trace],
    cfg: SimConfig,
    *,
    validate: bool = True,
    collect_timeline: bool = True,
) -> SimResult:
    """Replay ``traces`` on the modeled machine described by ``cfg``.

    Raises DeadlockError when unfinished nodes remain but nothing can move
    (e.g. collective order disagreement across ranks, or an unmatched p2p).
    """
    traces = sorted(traces, key=lambda t: t.npu_id)
    if validate:
        report = validate_workload(list(traces))
        if not report.ok:
            raise InvalidTraceError(report, "refusing to simulate invalid workload")
    _prescan_timing(traces, cfg)

    npus = {t.npu_id: _Npu(t.npu_id, Feeder(t, validate=False)) for t in traces}
    participants = _collective_participants(traces)
    rendezvous: dict[tuple, _Rendezvous] = {}
    coll_slot: dict[tuple[int, str], int] = {}  # (npu, group) -> next slot index
    p2p_seq: dict[tuple[int, int, int], int] = {}
    p2p_wait: dict[tuple, list[tuple[int, ETNode]]] = {}

    heap: list[tuple[int, int, int, int]] = []  # (cycle, seq, npu, node_id)
    heap_seq = 0
    spans: dict[tuple[int, int], tuple[int, int]] = {}
    timeline: list[TimelineRow] = []

    def schedule(cycle: int, npu_id: int, node_id: int) -> None:
        nonlocal heap_seq
        heapq.heappush(heap, (cycle, heap_seq, npu_id, node_id))
        heap_seq += 1

    def record_issue(npu: _Npu, node: ETNode, cycle: int) -> None:
        npu.issue_cycle[node.id] = cycle
        if collect_timeline:
            timeline.append(TimelineRow(ISSUE, npu.npu_id, cycle, node.id, node.name))

    def start_comm_pair(key: tuple, cycle: int) -> None:
        sides = p2p_wait.pop(key)
        size = max(get_int_attr(n, ATTR_COMM_SIZE) for _, n in sides)
        if cfg.comm_timing is TimingMode.FROM_TRACE:
            dur = max(get_int_attr(n, ATTR_RUNTIME) for _, n in sides)
        else:
            src, dst = key[0], key[1]
            dur = cfg.seconds_to_cycles(costmodel.p2p_time(size, src, dst, cfg.topology))
        for npu_id, node in sides:
            spans[(npu_id, node.id)] = (cycle, cycle + dur)
            schedule(cycle + dur, npu_id, node.id)

    def start_collective(cell: _Rendezvous, cycle: int) -> bool:
        """Launch a complete rendezvous; False if member types disagree."""
        nodes = sorted(cell.arrived.items())
        types = {get_str_attr(n, ATTR_COMM_TYPE) for _, n in nodes}
        if len(types) != 1:
            return False
        comm_type = CommType(types.pop())
        size = max(get_int_attr(n, ATTR_COMM_SIZE) for _, n in nodes)
        if cfg.comm_timing is TimingMode.FROM_TRACE:
            dur = max(get_int_attr(n, ATTR_RUNTIME) for _, n in nodes)
        else:
            seconds = costmodel.group_collective_time(comm_type, size, cell.participants, cfg.topology)
            dur = cfg.seconds_to_cycles(seconds)
        for npu_id, node in nodes:
            spans[(npu_id, node.id)] = (cycle, cycle + dur)
            schedule(cycle + dur, npu_id, node.id)
        return True

    def start_node(npu: _Npu, node: ETNode, cycle: int) -> None:
        cls = _CLASS_FOR_TYPE[node.type]
        npu.busy[cls] = node.id
        record_issue(npu, node, cycle)
        if node.type in (NodeType.COMP, NodeType.MEM_LOAD, NodeType.MEM_STORE):
            dur = _local_duration(node, cfg)
            spans[(npu.npu_id, node.id)] = (cycle, cycle + dur)
            schedule(cycle + dur, npu.npu_id, node.id)
        elif node.type is NodeType.COMM_COLL:
            group = get_str_attr(node, ATTR_COMM_GROUP)
            slot = coll_slot[(npu.npu_id, group)] = coll_slot.get((npu.npu_id, group), -1) + 1
            cell = rendezvous.setdefault(("coll", group, slot), _Rendezvous(participants[group]))
            cell.arrived[npu.npu_id] = node
            if cell.complete():
                # A comm-type disagreement leaves the cell stuck on purpose:
                # that is exactly the cross-rank ordering bug deadlock
                # detection exists to report.
                start_collective(cell, cycle)
        else:  # SEND / RECV
            key = _p2p_key(node, npu.npu_id, p2p_seq)
            p2p_wait.setdefault(key, []).append((npu.npu_id, node))
            if len(p2p_wait[key]) == 2:
                start_comm_pair(key, cycle)

    def pump_ready(npu: _Npu) -> None:
        """Move feeder-ready nodes into their class queues."""
        while True:
            node = npu.feeder.get_next_issuable_node()
            if node is None:
                return
            npu.queues[_CLASS_FOR_TYPE[node.type]].append(node.id)

    def issue_all(cycle: int) -> None:
        for npu_id in sorted(npus):
            npu = npus[npu_id]
            pump_ready(npu)
            for cls in _CLASS_ORDER:
                if npu.busy[cls] is None and npu.queues[cls]:
                    node_id = npu.queues[cls].pop(0)
                    start_node(npu, npu.feeder.lookup_node(node_id), cycle)

    now = 0
    issue_all(now)
    while heap:
        now = heap[0][0]
        batch: list[tuple[int, int]] = []
        while heap and heap[0][0] == now:
            _, _, npu_id, node_id = heapq.heappop(heap)
            batch.append((npu_id, node_id))
        for npu_id, node_id in sorted(batch):
            npu = npus[npu_id]
            node = npu.feeder.lookup_node(node_id)
            cls = _CLASS_FOR_TYPE[node.type]
            if collect_timeline:
                timeline.append(TimelineRow(CALLBACK, npu_id, now, node_id, node.name))
            npu.intervals[cls].append((npu.issue_cycle[node_id], now))
            npu.busy[cls] = None
            npu.feeder.free_children_nodes(node_id)
        issue_all(now)

    stuck = _collect_stuck(npus)
    if stuck:
        raise DeadlockError(stuck)

    makespan = max((f for _, f in spans.values()), default=0)
    per_npu = {npu_id: _stats(npu) for npu_id, npu in npus.items()}
    return SimResult(makespan=makespan, per_npu=per_npu, node_spans=spans, timeline=timeline)


def _collect_stuck(npus: "dict[int, _Npu]") -> list[StuckNode]:
    stuck: list[StuckNode] = []
    for npu_id in sorted(npus):
        npu = npus[npu_id]
        if npu.feeder.pending_count() == 0:
            continue
        done = npu.feeder.completed_ids
        in_flight = {nid for nid in npu.busy.values() if nid is not None}
        queued = {nid for q in npu.queues.values() for nid in q} | set(npu.feeder.queued_ids)
        for nid in sorted(in_flight):
            stuck.append(StuckNode(npu_id, nid, npu.feeder.lookup_node(nid).name, "in-flight"))
        for nid in sorted(queued):
            stuck.append(StuckNode(npu_id, nid, npu.feeder.lookup_node(nid).name, "queued"))
        for nid in npu.feeder.node_ids():
            if nid not in done and nid not in in_flight and nid not in queued:
                stuck.append(StuckNode(npu_id, nid, npu.feeder.lookup_node(nid).name, "blocked"))
    return stuck


def _overlap(a: "list[tuple[int, int]]", b: "list[tuple[int, int]]") -> int:
    """Total overlap length of two sorted non-overlapping interval lists."""
    total = 0
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i][0], b[j][0])
        hi = min(a[i][1], b[j][1])
        if lo < hi:
            total += hi - lo
        if a[i][1] <= b[j][1]:
            i += 1
        else:
            j += 1
    return total


def _stats(npu: _Npu) -> NpuStats:
    mem = sorted(npu.intervals[ResourceClass.MEMORY])
    comp = sorted(npu.intervals[ResourceClass.COMPUTE])
    net = sorted(npu.intervals[ResourceClass.NETWORK])
    compute_busy = sum(f - s for s, f in comp)
    comm_busy = sum(f - s for s, f in net)
    mem_busy = sum(f - s for s, f in mem)
    exposed = comm_busy - _overlap(net, comp)
    return NpuStats(compute_busy=compute_busy, comm_busy=comm_busy, mem_busy=mem_busy, exposed_comm=exposed)


# --------------------------------------------------------------------------
# Sweeps
# --------------------------------------------------------------------------


def sweep_npus(
    preset: str,
    npus_list: Sequence[int],
    kind: "costmodel.TopologyKind | str",
    bandwidth: "float | tuple[float, float]",
    latency: "float | tuple[float, float]" = 0.0,
    cycle_time: float = 1e-9,
) -> list[dict]:
    """Scaling sweep: one row per NPU count, performance normalized to the first cell."""
    from .workloads import generate_workload, preset_spec  # local import; workloads uses costmodel

    rows: list[dict] = []
    base_makespan: "int | None" = None
    for n in npus_list:
        topo = _template_topology(kind, n, bandwidth, latency)
        result = run_simulation(
            generate_workload(preset_spec(preset, n)),
            SimConfig(topology=topo, cycle_time=cycle_time),
            collect_timeline=False,
        )
        if base_makespan is None:
            base_makespan = result.makespan
        rows.append(
            {
                "preset": preset,
                "npus": n,
                "dims": f"{topo.dim1}x{topo.dim2}",
                "makespan_cycles": result.makespan,
                "perf_norm": base_makespan / result.makespan if result.makespan else 0.0,
                "exposed_share": _exposed_share(result),
            }
        )
    return rows


def sweep_bandwidth(
    preset: str,
    npus: int,
    kind: "costmodel.TopologyKind | str",
    bandwidths: Sequence["float | tuple[float, float]"],
    latency: "float | tuple[float, float]" = 0.0,
    cycle_time: float = 1e-9,
) -> list[dict]:
    """Bandwidth sweep at a fixed NPU count, normalized to the first cell."""
    from .workloads import generate_workload, preset_spec

    traces = generate_workload(preset_spec(preset, npus))
    rows: list[dict] = []
    base_makespan: "int | None" = None
    for bw in bandwidths:
        topo = _template_topology(kind, npus, bw, latency)
        result = run_simulation(traces, SimConfig(topology=topo, cycle_time=cycle_time), collect_timeline=False)
        if base_makespan is None:
            base_makespan = result.makespan
        b1, b2 = _pair(bw)
        rows.append(
            {
                "preset": preset,
                "npus": npus,
                "bw1": b1,
                "bw2": b2,
                "makespan_cycles": result.makespan,
                "perf_norm": base_makespan / result.makespan if result.makespan else 0.0,
                "exposed_share": _exposed_share(result),
            }
        )
    return rows


def _pair(value: "float | tuple[float, ...]") -> tuple[float, float]:
    """Broadcast a scalar (or 1-tuple) per-dimension parameter to both dims."""
    if isinstance(value, (int, float)):
        return float(value), float(value)
    values = tuple(float(v) for v in value)
    return (values[0], values[0]) if len(values) == 1 else (values[0], values[1])


def _template_topology(
    kind: "costmodel.TopologyKind | str",
    npus: int,
    bandwidth: "float | tuple[float, float]",
    latency: "float | tuple[float, float]",
) -> Topology:
    kind = costmodel.TopologyKind(kind)
    d1, d2 = costmodel.near_square_dims(npus)
    bw, lat = _pair(bandwidth), _pair(latency)
    return Topology(kind, d1, d2, bw[0], bw[1], lat[0], lat[1])


def _exposed_share(result: SimResult) -> float:
    if not result.per_npu or result.makespan == 0:
        return 0.0
    total_exposed = sum(s.exposed_comm for s in result.per_npu.values())
    return total_exposed / (len(result.per_npu) * result.makespan)


def sweep_rows_to_csv(rows: Sequence[dict]) -> str:
    if not rows:
        return ""
    cols = list(rows[0].keys())
    lines = [",".join(cols)]
    for row in rows:
        lines.append(",".join(_csv_cell(row[c]) for c in cols))
    return "\n".join(lines) + "\n"


def _csv_cell(value: object) -> str:
    if isinstance(value, float):
        return f"{value:.6g}"
    return str(value)
