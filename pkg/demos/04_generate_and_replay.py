"""Generate a synthetic training workload and replay it on a modeled cluster.

The workload generators emit per-NPU traces for an MLP trained under a chosen
parallelization scheme (data-parallel, model-parallel, hybrid, pipeline).
The replay engine is a discrete-event simulator: each NPU runs one memory,
one compute, and one network operation at a time, collectives rendezvous
across their group, and communication cost comes from the topology model.
"""
import json

from ettrace import (
    Parallelism,
    SimConfig,
    Topology,
    WorkloadSpec,
    compute_breakdown,
    generate_workload,
    parse_timeline_csv,
    run_simulation,
    timeline_to_chrome_trace,
    validate_trace,
)

spec = WorkloadSpec(
    npus=4,
    parallelism=Parallelism.DP_MP,
    dims=(2, 2),  # 2-way data parallel x 2-way model parallel
    layers=4,
    compute_cycles=2_000_000,
    weight_bytes=16 << 20,
    activation_bytes=64 << 20,
)
traces = generate_workload(spec)
assert all(validate_trace(t).ok for t in traces)
print(f"generated {len(traces)} traces, "
      f"{[len(t.nodes) for t in traces]} nodes each")

# 2D torus: dim1 at 62 GB/s links, dim2 at 31 GB/s.
topo = Topology("torus2d", 2, 2, bw1=62e9, bw2=31e9, lat1=1e-6, lat2=1e-6)
cfg = SimConfig(topology=topo, cycle_time=1e-9)
result = run_simulation(traces, cfg)

print(f"\nmakespan: {result.makespan:,} cycles "
      f"({result.makespan * cfg.cycle_time * 1e3:.2f} ms at 1 GHz)")
print("\nper-NPU busy cycles:")
print(f"  {'npu':>3} {'compute':>12} {'comm':>12} {'exposed comm':>12}")
for npu, stats in sorted(result.per_npu.items()):
    print(f"  {npu:>3} {stats.compute_busy:>12,} {stats.comm_busy:>12,} "
          f"{stats.exposed_comm:>12,}")

rows = compute_breakdown(result)
total_compute = sum(r["compute"] for r in rows)
total_exposed = sum(r["exposed_comm"] for r in rows)
print(f"\ncompute / exposed-comm ratio: {total_compute / total_exposed:.2f}")

# The timeline round-trips through CSV into Chrome's trace-event JSON
# (load the result in chrome://tracing or Perfetto).
csv_text = result.timeline_csv()
rows = parse_timeline_csv(csv_text)
types = {(t.npu_id, n.id): n.type for t in traces for n in t.nodes}
events = json.loads(timeline_to_chrome_trace(rows, lambda gpu, node: types[gpu, node]))
print(f"\ntimeline: {len(rows)} issue/callback rows -> {len(events)} chrome events")
print("first event:", events[0])
