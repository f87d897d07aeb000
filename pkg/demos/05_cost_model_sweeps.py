"""Analytical communication costs, and what they do to end-to-end scaling.

The cost model prices ring collectives on a flat group — all-reduce moves
2S(N-1)/N bytes per rank, all-gather and reduce-scatter half that, all-to-all
S(N-1)/N — plus per-step link latency. Point-to-point cost depends on where
the two ranks sit in the topology (2D torus or two-level switch).

The sweep helpers wrap workload generation + replay to answer the questions
those formulas raise: how does a preset scale with NPU count, and how much
does it care about link bandwidth?
"""
from ettrace import (
    Topology,
    all_gather_time,
    all_reduce_time,
    all_to_all_time,
    p2p_time,
    reduce_scatter_time,
    sweep_bandwidth,
    sweep_npus,
    sweep_rows_to_csv,
)

S, N, BW, LAT = 4 << 20, 8, 62e9, 1e-6  # 4 MiB over 8 ranks, 62 GB/s links
print(f"collective costs for {S >> 20} MiB over {N} ranks at {BW / 1e9:.0f} GB/s:")
for fn in (all_reduce_time, all_gather_time, reduce_scatter_time, all_to_all_time):
    print(f"  {fn.__name__:20} {fn(S, N, BW, LAT) * 1e6:8.2f} us")

# Point-to-point cost is position dependent: a hop along each torus dimension
# rides that dimension's links, and a diagonal pays both hops.
torus = Topology("torus2d", 4, 4, bw1=62e9, bw2=31e9, lat1=1e-6, lat2=1e-6)
print("\np2p on a 4x4 torus (dim1 62 GB/s, dim2 31 GB/s):")
for dst, where in ((1, "dim-1 neighbor"), (4, "dim-2 neighbor"), (5, "diagonal")):
    t = p2p_time(S, 0, dst, torus) * 1e6
    print(f"  rank 0 -> rank {dst} ({where}): {t:8.2f} us")

print("\nscaling sweep: mlp-mp on a torus, 62 GB/s")
rows = sweep_npus("mlp-mp", [4, 8, 16], "torus2d", 62e9)
print(sweep_rows_to_csv(rows))

print("bandwidth sweep: transformer at 16 NPUs on a two-level switch")
rows = sweep_bandwidth("transformer", 16, "switch2lvl",
                       [(150e9, 18.75e9), (300e9, 37.5e9), (600e9, 75e9)])
print(sweep_rows_to_csv(rows))

# The takeaway metric is exposed_share: the fraction of the makespan where
# communication is the only thing running. Model-parallel MLPs sit near 1.0
# (activation all-reduces gate every layer); doubling bandwidth mostly
# removes exposed time rather than overlapped time.
