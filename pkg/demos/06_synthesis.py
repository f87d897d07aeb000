"""Compress runs into master traces, fit models, and synthesize new workloads.

Pipeline: per-rank traces from several observed runs are each merged into a
*master trace* (one entry per collective, holding every rank's contribution).
Statistical models fitted on the corpus — a clustered comm-type chain plus a
log2-size Gaussian mixture per collective type — then generate fresh master
traces that are statistically similar to the corpus but match none of its
members, and expand back into runnable per-rank traces.
"""
import numpy as np

from ettrace import (
    Parallelism,
    SimConfig,
    SynthConfig,
    Topology,
    WorkloadSpec,
    build_master_trace,
    fit_models,
    generate_workload,
    models_from_json,
    models_to_json,
    reconstruct_rank_traces,
    run_simulation,
    synthesize,
    validate_trace,
)
from ettrace.synth import comm_sequence, total_variation
from ettrace.workloads import dlrm_spec

NPUS = 4

# An observed "corpus": data-parallel MLP runs (all-reduce heavy) and
# DLRM-style runs (all-to-all embedding exchange up front), varied in size.
corpus = []
for mib in (8, 16, 32, 64):
    spec = WorkloadSpec(npus=NPUS, parallelism=Parallelism.DP, weight_bytes=mib << 20)
    corpus.append(build_master_trace(generate_workload(spec)))
for mib in (4, 8, 16, 32):
    base = dlrm_spec(NPUS)
    spec = WorkloadSpec(**{**base.__dict__, "activation_bytes": mib << 20})
    corpus.append(build_master_trace(generate_workload(spec)))

m = corpus[0]
print(f"master trace: {len(m)} collectives over ranks {sorted(m.ranks)}")
op = m.ops[0]
print(f"  op 0: {op.comm_type.value} on {op.comm_group!r}, "
      f"per-rank bytes {dict(sorted(op.sizes.items()))}")

# Compression is lossless: expanding the master reproduces every rank's
# collective sequence exactly.
rebuilt = reconstruct_rank_traces(m, NPUS)
original = generate_workload(WorkloadSpec(npus=NPUS, parallelism=Parallelism.DP,
                                          weight_bytes=8 << 20))
assert [comm_sequence(t) for t in rebuilt] == [comm_sequence(t) for t in original]
print("reconstruction reproduces each rank's collective sequence")

models = fit_models(corpus, n_clusters=2, seed=7)
print(f"\nfitted {len(models.type_model.clusters)} composition clusters:")
for c in models.type_model.clusters:
    print(f"  weight {c.weight:.2f}, type mix "
          f"{ {t: round(p, 2) for t, p in c.type_probs.items()} }")

# Models serialize to versioned JSON and come back identical.
assert models_from_json(models_to_json(models)) == models

synth_traces = synthesize(models, SynthConfig(npus=NPUS, seed=3, num_ops=60))
assert all(validate_trace(t).ok for t in synth_traces)

# Statistically similar: total variation between corpus and synthetic
# comm-type mixes stays small...
def type_mix(seqs):
    counts = {}
    for seq in seqs:
        for ctype, _, _ in seq:
            counts[ctype] = counts.get(ctype, 0) + 1
    total = sum(counts.values())
    return {t: c / total for t, c in counts.items()}

corpus_mix = type_mix(comm_sequence(reconstruct_rank_traces(m2, NPUS)[0])
                      for m2 in corpus)
synth_mix = type_mix([comm_sequence(synth_traces[0])])
print(f"\ncorpus type mix:    { {t: round(p, 2) for t, p in sorted(corpus_mix.items())} }")
print(f"synthetic type mix: { {t: round(p, 2) for t, p in sorted(synth_mix.items())} }")
print(f"total variation: {total_variation(corpus_mix, synth_mix):.3f}")

# ...but no synthesized sequence replays a source run (the point: share the
# statistics without sharing the workload).
synth_seq = comm_sequence(synth_traces[0])
assert all(synth_seq != comm_sequence(reconstruct_rank_traces(m2, NPUS)[0])
           for m2 in corpus)
print("synthesized sequence matches no corpus member")

# And the output is a real workload: it replays end to end.
topo = Topology("torus2d", 2, 2, bw1=62e9, bw2=62e9, lat1=1e-6, lat2=1e-6)
result = run_simulation(synth_traces, SimConfig(topology=topo))
print(f"\nsynthesized workload replays: makespan {result.makespan:,} cycles")
