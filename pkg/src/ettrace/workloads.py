"""Synthetic multi-NPU training workloads.

Generates per-NPU traces for a layered MLP-style model under the classic
parallelization schemes. Sizes and cycle counts are plain knobs on
``WorkloadSpec``; the preset factories below pin values chosen so the
scaling/bandwidth experiments show their characteristic shapes.

Conventions:
* ``compute_cycles`` is one layer's forward pass on one NPU when the layer is
  not partitioned; the backward pass of a layer costs the same again.
* Model-parallel schemes divide per-layer compute by the MP degree and
  all-reduce activations; data-parallel schemes keep full compute and
  all-reduce gradients (``weight_bytes`` per layer, sharded under hybrid MP).
* A collective over a single rank is elided entirely.
"""
from __future__ import annotations

from dataclasses import dataclass
from enum import Enum

from .builder import TraceBuilder
from .costmodel import near_square_dims
from .schema import CommType, Trace

MIB = 1024 * 1024


class Parallelism(Enum):
    DP = "dp"
    MP = "mp"
    DP_MP = "dp_mp"
    MP_DP = "mp_dp"
    PIPELINE = "pipeline"


DP_STYLE_ALLREDUCE = "allreduce"
DP_STYLE_ZERO2 = "zero2"  # reduce-scatter grads + all-gather params


@dataclass(frozen=True)
class WorkloadSpec:
    npus: int
    parallelism: Parallelism
    layers: int = 6
    dims: "tuple[int, int] | None" = None  # (d1, d2) for hybrid schemes
    compute_cycles: int = 1_000_000
    weight_bytes: int = 16 * MIB
    activation_bytes: int = 64 * MIB
    microbatches: int = 4  # PIPELINE only
    dp_style: str = DP_STYLE_ALLREDUCE
    embedding_layers: int = 0  # leading layers exchanged all-to-all (DP only)
    name: str = ""

    def resolved_dims(self) -> tuple[int, int]:
        dims = self.dims if self.dims is not None else near_square_dims(self.npus)
        return dims

    def check(self) -> None:
        if self.npus < 1:
            raise ValueError(f"npus must be >= 1, got {self.npus}")
        if self.layers < 1:
            raise ValueError(f"layers must be >= 1, got {self.layers}")
        if self.compute_cycles < 1:
            raise ValueError("compute_cycles must be >= 1")
        if self.weight_bytes < 0 or self.activation_bytes < 0:
            raise ValueError("byte sizes must be >= 0")
        if self.dp_style not in (DP_STYLE_ALLREDUCE, DP_STYLE_ZERO2):
            raise ValueError(f"unknown dp_style {self.dp_style!r}")
        if self.parallelism in (Parallelism.DP_MP, Parallelism.MP_DP):
            d1, d2 = self.resolved_dims()
            if d1 < 1 or d2 < 1 or d1 * d2 != self.npus:
                raise ValueError(f"dims {d1}x{d2} do not factor npus={self.npus}")
        if self.parallelism is Parallelism.PIPELINE and self.microbatches < 1:
            raise ValueError("microbatches must be >= 1")
        if self.embedding_layers:
            if self.parallelism is not Parallelism.DP:
                raise ValueError("embedding_layers only applies to DP workloads")
            if not 0 <= self.embedding_layers <= self.layers:
                raise ValueError("embedding_layers must be within [0, layers]")


def _cycles(total: int, divisor: int) -> int:
    return max(1, round(total / divisor))


def generate_workload(spec: WorkloadSpec) -> list[Trace]:
    """Per-NPU traces realizing the requested parallelization scheme."""
    spec.check()
    gen = {
        Parallelism.DP: _gen_dp,
        Parallelism.MP: _gen_mp,
        Parallelism.DP_MP: _gen_hybrid,
        Parallelism.MP_DP: _gen_hybrid,
        Parallelism.PIPELINE: _gen_pipeline,
    }[spec.parallelism]
    return gen(spec)


# --------------------------------------------------------------------------
# Single-dimension schemes
# --------------------------------------------------------------------------


def _gen_dp(spec: WorkloadSpec) -> list[Trace]:
    traces = []
    emb = spec.embedding_layers
    for rank in range(spec.npus):
        b = TraceBuilder(rank)
        prev = None
        fwds: dict[int, int] = {}
        for layer in range(1, spec.layers + 1):
            if layer <= emb:
                node = b.comp(f"fwd_emb_l{layer}", _cycles(spec.compute_cycles, spec.npus))
                if prev is not None:
                    b.assign_dep(prev, node)
                prev = node
                if spec.npus > 1:
                    prev = b.coll(
                        f"fwd_a2a_l{layer}",
                        CommType.ALL_TO_ALL,
                        spec.activation_bytes,
                        "mp",
                        parents=[node],
                    )
                fwds[layer] = node
            else:
                node = b.comp(f"fwd_l{layer}", spec.compute_cycles)
                if prev is not None:
                    b.assign_dep(prev, node)
                prev = node
                fwds[layer] = node
        for layer in range(spec.layers, 0, -1):
            if layer <= emb:
                node = b.comp(f"bwd_emb_l{layer}", _cycles(spec.compute_cycles, spec.npus))
                b.assign_dep(prev, node)
                prev = node
                if spec.npus > 1:
                    prev = b.coll(
                        f"bwd_a2a_l{layer}",
                        CommType.ALL_TO_ALL,
                        spec.activation_bytes,
                        "mp",
                        parents=[node],
                    )
            else:
                node = b.comp(f"bwd_l{layer}", spec.compute_cycles)
                b.assign_dep(prev, node)
                prev = node
                if spec.npus > 1:
                    # Gradient sync hangs off the backward node; later layers'
                    # backward compute may overlap it.
                    b.coll(
                        f"grad_allreduce_l{layer}",
                        CommType.ALL_REDUCE,
                        spec.weight_bytes,
                        "dp",
                        parents=[node],
                    )
        traces.append(b.build())
    return traces


def _gen_mp(spec: WorkloadSpec) -> list[Trace]:
    traces = []
    cycles = _cycles(spec.compute_cycles, spec.npus)
    for rank in range(spec.npus):
        b = TraceBuilder(rank)
        prev = None
        for layer in range(1, spec.layers + 1):
            node = b.comp(f"fwd_l{layer}", cycles)
            if prev is not None:
                b.assign_dep(prev, node)
            prev = node
            if spec.npus > 1:
                prev = b.coll(
                    f"fwd_act_allreduce_l{layer}",
                    CommType.ALL_REDUCE,
                    spec.activation_bytes,
                    "mp",
                    parents=[node],
                )
        for layer in range(spec.layers, 0, -1):
            node = b.comp(f"bwd_l{layer}", cycles)
            b.assign_dep(prev, node)
            prev = node
            if spec.npus > 1:
                prev = b.coll(
                    f"bwd_act_allreduce_l{layer}",
                    CommType.ALL_REDUCE,
                    spec.activation_bytes,
                    "mp",
                    parents=[node],
                )
        traces.append(b.build())
    return traces


# --------------------------------------------------------------------------
# Hybrid schemes
# --------------------------------------------------------------------------


def _gen_hybrid(spec: WorkloadSpec) -> list[Trace]:
    """DP_MP: data parallel along dim 1, model parallel along dim 2.
    MP_DP: the reverse. Each rank belongs to one group per dimension."""
    d1, d2 = spec.resolved_dims()
    if spec.parallelism is Parallelism.DP_MP:
        mp_degree = d2
    else:
        mp_degree = d1
    dp_degree = spec.npus // mp_degree
    cycles = _cycles(spec.compute_cycles, mp_degree)
    # Weights are sharded across the MP partitions, so each rank syncs 1/mp of
    # every layer's gradient in its DP group.
    grad_bytes = max(1, spec.weight_bytes // mp_degree)

    traces = []
    for rank in range(spec.npus):
        x, y = rank % d1, rank // d1
        if spec.parallelism is Parallelism.DP_MP:
            dp_group, mp_group = f"dp_row{y}", f"mp_col{x}"
        else:
            mp_group, dp_group = f"mp_row{y}", f"dp_col{x}"
        b = TraceBuilder(rank)
        prev = None
        for layer in range(1, spec.layers + 1):
            node = b.comp(f"fwd_l{layer}", cycles)
            if prev is not None:
                b.assign_dep(prev, node)
            prev = node
            if mp_degree > 1:
                prev = b.coll(
                    f"fwd_act_allreduce_l{layer}",
                    CommType.ALL_REDUCE,
                    spec.activation_bytes,
                    mp_group,
                    parents=[node],
                )
        for layer in range(spec.layers, 0, -1):
            node = b.comp(f"bwd_l{layer}", cycles)
            b.assign_dep(prev, node)
            prev = node
            if mp_degree > 1:
                prev = b.coll(
                    f"bwd_act_allreduce_l{layer}",
                    CommType.ALL_REDUCE,
                    spec.activation_bytes,
                    mp_group,
                    parents=[node],
                )
            if dp_degree > 1:
                if spec.dp_style == DP_STYLE_ZERO2:
                    rs = b.coll(
                        f"grad_reducescatter_l{layer}",
                        CommType.REDUCE_SCATTER,
                        grad_bytes,
                        dp_group,
                        parents=[node],
                    )
                    b.coll(
                        f"param_allgather_l{layer}",
                        CommType.ALL_GATHER,
                        grad_bytes,
                        dp_group,
                        parents=[rs],
                    )
                else:
                    b.coll(
                        f"grad_allreduce_l{layer}",
                        CommType.ALL_REDUCE,
                        grad_bytes,
                        dp_group,
                        parents=[node],
                    )
        traces.append(b.build())
    return traces


# --------------------------------------------------------------------------
# Pipeline
# --------------------------------------------------------------------------


def _stage_layers(layers: int, stages: int) -> list[int]:
    base, extra = divmod(layers, stages)
    return [base + (1 if s < extra else 0) for s in range(stages)]


def _fwd_tag(m: int, sender: int, stages: int) -> int:
    return (m * stages + sender) * 2


def _bwd_tag(m: int, sender: int, stages: int) -> int:
    return (m * stages + sender) * 2 + 1


def _gen_pipeline(spec: WorkloadSpec) -> list[Trace]:
    stages = spec.npus
    per_stage = _stage_layers(spec.layers, stages)
    traces = []
    for s in range(stages):
        b = TraceBuilder(s)
        cycles = max(1, per_stage[s] * spec.compute_cycles)
        fwd: dict[int, int] = {}
        bwd_prev = None
        for m in range(spec.microbatches):
            parents = []
            if s > 0:
                # Chain each recv behind the previous microbatch's forward so
                # recvs enter the (single) network resource queue in pipeline
                # order instead of all at cycle 0, which would deadlock the
                # rendezvous with the other side's sends.
                recv = b.recv(
                    f"recv_act_m{m}",
                    spec.activation_bytes,
                    s - 1,
                    parents=[fwd[m - 1]] if m > 0 else [],
                    tag=_fwd_tag(m, s - 1, stages),
                )
                parents.append(recv)
            if m > 0:
                parents.append(fwd[m - 1])
            fwd[m] = b.comp(f"fwd_m{m}", cycles, parents=parents)
            if s < stages - 1:
                b.send(f"send_act_m{m}", spec.activation_bytes, s + 1, parents=[fwd[m]], tag=_fwd_tag(m, s, stages))
        for m in range(spec.microbatches):
            parents = [fwd[spec.microbatches - 1]]
            if s < stages - 1:
                recv = b.recv(
                    f"recv_grad_m{m}",
                    spec.activation_bytes,
                    s + 1,
                    parents=[bwd_prev] if bwd_prev is not None else [fwd[spec.microbatches - 1]],
                    tag=_bwd_tag(m, s + 1, stages),
                )
                parents.append(recv)
            else:
                parents.append(fwd[m])
            if bwd_prev is not None:
                parents.append(bwd_prev)
            bwd = b.comp(f"bwd_m{m}", cycles, parents=sorted(set(parents)))
            bwd_prev = bwd
            if s > 0:
                b.send(f"send_grad_m{m}", spec.activation_bytes, s - 1, parents=[bwd], tag=_bwd_tag(m, s, stages))
        traces.append(b.build())
    return traces


# --------------------------------------------------------------------------
# Presets
# --------------------------------------------------------------------------

# Reference fabric the presets are calibrated against.
REFERENCE_BANDWIDTH = 62e9  # bytes/sec per link
REFERENCE_NPUS = 4
CYCLE_TIME = 1e-9  # seconds per cycle at the default simulator clock

TRANSFORMER_COMPUTE_TO_COMM = 25.0


def mlp_dp_spec(npus: int) -> WorkloadSpec:
    return WorkloadSpec(npus=npus, parallelism=Parallelism.DP, name="mlp-dp")


def mlp_mp_spec(npus: int) -> WorkloadSpec:
    return WorkloadSpec(npus=npus, parallelism=Parallelism.MP, name="mlp-mp")


def mlp_hybrid_spec(npus: int) -> WorkloadSpec:
    return WorkloadSpec(npus=npus, parallelism=Parallelism.DP_MP, name="mlp-hybrid")


def transformer_spec(npus: int) -> WorkloadSpec:
    """Transformer-like hybrid: MP along dim 1, ZeRO-2-style DP along dim 2.

    Total compute is fixed by construction so that, at the 4-NPU reference
    fabric, per-rank compute time is ``TRANSFORMER_COMPUTE_TO_COMM`` times
    per-rank communication time. Growing the fabric then shrinks per-rank
    compute (strong scaling) while communication per rank stays flat-ish.
    """
    layers = 6
    act = 4 * MIB
    weight = 32 * MIB
    mp_anchor = 2  # near_square_dims(4) -> (2, 2)
    grad_shard = weight // mp_anchor
    # Per-layer comm at the anchor: two activation all-reduces over 2 ranks
    # (each S/B) plus reduce-scatter + all-gather of the gradient shard over
    # 2 ranks (each S/(2B)).
    per_layer_comm_s = (2 * act + grad_shard) / REFERENCE_BANDWIDTH
    total_comm_s = layers * per_layer_comm_s
    # Per-rank compute at the anchor is layers * (compute_cycles / mp) * 2
    # node executions; solve for compute_cycles.
    compute_cycles = round(
        TRANSFORMER_COMPUTE_TO_COMM * total_comm_s * mp_anchor / (2 * layers * CYCLE_TIME)
    )
    return WorkloadSpec(
        npus=npus,
        parallelism=Parallelism.MP_DP,
        layers=layers,
        compute_cycles=compute_cycles,
        weight_bytes=weight,
        activation_bytes=act,
        dp_style=DP_STYLE_ZERO2,
        name="transformer",
    )


def dlrm_spec(npus: int) -> WorkloadSpec:
    """DLRM-like: all-to-all embedding exchange up front, data-parallel MLP."""
    return WorkloadSpec(
        npus=npus,
        parallelism=Parallelism.DP,
        layers=6,
        compute_cycles=3_000_000,
        weight_bytes=16 * MIB,
        activation_bytes=8 * MIB,
        embedding_layers=2,
        name="dlrm",
    )


PRESETS: "dict[str, object]" = {
    "mlp-dp": mlp_dp_spec,
    "mlp-mp": mlp_mp_spec,
    "mlp-hybrid": mlp_hybrid_spec,
    "transformer": transformer_spec,
    "dlrm": dlrm_spec,
}


def preset_spec(name: str, npus: int) -> WorkloadSpec:
    try:
        factory = PRESETS[name]
    except KeyError:
        raise ValueError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return factory(npus)  # type: ignore[operator]
