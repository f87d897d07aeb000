"""Statistical trace synthesis.

Pipeline: merge per-rank collective sequences into one lossless master trace;
fit distribution models on a corpus of masters (collective-type composition
clusters with first-order transition structure, per-type Gaussian mixtures
over log2 message size, empirical sequence lengths); sample new masters that
respect the same per-group ordering constraints and reconstruct per-rank
traces from them. Only COMM_COLL nodes participate — compute/memory nodes are
neither merged nor synthesized.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass, field

import numpy as np

from .builder import TraceBuilder
from .schema import (
    ATTR_COMM_GROUP,
    ATTR_COMM_SIZE,
    ATTR_COMM_TYPE,
    CommType,
    NodeType,
    Trace,
    get_int_attr,
    get_str_attr,
)

logger = logging.getLogger(__name__)

_TYPE_ORDER = tuple(ct.value for ct in CommType)


# --------------------------------------------------------------------------
# Master trace
# --------------------------------------------------------------------------


class MergeConflictError(ValueError):
    def __init__(self, group: str, message: str):
        self.group = group
        super().__init__(f"group {group!r}: {message}")


@dataclass(frozen=True)
class MasterOp:
    seq_no: int
    comm_type: CommType
    comm_group: str
    participants: frozenset[int]
    sizes: "dict[int, int]"  # rank -> bytes
    # Position of this op in each rank's full collective sequence; this is
    # what makes reconstruction exact even when ranks interleave groups
    # differently.
    positions: "dict[int, int]" = field(default_factory=dict)


@dataclass(frozen=True)
class MasterTrace:
    ops: tuple[MasterOp, ...]
    ranks: frozenset[int]

    def __len__(self) -> int:
        return len(self.ops)


def comm_sequence(trace: Trace) -> tuple[tuple[str, str, int], ...]:
    """A rank's collective sequence as (comm_type, comm_group, comm_size) triples."""
    out = []
    for node in trace.nodes:
        if node.type is NodeType.COMM_COLL:
            out.append(
                (
                    get_str_attr(node, ATTR_COMM_TYPE),
                    get_str_attr(node, ATTR_COMM_GROUP),
                    get_int_attr(node, ATTR_COMM_SIZE),
                )
            )
    return tuple(out)


def build_master_trace(traces: "list[Trace]") -> MasterTrace:
    """Merge per-rank collective sequences into one master.

    Every rank that uses a communicator must list the same collective types in
    the same order within it; disagreement raises MergeConflictError naming
    the group and the conflicting ops.
    """
    rank_seqs: dict[int, list[tuple[str, str, int]]] = {}
    for trace in sorted(traces, key=lambda t: t.npu_id):
        if trace.npu_id in rank_seqs:
            raise ValueError(f"two traces claim npu_id {trace.npu_id}")
        rank_seqs[trace.npu_id] = list(comm_sequence(trace))

    # group -> rank -> [(type, size, position in rank's full sequence)]
    per_group: dict[str, dict[int, list[tuple[str, int, int]]]] = {}
    for rank, seq in rank_seqs.items():
        for pos, (ctype, group, size) in enumerate(seq):
            per_group.setdefault(group, {}).setdefault(rank, []).append((ctype, size, pos))

    cells: list[tuple[tuple[int, int], str, int]] = []  # (order key, group, slot)
    for group in per_group:
        members = per_group[group]
        lengths = {rank: len(ops) for rank, ops in members.items()}
        if len(set(lengths.values())) > 1:
            detail = ", ".join(f"rank {r} has {n} ops" for r, n in sorted(lengths.items()))
            raise MergeConflictError(group, f"ranks disagree on op count: {detail}")
        n_slots = next(iter(lengths.values()))
        for slot in range(n_slots):
            types = {rank: members[rank][slot][0] for rank in members}
            if len(set(types.values())) > 1:
                detail = ", ".join(f"rank {r} op {slot} is {t}" for r, t in sorted(types.items()))
                raise MergeConflictError(group, f"op order conflict at slot {slot}: {detail}")
            order_key = min((members[rank][slot][2], rank) for rank in members)
            cells.append((order_key, group, slot))

    ops = []
    for seq_no, (_, group, slot) in enumerate(sorted(cells)):
        members = per_group[group]
        ctype = CommType(next(iter(members.values()))[slot][0])
        ops.append(
            MasterOp(
                seq_no=seq_no,
                comm_type=ctype,
                comm_group=group,
                participants=frozenset(members),
                sizes={rank: members[rank][slot][1] for rank in members},
                positions={rank: members[rank][slot][2] for rank in members},
            )
        )
    return MasterTrace(ops=tuple(ops), ranks=frozenset(rank_seqs))


def reconstruct_rank_traces(master: MasterTrace, npus: int) -> list[Trace]:
    """Per-rank traces from a master: each rank's ops chained in its original order."""
    traces = []
    for rank in range(npus):
        mine = [op for op in master.ops if rank in op.participants]
        mine.sort(key=lambda op: op.positions.get(rank, op.seq_no))
        b = TraceBuilder(rank)
        prev = None
        for op in mine:
            node = b.coll(
                f"{op.comm_type.value.lower()}_{op.seq_no}",
                op.comm_type,
                op.sizes[rank],
                op.comm_group,
                parents=[prev] if prev is not None else [],
            )
            prev = node
        traces.append(b.build())
    return traces


# --------------------------------------------------------------------------
# Gaussian mixture fitting (1-D, from scratch)
# --------------------------------------------------------------------------

_VAR_FLOOR = 1e-6


@dataclass(frozen=True)
class GmmComponent:
    weight: float
    mean: float
    var: float


@dataclass(frozen=True)
class Gmm1D:
    components: tuple[GmmComponent, ...]

    def sample(self, rng: np.random.Generator, n: int) -> np.ndarray:
        weights = np.array([c.weight for c in self.components])
        choice = rng.choice(len(self.components), size=n, p=weights / weights.sum())
        out = np.empty(n)
        for i, comp in enumerate(self.components):
            mask = choice == i
            out[mask] = rng.normal(comp.mean, np.sqrt(comp.var), size=int(mask.sum()))
        return out


def _log_gaussian(x: np.ndarray, mean: float, var: float) -> np.ndarray:
    return -0.5 * (np.log(2 * np.pi * var) + (x - mean) ** 2 / var)


def _kmeanspp_centers(x: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    centers = [x[rng.integers(len(x))]]
    for _ in range(k - 1):
        d2 = np.min([(x - c) ** 2 for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            centers.append(x[rng.integers(len(x))])
            continue
        centers.append(x[rng.choice(len(x), p=d2 / total)])
    return np.array(centers)


def fit_gmm(
    samples: "np.ndarray | list[float]",
    k: int,
    seed: int,
    tol: float = 1e-6,
    max_iter: int = 200,
) -> Gmm1D:
    """EM fit of a k-component 1-D Gaussian mixture (seeded, deterministic).

    Fewer than k samples degrade to a single-component fit with a warning.
    """
    x = np.asarray(samples, dtype=float)
    if x.size == 0:
        raise ValueError("cannot fit a mixture to zero samples")
    if k < 1:
        raise ValueError("k must be >= 1")
    if x.size < k:
        logger.warning("only %d samples for k=%d; falling back to a single component", x.size, k)
        k = 1
    if k == 1:
        return Gmm1D((GmmComponent(1.0, float(x.mean()), float(max(x.var(), _VAR_FLOOR))),))

    rng = np.random.default_rng(seed)
    means = _kmeanspp_centers(x, k, rng)
    variances = np.full(k, max(float(x.var()), _VAR_FLOOR))
    weights = np.full(k, 1.0 / k)

    prev_ll = -np.inf
    for _ in range(max_iter):
        log_resp = np.stack(
            [np.log(weights[j]) + _log_gaussian(x, means[j], variances[j]) for j in range(k)]
        )
        log_norm = np.logaddexp.reduce(log_resp, axis=0)
        ll = float(log_norm.mean())
        resp = np.exp(log_resp - log_norm)
        nk = resp.sum(axis=1)
        nk = np.maximum(nk, 1e-12)
        weights = nk / x.size
        means = (resp @ x) / nk
        variances = np.maximum((resp @ x**2) / nk - means**2, _VAR_FLOOR)
        if abs(ll - prev_ll) < tol:
            break
        prev_ll = ll

    order = np.argsort(means)
    return Gmm1D(
        tuple(
            GmmComponent(float(weights[j]), float(means[j]), float(variances[j])) for j in order
        )
    )


# --------------------------------------------------------------------------
# Composition clustering + type chain model
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ClusterModel:
    weight: float
    type_probs: "dict[str, float]"  # CommType value -> probability
    transitions: "dict[str, dict[str, float]]"  # prev type -> next-type distribution
    lengths: tuple[int, ...]  # empirical sequence lengths seen in this cluster

    def check(self) -> None:
        if abs(sum(self.type_probs.values()) - 1.0) > 1e-9:
            raise ValueError("type probabilities must sum to 1")
        for prev, row in self.transitions.items():
            if abs(sum(row.values()) - 1.0) > 1e-9:
                raise ValueError(f"transition row for {prev} must sum to 1")


@dataclass(frozen=True)
class CommTypeModel:
    clusters: tuple[ClusterModel, ...]

    @classmethod
    def memoryless(cls, type_probs: "dict[str, float]", lengths: "tuple[int, ...]" = (100,)) -> "CommTypeModel":
        """Single cluster whose chain has no autocorrelation (iid types)."""
        probs = dict(type_probs)
        transitions = {t: dict(probs) for t in probs}
        model = cls((ClusterModel(1.0, probs, transitions, tuple(lengths)),))
        model.clusters[0].check()
        return model


def _composition_vector(master: MasterTrace) -> np.ndarray:
    counts = np.zeros(len(_TYPE_ORDER))
    for op in master.ops:
        counts[_TYPE_ORDER.index(op.comm_type.value)] += 1
    total = counts.sum()
    return counts / total if total else counts


def _kmeans(vectors: np.ndarray, k: int, rng: np.random.Generator, iters: int = 50) -> np.ndarray:
    """K-means over composition vectors; returns the assignment.

    Centers are seeded distance-weighted (k-means++ style) — uniform seeding
    routinely drops a whole composition family when the corpus is small.
    """
    n = len(vectors)
    k = min(k, n)
    centers = vectors[[int(rng.integers(n))]].copy()
    while len(centers) < k:
        d2 = ((vectors[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2).min(axis=1)
        total = d2.sum()
        if total == 0:  # every point already coincides with a center
            pick = int(rng.integers(n))
        else:
            pick = int(rng.choice(n, p=d2 / total))
        centers = np.vstack([centers, vectors[[pick]]])
    assign = np.zeros(n, dtype=int)
    for _ in range(iters):
        dists = ((vectors[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        new_assign = dists.argmin(axis=1)
        if (new_assign == assign).all():
            assign = new_assign
            break
        assign = new_assign
        for j in range(k):
            members = vectors[assign == j]
            if len(members):
                centers[j] = members.mean(axis=0)
    return assign


@dataclass(frozen=True)
class FittedModels:
    type_model: CommTypeModel
    size_model: "dict[str, Gmm1D]"  # CommType value -> mixture over log2(bytes)


def fit_models(
    corpus: "list[MasterTrace]",
    k_components: int = 3,
    n_clusters: int = 2,
    seed: int = 0,
) -> FittedModels:
    """Fit all synthesis models on a corpus of master traces."""
    if not corpus:
        raise ValueError("corpus must contain at least one master trace")
    rng = np.random.default_rng(seed)

    vectors = np.array([_composition_vector(m) for m in corpus])
    assign = _kmeans(vectors, n_clusters, rng)

    clusters = []
    for j in sorted(set(assign.tolist())):
        members = [corpus[i] for i in range(len(corpus)) if assign[i] == j]
        counts: dict[str, float] = {}
        trans_counts: dict[str, dict[str, float]] = {}
        lengths = []
        for master in members:
            lengths.append(len(master.ops))
            prev = None
            for op in master.ops:
                t = op.comm_type.value
                counts[t] = counts.get(t, 0) + 1
                if prev is not None:
                    trans_counts.setdefault(prev, {})[t] = trans_counts.get(prev, {}).get(t, 0) + 1
                prev = t
        total = sum(counts.values())
        type_probs = {t: c / total for t, c in sorted(counts.items())}
        transitions = {}
        for t in type_probs:
            row = trans_counts.get(t)
            if row:
                row_total = sum(row.values())
                transitions[t] = {u: c / row_total for u, c in sorted(row.items())}
            else:
                # Never observed as a predecessor: fall back to the marginal.
                transitions[t] = dict(type_probs)
        cluster = ClusterModel(
            weight=len(members) / len(corpus),
            type_probs=type_probs,
            transitions=transitions,
            lengths=tuple(sorted(lengths)),
        )
        cluster.check()
        clusters.append(cluster)

    by_type: dict[str, list[float]] = {}
    for master in corpus:
        for op in master.ops:
            total_bytes = sum(op.sizes.values())
            by_type.setdefault(op.comm_type.value, []).append(np.log2(max(1, total_bytes)))
    size_model = {
        t: fit_gmm(np.array(vals), k_components, seed=seed + i)
        for i, (t, vals) in enumerate(sorted(by_type.items()))
    }
    return FittedModels(type_model=CommTypeModel(tuple(clusters)), size_model=size_model)


# --------------------------------------------------------------------------
# Synthesis
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthConfig:
    npus: int
    seed: int
    num_ops: "int | None" = None  # override the sampled sequence length
    split_jitter: float = 0.1  # +/- fraction applied to per-rank equal shares
    comm_group: str = "g0"

    def __post_init__(self) -> None:
        if self.npus < 1:
            raise ValueError("npus must be >= 1")
        if not 0 <= self.split_jitter < 1:
            raise ValueError("split_jitter must be in [0, 1)")


def _round_up4(value: float) -> int:
    n = max(4, int(np.ceil(value)))
    return ((n + 3) // 4) * 4


# log2-size samples are clamped to a sane byte range before exponentiation.
_LOG2_MIN, _LOG2_MAX = 2.0, 50.0


def synthesize_master(models: FittedModels, cfg: SynthConfig) -> MasterTrace:
    """Sample one master trace: cluster -> length -> type chain -> sizes -> split."""
    rng = np.random.default_rng(cfg.seed)
    clusters = models.type_model.clusters
    weights = np.array([c.weight for c in clusters])
    cluster = clusters[int(rng.choice(len(clusters), p=weights / weights.sum()))]

    if cfg.num_ops is not None:
        length = cfg.num_ops
    else:
        length = int(cluster.lengths[int(rng.integers(len(cluster.lengths)))])

    types: list[str] = []
    for i in range(length):
        dist = cluster.type_probs if i == 0 else cluster.transitions[types[-1]]
        names = list(dist)
        probs = np.array([dist[t] for t in names])
        types.append(names[int(rng.choice(len(names), p=probs / probs.sum()))])

    ranks = list(range(cfg.npus))
    ops = []
    for seq_no, t in enumerate(types):
        gmm = models.size_model[t]
        x = float(np.clip(gmm.sample(rng, 1)[0], _LOG2_MIN, _LOG2_MAX))
        total = _round_up4(2.0**x)
        shares = np.full(cfg.npus, total / cfg.npus)
        if cfg.split_jitter > 0 and cfg.npus > 1:
            noise = rng.uniform(1 - cfg.split_jitter, 1 + cfg.split_jitter, size=cfg.npus)
            shares = shares * noise
            shares *= total / shares.sum()
        sizes = {rank: _round_up4(shares[i]) for i, rank in enumerate(ranks)}
        ops.append(
            MasterOp(
                seq_no=seq_no,
                comm_type=CommType(t),
                comm_group=cfg.comm_group,
                participants=frozenset(ranks),
                sizes=sizes,
                positions={rank: seq_no for rank in ranks},
            )
        )
    return MasterTrace(ops=tuple(ops), ranks=frozenset(ranks))


def synthesize(models: FittedModels, cfg: SynthConfig) -> list[Trace]:
    return reconstruct_rank_traces(synthesize_master(models, cfg), cfg.npus)


# --------------------------------------------------------------------------
# Model (de)serialization and small statistics helpers
# --------------------------------------------------------------------------

MODELS_FORMAT_VERSION = 1


def models_to_json(models: FittedModels) -> str:
    doc = {
        "version": MODELS_FORMAT_VERSION,
        "type_model": {
            "clusters": [
                {
                    "weight": c.weight,
                    "type_probs": c.type_probs,
                    "transitions": c.transitions,
                    "lengths": list(c.lengths),
                }
                for c in models.type_model.clusters
            ]
        },
        "size_model": {
            t: [{"weight": c.weight, "mean": c.mean, "var": c.var} for c in gmm.components]
            for t, gmm in sorted(models.size_model.items())
        },
    }
    return json.dumps(doc, indent=2) + "\n"


def models_from_json(text: "str | bytes") -> FittedModels:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValueError(f"models document is not valid JSON: {exc}") from None
    if not isinstance(doc, dict) or doc.get("version") != MODELS_FORMAT_VERSION:
        raise ValueError(f"unsupported models document version {doc.get('version')!r}")
    clusters = tuple(
        ClusterModel(
            weight=c["weight"],
            type_probs=dict(c["type_probs"]),
            transitions={k: dict(v) for k, v in c["transitions"].items()},
            lengths=tuple(c["lengths"]),
        )
        for c in doc["type_model"]["clusters"]
    )
    size_model = {
        t: Gmm1D(tuple(GmmComponent(c["weight"], c["mean"], c["var"]) for c in comps))
        for t, comps in doc["size_model"].items()
    }
    return FittedModels(type_model=CommTypeModel(clusters), size_model=size_model)


def ks_statistic(a: "np.ndarray | list[float]", b: "np.ndarray | list[float]") -> float:
    """Two-sample Kolmogorov-Smirnov statistic (sup CDF distance)."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ValueError("KS statistic needs non-empty samples")
    grid = np.concatenate([a, b])
    cdf_a = np.searchsorted(a, grid, side="right") / a.size
    cdf_b = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(cdf_a - cdf_b).max())


def total_variation(p: "dict[str, float]", q: "dict[str, float]") -> float:
    keys = set(p) | set(q)
    return 0.5 * sum(abs(p.get(k, 0.0) - q.get(k, 0.0)) for k in keys)
