"""Analytical timing for communication on simple two-dimensional fabrics.

All times are seconds; sizes are bytes; bandwidths are bytes/second. The
collective models are the usual ring/bucket closed forms: a collective over
one member is free, and every formula is linear in payload over the
bottleneck link plus a per-step latency term.
"""
from __future__ import annotations

import math
import re
from dataclasses import dataclass
from enum import Enum

from .schema import CommType

HIERARCHICAL = "hierarchical"


class TopologyKind(Enum):
    TORUS_2D = "torus2d"
    SWITCH_2LVL = "switch2lvl"


@dataclass(frozen=True)
class Topology:
    """A d1 x d2 fabric with per-dimension bandwidth and latency.

    For a torus, dim 1 is the ring within a row and dim 2 the ring within a
    column. For a two-level switch, dim 1 is the leaf switch an NPU hangs off
    (d1 endpoints each) and dim 2 the spine connecting the d2 leaves.
    """

    kind: TopologyKind
    dim1: int
    dim2: int
    bw1: float
    bw2: float
    lat1: float = 0.0
    lat2: float = 0.0

    def __post_init__(self) -> None:
        if self.dim1 < 1 or self.dim2 < 1:
            raise ValueError(f"topology dims must be >= 1, got {self.dim1}x{self.dim2}")
        if self.bw1 <= 0 or self.bw2 <= 0:
            raise ValueError("bandwidth must be positive")
        if self.lat1 < 0 or self.lat2 < 0:
            raise ValueError("latency must be non-negative")

    @property
    def npus(self) -> int:
        return self.dim1 * self.dim2

    def coords(self, rank: int) -> tuple[int, int]:
        if not 0 <= rank < self.npus:
            raise ValueError(f"rank {rank} outside 0..{self.npus - 1}")
        return rank % self.dim1, rank // self.dim1

    def bw_lat(self, dim: int) -> tuple[float, float]:
        if dim == 1:
            return self.bw1, self.lat1
        if dim == 2:
            return self.bw2, self.lat2
        raise ValueError(f"dimension must be 1 or 2, got {dim}")


_TOPO_RE = re.compile(r"^(torus2d|switch2lvl):(\d+)x(\d+)$")


def parse_topology(
    spec: str,
    bandwidth: "float | tuple[float, ...] | list[float]",
    latency: "float | tuple[float, ...] | list[float]" = 0.0,
) -> Topology:
    """Parse ``torus2d:<d1>x<d2>`` / ``switch2lvl:<d1>x<d2>`` plus link parameters.

    A single bandwidth/latency value applies to both dimensions; a pair sets
    them independently (dim-1 value first).
    """
    m = _TOPO_RE.match(spec.strip())
    if not m:
        raise ValueError(
            f"bad topology {spec!r}; expected 'torus2d:<d1>x<d2>' or 'switch2lvl:<d1>x<d2>'"
        )
    kind = TopologyKind(m.group(1))
    dim1, dim2 = int(m.group(2)), int(m.group(3))

    def pair(value: object, what: str) -> tuple[float, float]:
        if isinstance(value, (int, float)):
            return float(value), float(value)
        values = tuple(float(v) for v in value)  # type: ignore[union-attr]
        if len(values) == 1:
            return values[0], values[0]
        if len(values) == 2:
            return values
        raise ValueError(f"{what} takes one or two values, got {len(values)}")

    bw1, bw2 = pair(bandwidth, "bandwidth")
    lat1, lat2 = pair(latency, "latency")
    return Topology(kind, dim1, dim2, bw1, bw2, lat1, lat2)


# --------------------------------------------------------------------------
# Flat (single-ring) collectives
# --------------------------------------------------------------------------


def _check_args(size_bytes: float, n: int, bandwidth: float, latency: float) -> None:
    if size_bytes < 0:
        raise ValueError(f"size must be >= 0, got {size_bytes}")
    if n < 1:
        raise ValueError(f"group size must be >= 1, got {n}")
    if bandwidth <= 0:
        raise ValueError(f"bandwidth must be positive, got {bandwidth}")
    if latency < 0:
        raise ValueError(f"latency must be >= 0, got {latency}")


def all_reduce_time(size_bytes: float, n: int, bandwidth: float, latency: float = 0.0) -> float:
    """Ring all-reduce: reduce-scatter plus all-gather, 2(n-1) steps."""
    _check_args(size_bytes, n, bandwidth, latency)
    if n == 1:
        return 0.0
    return 2 * (n - 1) * size_bytes / (n * bandwidth) + 2 * (n - 1) * latency


def all_gather_time(size_bytes: float, n: int, bandwidth: float, latency: float = 0.0) -> float:
    """Ring all-gather of a final buffer of ``size_bytes``, n-1 steps."""
    _check_args(size_bytes, n, bandwidth, latency)
    if n == 1:
        return 0.0
    return (n - 1) * size_bytes / (n * bandwidth) + (n - 1) * latency


def reduce_scatter_time(size_bytes: float, n: int, bandwidth: float, latency: float = 0.0) -> float:
    """Ring reduce-scatter of an input buffer of ``size_bytes``, n-1 steps."""
    return all_gather_time(size_bytes, n, bandwidth, latency)


def all_to_all_time(size_bytes: float, n: int, bandwidth: float, latency: float = 0.0) -> float:
    """Full exchange; every rank ships (n-1)/n of its buffer, one latency charge."""
    _check_args(size_bytes, n, bandwidth, latency)
    if n == 1:
        return 0.0
    return (n - 1) * size_bytes / (n * bandwidth) + latency


def p2p_transfer_time(size_bytes: float, bandwidth: float, latency: float = 0.0) -> float:
    """One point-to-point message over one link."""
    _check_args(size_bytes, 1, bandwidth, latency)
    return size_bytes / bandwidth + latency


_DISPATCH = {
    CommType.ALL_REDUCE: all_reduce_time,
    CommType.ALL_GATHER: all_gather_time,
    CommType.REDUCE_SCATTER: reduce_scatter_time,
    CommType.ALL_TO_ALL: all_to_all_time,
}


def collective_time_flat(
    comm_type: "CommType | str",
    size_bytes: float,
    n: int,
    bandwidth: float,
    latency: float = 0.0,
) -> float:
    """Time of one collective over a flat group of ``n`` members on one link class."""
    ct = CommType(comm_type)
    if ct in (CommType.SEND, CommType.RECV):
        _check_args(size_bytes, n, bandwidth, latency)
        if n == 1:  # a one-member group moves nothing, same as the collectives
            return 0.0
        return p2p_transfer_time(size_bytes, bandwidth, latency)
    return _DISPATCH[ct](size_bytes, n, bandwidth, latency)


# --------------------------------------------------------------------------
# Hierarchical / topology-aware timing
# --------------------------------------------------------------------------


def collective_time(
    comm_type: "CommType | str",
    size_bytes: float,
    group_size: int,
    dim: "int | str",
    topo: Topology,
) -> float:
    """Collective cost on a topology dimension.

    ``dim`` 1 or 2 uses that dimension's link with the flat formulas; the
    string ``HIERARCHICAL`` runs the collective across both dimensions of the
    whole fabric (all-reduce uses the reduce-scatter / inner all-reduce /
    all-gather split; other types run a dim-1 phase then a dim-2 phase).
    """
    ct = CommType(comm_type)
    if dim == HIERARCHICAL:
        if group_size != topo.npus:
            raise ValueError(
                f"hierarchical collectives span the whole fabric: group {group_size} != {topo.npus} npus"
            )
        if ct is CommType.ALL_REDUCE:
            return hierarchical_all_reduce_time(
                size_bytes, topo.dim1, topo.dim2, topo.bw1, topo.bw2, topo.lat1, topo.lat2
            )
        return collective_time_flat(ct, size_bytes, topo.dim1, topo.bw1, topo.lat1) + collective_time_flat(
            ct, size_bytes, topo.dim2, topo.bw2, topo.lat2
        )
    bw, lat = topo.bw_lat(int(dim))
    return collective_time_flat(ct, size_bytes, group_size, bw, lat)


def hierarchical_all_reduce_time(
    size_bytes: float,
    n1: int,
    n2: int,
    bw1: float,
    bw2: float,
    lat1: float = 0.0,
    lat2: float = 0.0,
) -> float:
    """All-reduce split over two dimensions.

    Reduce-scatter across dim 1 (full payload), all-reduce of the resulting
    1/n1 shard across dim 2, then all-gather back across dim 1.
    """
    _check_args(size_bytes, n1, bw1, lat1)
    _check_args(size_bytes, n2, bw2, lat2)
    return (
        reduce_scatter_time(size_bytes, n1, bw1, lat1)
        + all_reduce_time(size_bytes / n1, n2, bw2, lat2)
        + all_gather_time(size_bytes, n1, bw1, lat1)
    )


def group_dimension(members: "frozenset[int] | set[int] | tuple[int, ...]", topo: Topology) -> "int | str":
    """Which fabric dimension a communicator maps onto.

    Members sharing a row use dim 1, members sharing a column use dim 2, and
    anything spanning both coordinates is ``HIERARCHICAL``.
    """
    ranks = sorted(set(members))
    if not ranks:
        raise ValueError("empty communicator")
    coords = [topo.coords(r) for r in ranks]
    xs = {c[0] for c in coords}
    ys = {c[1] for c in coords}
    if len(ranks) == 1 or len(ys) == 1:
        return 1
    if len(xs) == 1:
        return 2
    return HIERARCHICAL


def group_collective_time(
    comm_type: "CommType | str",
    size_bytes: float,
    members: "frozenset[int] | set[int] | tuple[int, ...]",
    topo: Topology,
) -> float:
    """Time of one collective over an arbitrary member set on ``topo``.

    Row/column groups use the matching dimension's link. Mixed groups run a
    hierarchical all-reduce; other collectives over mixed groups decompose
    into a dim-1 phase followed by a dim-2 phase (a deliberate, simple upper
    structure rather than an optimal algorithm).
    """
    ranks = sorted(set(members))
    n = len(ranks)
    if n == 1:
        return 0.0
    ct = CommType(comm_type)
    dim = group_dimension(ranks, topo)
    if dim in (1, 2):
        bw, lat = topo.bw_lat(int(dim))
        return collective_time_flat(ct, size_bytes, n, bw, lat)
    n1 = len({topo.coords(r)[0] for r in ranks})
    n2 = len({topo.coords(r)[1] for r in ranks})
    if ct is CommType.ALL_REDUCE:
        return hierarchical_all_reduce_time(size_bytes, n1, n2, topo.bw1, topo.bw2, topo.lat1, topo.lat2)
    return collective_time_flat(ct, size_bytes, n1, topo.bw1, topo.lat1) + collective_time_flat(
        ct, size_bytes, n2, topo.bw2, topo.lat2
    )


def p2p_time(size_bytes: float, src: int, dst: int, topo: Topology) -> float:
    """Point-to-point transfer time: one leg per coordinate that differs."""
    if size_bytes < 0:
        raise ValueError(f"size must be >= 0, got {size_bytes}")
    sx, sy = topo.coords(src)
    dx, dy = topo.coords(dst)
    total = 0.0
    if sx != dx:
        total += p2p_transfer_time(size_bytes, topo.bw1, topo.lat1)
    if sy != dy:
        total += p2p_transfer_time(size_bytes, topo.bw2, topo.lat2)
    return total


def near_square_dims(npus: int) -> tuple[int, int]:
    """Factor ``npus`` into the most square d1 x d2 grid (d1 >= d2)."""
    if npus < 1:
        raise ValueError("npus must be >= 1")
    d2 = int(math.isqrt(npus))
    while npus % d2:
        d2 -= 1
    return npus // d2, d2
