"""Core execution-trace data model.

A trace is the recorded (or generated) activity of a single NPU: a DAG of
nodes, each tagged with a node type and a small bag of typed attributes.
Multi-NPU workloads are plain lists of traces, one per NPU.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Union

SCHEMA_VERSION = "0.1"


class NodeType(Enum):
    """Closed set of node kinds; decoding an unknown tag is an error."""

    INVALID = 0
    MEM_LOAD = 1
    MEM_STORE = 2
    COMP = 3
    COMM_SEND = 4
    COMM_RECV = 5
    COMM_COLL = 6


class AttributeKind(Enum):
    FLOAT = 0
    INT = 1
    STRING = 2
    FLOATS = 3
    INTS = 4
    STRINGS = 5


class CommType(str, Enum):
    """Legal values of the "comm_type" attribute."""

    ALL_REDUCE = "ALL_REDUCE"
    ALL_GATHER = "ALL_GATHER"
    REDUCE_SCATTER = "REDUCE_SCATTER"
    ALL_TO_ALL = "ALL_TO_ALL"
    SEND = "SEND"
    RECV = "RECV"


COLLECTIVE_COMM_TYPES = frozenset(
    {CommType.ALL_REDUCE, CommType.ALL_GATHER, CommType.REDUCE_SCATTER, CommType.ALL_TO_ALL}
)

# Well-known attribute names. Nothing enforces that *only* these appear;
# validation only checks the ones a node type requires.
ATTR_RUNTIME = "runtime"  # INT, cycles
ATTR_COMM_TYPE = "comm_type"  # STRING, a CommType value
ATTR_COMM_SIZE = "comm_size"  # INT, bytes
ATTR_COMM_GROUP = "comm_group"  # STRING, opaque group id
ATTR_COMM_PEER = "comm_peer"  # INT, peer npu_id for SEND/RECV
ATTR_COMM_TAG = "comm_tag"  # INT, optional explicit SEND/RECV pairing tag
ATTR_TENSOR_SIZE = "tensor_size"  # INT, bytes
ATTR_NUM_OPS = "num_ops"  # INT, arithmetic ops for modeled compute timing

AttrValue = Union[float, int, str, "tuple[float, ...]", "tuple[int, ...]", "tuple[str, ...]"]

_SCALAR_KINDS = {
    AttributeKind.FLOAT: float,
    AttributeKind.INT: int,
    AttributeKind.STRING: str,
}
_LIST_KINDS = {
    AttributeKind.FLOATS: float,
    AttributeKind.INTS: int,
    AttributeKind.STRINGS: str,
}


def attr_value_matches_kind(kind: AttributeKind, value: object) -> bool:
    """True when ``value`` is a legal payload for ``kind``.

    bool is rejected as an INT payload even though it subclasses int; a trace
    that claims INT but stores True is a recording bug worth surfacing.
    """
    if kind in _SCALAR_KINDS:
        ty = _SCALAR_KINDS[kind]
        if ty is int and isinstance(value, bool):
            return False
        if ty is float:
            return isinstance(value, float) or (isinstance(value, int) and not isinstance(value, bool))
        return isinstance(value, ty)
    if kind in _LIST_KINDS:
        ty = _LIST_KINDS[kind]
        if not isinstance(value, tuple):
            return False
        for item in value:
            if isinstance(item, bool):
                return False
            if ty is float:
                if not isinstance(item, (float, int)):
                    return False
            elif not isinstance(item, ty):
                return False
        return True
    return False


@dataclass(frozen=True)
class Attribute:
    """A named, typed value attached to a node.

    The kind/value pairing is *not* enforced here so that decoded-but-broken
    traces stay representable; ``validate_trace`` reports mismatches.
    """

    name: str
    kind: AttributeKind
    value: AttrValue
    doc_string: str = ""

    def __post_init__(self) -> None:
        if isinstance(self.value, list):
            object.__setattr__(self, "value", tuple(self.value))


def _infer_attr(name: str, value: object) -> Attribute:
    if isinstance(value, Attribute):
        return value
    if isinstance(value, bool):
        raise TypeError(f"attribute {name!r}: bool has no attribute kind")
    if isinstance(value, CommType):
        return Attribute(name, AttributeKind.STRING, value.value)
    if isinstance(value, int):
        return Attribute(name, AttributeKind.INT, value)
    if isinstance(value, float):
        return Attribute(name, AttributeKind.FLOAT, value)
    if isinstance(value, str):
        return Attribute(name, AttributeKind.STRING, value)
    if isinstance(value, (list, tuple)):
        items = tuple(value)
        if all(isinstance(v, int) and not isinstance(v, bool) for v in items):
            return Attribute(name, AttributeKind.INTS, items)
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in items):
            return Attribute(name, AttributeKind.FLOATS, tuple(float(v) for v in items))
        if all(isinstance(v, str) for v in items):
            return Attribute(name, AttributeKind.STRINGS, items)
        raise TypeError(f"attribute {name!r}: mixed or unsupported list payload")
    raise TypeError(f"attribute {name!r}: cannot infer kind for {type(value).__name__}")


def make_attributes(attrs: "dict[str, object] | Iterable[Attribute] | None") -> tuple[Attribute, ...]:
    """Coerce a {name: python value} mapping or Attribute iterable to a tuple."""
    if attrs is None:
        return ()
    if isinstance(attrs, dict):
        return tuple(_infer_attr(name, value) for name, value in attrs.items())
    return tuple(attrs)


@dataclass(frozen=True)
class ETNode:
    """One unit of recorded work: compute, memory traffic, or communication."""

    id: int
    name: str
    type: NodeType
    parents: tuple[int, ...] = ()
    attributes: tuple[Attribute, ...] = ()

    def __post_init__(self) -> None:
        object.__setattr__(self, "parents", tuple(self.parents))
        object.__setattr__(self, "attributes", tuple(self.attributes))

    def attribute(self, name: str) -> "Attribute | None":
        for attr in self.attributes:
            if attr.name == name:
                return attr
        return None


@dataclass(frozen=True)
class Trace:
    """All nodes recorded on one NPU, in a stable order."""

    npu_id: int
    nodes: tuple[ETNode, ...] = ()
    schema_version: str = SCHEMA_VERSION

    def __post_init__(self) -> None:
        object.__setattr__(self, "nodes", tuple(self.nodes))

    def node(self, node_id: int) -> ETNode:
        for node in self.nodes:
            if node.id == node_id:
                return node
        raise KeyError(f"npu {self.npu_id}: no node with id {node_id}")


def get_attr(node: ETNode, name: str, default: object = None) -> object:
    """Return the attribute's value (not the Attribute wrapper), or default."""
    attr = node.attribute(name)
    return default if attr is None else attr.value


def get_int_attr(node: ETNode, name: str, default: "int | None" = None) -> "int | None":
    attr = node.attribute(name)
    if attr is None:
        return default
    if attr.kind is not AttributeKind.INT or not attr_value_matches_kind(attr.kind, attr.value):
        raise TypeError(f"node {node.id}: attribute {name!r} is not an INT")
    return attr.value  # type: ignore[return-value]


def get_str_attr(node: ETNode, name: str, default: "str | None" = None) -> "str | None":
    attr = node.attribute(name)
    if attr is None:
        return default
    if attr.kind is not AttributeKind.STRING or not attr_value_matches_kind(attr.kind, attr.value):
        raise TypeError(f"node {node.id}: attribute {name!r} is not a STRING")
    return attr.value  # type: ignore[return-value]


def parse_schema_version(version: str) -> tuple[int, int]:
    parts = version.split(".")
    if len(parts) != 2 or not all(p.isdigit() for p in parts):
        raise ValueError(f"malformed schema_version {version!r}; expected '<major>.<minor>'")
    return int(parts[0]), int(parts[1])
