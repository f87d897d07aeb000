"""Structural validation of traces.

Every invariant the data model promises has exactly one violation code here,
so callers can assert on codes instead of parsing messages.
"""
from __future__ import annotations

from dataclasses import dataclass

from .schema import (
    ATTR_COMM_GROUP,
    ATTR_COMM_PEER,
    ATTR_COMM_SIZE,
    ATTR_COMM_TYPE,
    COLLECTIVE_COMM_TYPES,
    Attribute,
    AttributeKind,
    CommType,
    ETNode,
    NodeType,
    Trace,
    attr_value_matches_kind,
    parse_schema_version,
)

# Violation codes (stable API).
DUPLICATE_ID = "duplicate-id"
NEGATIVE_ID = "negative-id"
DANGLING_PARENT = "dangling-parent"
SELF_PARENT = "self-parent"
DUPLICATE_PARENT = "duplicate-parent"
CYCLE = "cycle"
EMPTY_ATTR_NAME = "empty-attribute-name"
DUPLICATE_ATTRIBUTE = "duplicate-attribute"
KIND_VALUE_MISMATCH = "kind-value-mismatch"
MISSING_REQUIRED_ATTR = "missing-required-attribute"
WRONG_ATTR_KIND = "wrong-attribute-kind"
BAD_COMM_TYPE = "bad-comm-type"
BAD_NODE_TYPE = "bad-node-type"
BAD_SCHEMA_VERSION = "bad-schema-version"
NEGATIVE_SIZE = "negative-size"

ALL_CODES = (
    DUPLICATE_ID,
    NEGATIVE_ID,
    DANGLING_PARENT,
    SELF_PARENT,
    DUPLICATE_PARENT,
    CYCLE,
    EMPTY_ATTR_NAME,
    DUPLICATE_ATTRIBUTE,
    KIND_VALUE_MISMATCH,
    MISSING_REQUIRED_ATTR,
    WRONG_ATTR_KIND,
    BAD_COMM_TYPE,
    BAD_NODE_TYPE,
    BAD_SCHEMA_VERSION,
    NEGATIVE_SIZE,
)

_COMM_TYPE_VALUES = frozenset(ct.value for ct in CommType)
_COLLECTIVE_VALUES = frozenset(ct.value for ct in COLLECTIVE_COMM_TYPES)

# Attribute kinds the well-known names must carry when present.
_WELL_KNOWN_KINDS = {
    "runtime": AttributeKind.INT,
    ATTR_COMM_TYPE: AttributeKind.STRING,
    ATTR_COMM_SIZE: AttributeKind.INT,
    ATTR_COMM_GROUP: AttributeKind.STRING,
    ATTR_COMM_PEER: AttributeKind.INT,
    "comm_tag": AttributeKind.INT,
    "tensor_size": AttributeKind.INT,
    "num_ops": AttributeKind.INT,
}


@dataclass(frozen=True)
class Violation:
    code: str
    message: str
    node_id: "int | None" = None


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[Violation, ...]

    @property
    def ok(self) -> bool:
        return not self.violations

    def codes(self) -> set[str]:
        return {v.code for v in self.violations}

    def __str__(self) -> str:
        if self.ok:
            return "valid"
        return "\n".join(
            f"[{v.code}] node {v.node_id}: {v.message}" if v.node_id is not None else f"[{v.code}] {v.message}"
            for v in self.violations
        )


class InvalidTraceError(ValueError):
    """Raised by APIs that refuse to operate on an invalid trace."""

    def __init__(self, report: ValidationReport, context: str = "trace failed validation"):
        self.report = report
        super().__init__(f"{context}:\n{report}")


def _check_attributes(node: ETNode, out: list[Violation]) -> None:
    seen: set[str] = set()
    for attr in node.attributes:
        if not attr.name:
            out.append(Violation(EMPTY_ATTR_NAME, "attribute with empty name", node.id))
        if attr.name in seen:
            out.append(Violation(DUPLICATE_ATTRIBUTE, f"attribute {attr.name!r} appears twice", node.id))
        seen.add(attr.name)
        if not isinstance(attr.kind, AttributeKind) or not attr_value_matches_kind(attr.kind, attr.value):
            out.append(
                Violation(
                    KIND_VALUE_MISMATCH,
                    f"attribute {attr.name!r}: value {attr.value!r} does not match kind "
                    f"{getattr(attr.kind, 'name', attr.kind)}",
                    node.id,
                )
            )
            continue
        expected = _WELL_KNOWN_KINDS.get(attr.name)
        if expected is not None and attr.kind is not expected:
            out.append(
                Violation(
                    WRONG_ATTR_KIND,
                    f"attribute {attr.name!r} must be {expected.name}, got {attr.kind.name}",
                    node.id,
                )
            )


def _well_formed_attr(node: ETNode, name: str) -> "Attribute | None":
    attr = node.attribute(name)
    if attr is None:
        return None
    expected = _WELL_KNOWN_KINDS.get(name)
    if expected is not None and attr.kind is not expected:
        return None
    if not attr_value_matches_kind(attr.kind, attr.value):
        return None
    return attr


def _check_comm_contract(node: ETNode, out: list[Violation]) -> None:
    """COMM nodes must carry the attributes the cost model needs."""
    if node.type is NodeType.COMM_COLL:
        required = (ATTR_COMM_TYPE, ATTR_COMM_SIZE, ATTR_COMM_GROUP)
    elif node.type in (NodeType.COMM_SEND, NodeType.COMM_RECV):
        required = (ATTR_COMM_SIZE, ATTR_COMM_PEER)
    else:
        return
    for name in required:
        if node.attribute(name) is None:
            out.append(Violation(MISSING_REQUIRED_ATTR, f"{node.type.name} node lacks {name!r}", node.id))

    ct = _well_formed_attr(node, ATTR_COMM_TYPE)
    if ct is not None:
        if ct.value not in _COMM_TYPE_VALUES:
            out.append(Violation(BAD_COMM_TYPE, f"unknown comm_type {ct.value!r}", node.id))
        elif node.type is NodeType.COMM_COLL and ct.value not in _COLLECTIVE_VALUES:
            out.append(
                Violation(BAD_COMM_TYPE, f"comm_type {ct.value!r} is point-to-point, node is COMM_COLL", node.id)
            )
        elif node.type is NodeType.COMM_SEND and ct.value != CommType.SEND.value:
            out.append(Violation(BAD_COMM_TYPE, f"COMM_SEND node claims comm_type {ct.value!r}", node.id))
        elif node.type is NodeType.COMM_RECV and ct.value != CommType.RECV.value:
            out.append(Violation(BAD_COMM_TYPE, f"COMM_RECV node claims comm_type {ct.value!r}", node.id))

    size = _well_formed_attr(node, ATTR_COMM_SIZE)
    if size is not None and size.value < 0:
        out.append(Violation(NEGATIVE_SIZE, f"comm_size {size.value} is negative", node.id))


def _find_cycle_members(nodes: dict[int, ETNode]) -> set[int]:
    """Ids of nodes on (or feeding only into) cycles, found by Kahn peeling."""
    indeg = {nid: 0 for nid in nodes}
    children: dict[int, list[int]] = {nid: [] for nid in nodes}
    for node in nodes.values():
        for pid in set(node.parents):
            if pid in nodes and pid != node.id:
                indeg[node.id] += 1
                children[pid].append(node.id)
    queue = [nid for nid, d in indeg.items() if d == 0]
    seen = 0
    while queue:
        nid = queue.pop()
        seen += 1
        for cid in children[nid]:
            indeg[cid] -= 1
            if indeg[cid] == 0:
                queue.append(cid)
    if seen == len(nodes):
        return set()
    return {nid for nid, d in indeg.items() if d > 0}


def validate_trace(trace: Trace) -> ValidationReport:
    """Check every structural invariant; returns all violations, not just the first."""
    out: list[Violation] = []

    try:
        major, _ = parse_schema_version(trace.schema_version)
    except ValueError as exc:
        out.append(Violation(BAD_SCHEMA_VERSION, str(exc)))
    else:
        if major > 0:
            out.append(Violation(BAD_SCHEMA_VERSION, f"unsupported major version in {trace.schema_version!r}"))

    by_id: dict[int, ETNode] = {}
    for node in trace.nodes:
        if node.id < 0:
            out.append(Violation(NEGATIVE_ID, f"node id {node.id} is negative", node.id))
        if node.id in by_id:
            out.append(Violation(DUPLICATE_ID, f"node id {node.id} appears more than once", node.id))
        else:
            by_id[node.id] = node

    for node in trace.nodes:
        if not isinstance(node.type, NodeType):
            out.append(Violation(BAD_NODE_TYPE, f"node type {node.type!r} is not a NodeType", node.id))
        seen_parents: set[int] = set()
        for pid in node.parents:
            if pid == node.id:
                out.append(Violation(SELF_PARENT, "node lists itself as a parent", node.id))
            elif pid not in by_id:
                out.append(Violation(DANGLING_PARENT, f"parent {pid} does not exist", node.id))
            if pid in seen_parents:
                out.append(Violation(DUPLICATE_PARENT, f"parent {pid} listed twice", node.id))
            seen_parents.add(pid)
        _check_attributes(node, out)
        _check_comm_contract(node, out)

    for nid in sorted(_find_cycle_members(by_id)):
        out.append(Violation(CYCLE, "node participates in a dependency cycle", nid))

    return ValidationReport(tuple(out))


def validate_workload(traces: "list[Trace] | tuple[Trace, ...]") -> ValidationReport:
    """Validate several per-NPU traces plus cross-trace sanity (unique npu_ids)."""
    out: list[Violation] = []
    seen_npus: set[int] = set()
    for trace in traces:
        if trace.npu_id in seen_npus:
            out.append(Violation(DUPLICATE_ID, f"npu_id {trace.npu_id} appears in more than one trace"))
        seen_npus.add(trace.npu_id)
        out.extend(validate_trace(trace).violations)
    return ValidationReport(tuple(out))
