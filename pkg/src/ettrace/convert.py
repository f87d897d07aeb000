"""Converters from framework trace formats into per-NPU traces.

Two inputs are supported: a documented subset of PyTorch execution-graph
JSON, and a FlexFlow-style graphviz dialect. Both map onto a shared
intermediate — a flat list of globally-unique nodes annotated with an NPU —
which ``split_per_npu`` then cuts into per-NPU traces, turning every
cross-NPU dependency into a tagged SEND/RECV pair.
"""
from __future__ import annotations

import json
import logging
import re
from dataclasses import dataclass
from typing import Iterable, Sequence

from .schema import (
    ATTR_COMM_GROUP,
    ATTR_COMM_PEER,
    ATTR_COMM_SIZE,
    ATTR_COMM_TAG,
    ATTR_COMM_TYPE,
    ATTR_RUNTIME,
    ATTR_TENSOR_SIZE,
    Attribute,
    CommType,
    ETNode,
    NodeType,
    Trace,
    get_int_attr,
    make_attributes,
)

logger = logging.getLogger(__name__)


class ConvertError(ValueError):
    pass


class DotParseError(ConvertError):
    def __init__(self, message: str, line_no: int):
        self.line_no = line_no
        super().__init__(f"line {line_no}: {message}")


@dataclass(frozen=True)
class GlobalNode:
    """A converted node before the per-NPU split."""

    id: int
    name: str
    type: NodeType
    parents: tuple[int, ...]
    attributes: tuple[Attribute, ...]
    npu: "int | None"


# --------------------------------------------------------------------------
# Per-NPU splitting
# --------------------------------------------------------------------------


def split_per_npu(nodes: Sequence[GlobalNode]) -> list[Trace]:
    """Cut a global node list into per-NPU traces.

    Within-NPU edges survive as-is. A cross-NPU edge u(a) -> v(b) becomes a
    COMM_SEND on a (child of u) and a COMM_RECV on b (new parent of v),
    paired by a fresh shared comm tag; one pair is reused for all of u's
    children on the same target NPU.
    """
    by_id: dict[int, GlobalNode] = {}
    for node in nodes:
        if node.npu is None:
            raise ConvertError(f"node {node.id} ({node.name!r}) has no NPU assignment")
        if node.id in by_id:
            raise ConvertError(f"duplicate global node id {node.id}")
        by_id[node.id] = node
    for node in nodes:
        for pid in node.parents:
            if pid not in by_id:
                raise ConvertError(f"node {node.id} references unknown parent {pid}")

    next_id = max(by_id, default=0) + 1
    next_tag = _max_existing_tag(nodes) + 1
    extra: dict[int, list[ETNode]] = {}  # npu -> inserted SEND/RECV nodes
    new_parents: dict[int, list[int]] = {n.id: [] for n in nodes}
    pair_for: dict[tuple[int, int], int] = {}  # (source node, target npu) -> recv id

    for node in sorted(nodes, key=lambda n: n.id):
        for pid in node.parents:
            parent = by_id[pid]
            if parent.npu == node.npu:
                new_parents[node.id].append(pid)
                continue
            key = (pid, node.npu)
            if key not in pair_for:
                size = get_int_attr_from(parent.attributes, ATTR_TENSOR_SIZE, 0)
                send_id, recv_id = next_id, next_id + 1
                next_id += 2
                tag = next_tag
                next_tag += 1
                extra.setdefault(parent.npu, []).append(
                    ETNode(
                        send_id,
                        f"xfer_send_{pid}_to_npu{node.npu}",
                        NodeType.COMM_SEND,
                        parents=(pid,),
                        attributes=make_attributes(
                            {ATTR_COMM_SIZE: size, ATTR_COMM_PEER: node.npu, ATTR_COMM_TAG: tag}
                        ),
                    )
                )
                extra.setdefault(node.npu, []).append(
                    ETNode(
                        recv_id,
                        f"xfer_recv_{pid}_on_npu{node.npu}",
                        NodeType.COMM_RECV,
                        parents=(),
                        attributes=make_attributes(
                            {ATTR_COMM_SIZE: size, ATTR_COMM_PEER: parent.npu, ATTR_COMM_TAG: tag}
                        ),
                    )
                )
                pair_for[key] = recv_id
            new_parents[node.id].append(pair_for[key])

    npu_ids = sorted({n.npu for n in nodes} | set(extra))
    traces = []
    for npu in npu_ids:
        own = [
            ETNode(n.id, n.name, n.type, tuple(new_parents[n.id]), n.attributes)
            for n in sorted(nodes, key=lambda n: n.id)
            if n.npu == npu
        ]
        own.extend(extra.get(npu, []))
        own.sort(key=lambda n: n.id)
        traces.append(Trace(npu_id=npu, nodes=tuple(own)))
    return traces


def get_int_attr_from(attributes: Iterable[Attribute], name: str, default: int = 0) -> int:
    for attr in attributes:
        if attr.name == name and isinstance(attr.value, int):
            return attr.value
    return default


def _max_existing_tag(nodes: Sequence[GlobalNode]) -> int:
    tags = [
        attr.value
        for node in nodes
        for attr in node.attributes
        if attr.name == ATTR_COMM_TAG and isinstance(attr.value, int)
    ]
    return max(tags, default=0)


# --------------------------------------------------------------------------
# PyTorch execution-graph subset
# --------------------------------------------------------------------------

_NCCL_SUFFIX_TO_TYPE = {
    "all_reduce": CommType.ALL_REDUCE,
    "all_gather": CommType.ALL_GATHER,
    "reduce_scatter": CommType.REDUCE_SCATTER,
    "all_to_all": CommType.ALL_TO_ALL,
}

RECORD_PARAM_COMMS = "record_param_comms"


def convert_pytorch(doc: dict, cycles_per_us: float = 1.0) -> list[Trace]:
    """Convert a parsed PyTorch-subset document into per-NPU traces.

    Rules: nodes with ``dur`` (microseconds) become COMP nodes with
    runtime = round(dur * cycles_per_us); ``record_param_comms`` nodes become
    COMM_COLL by reading their ``nccl:<op>`` child's ``size``/``pg`` fields
    (the child itself is kept as a dependency-transparent INVALID node);
    anything else becomes INVALID. The result is split per the ``npu`` field.
    """
    raw_nodes = _pt_nodes(doc)
    children: dict[int, list[dict]] = {}
    for raw in raw_nodes.values():
        for dep in raw["ctrl_deps"]:
            children.setdefault(dep, []).append(raw)

    consumed: set[int] = set()
    converted: list[GlobalNode] = []
    for node_id in sorted(raw_nodes):
        raw = raw_nodes[node_id]
        name = raw["name"]
        attrs: dict[str, object] = {}
        if name == RECORD_PARAM_COMMS:
            child = _find_nccl_child(children.get(node_id, ()))
            if child is None:
                logger.warning(
                    "record_param_comms node %d has no interpretable nccl child; kept as INVALID",
                    node_id,
                )
                node_type = NodeType.INVALID
            else:
                suffix = child["name"].split(":", 1)[1]
                size = child.get("size")
                if not isinstance(size, int) or isinstance(size, bool) or size < 0:
                    logger.warning(
                        "comm node %d: nccl child %d lacks a usable size; kept as INVALID",
                        node_id,
                        child["id"],
                    )
                    node_type = NodeType.INVALID
                else:
                    node_type = NodeType.COMM_COLL
                    group = child.get("pg", "0")
                    attrs = {
                        ATTR_COMM_TYPE: _NCCL_SUFFIX_TO_TYPE[suffix].value,
                        ATTR_COMM_SIZE: size,
                        ATTR_COMM_GROUP: group if isinstance(group, str) else str(group),
                    }
                    consumed.add(child["id"])
        elif isinstance(raw.get("dur"), (int, float)) and not isinstance(raw.get("dur"), bool):
            node_type = NodeType.COMP
            attrs = {ATTR_RUNTIME: max(0, round(raw["dur"] * cycles_per_us))}
        else:
            node_type = NodeType.INVALID
        converted.append(
            GlobalNode(
                id=node_id,
                name=name,
                type=node_type,
                parents=tuple(raw["ctrl_deps"]),
                attributes=make_attributes(attrs),
                npu=raw["npu"],
            )
        )

    # Children consumed into their comm parent stay as INVALID placeholders so
    # downstream dependency paths through them remain intact.
    final = [
        gn if gn.id not in consumed else GlobalNode(gn.id, gn.name, NodeType.INVALID, gn.parents, (), gn.npu)
        for gn in converted
    ]
    return split_per_npu(final)


def convert_pytorch_json(text: "str | bytes", cycles_per_us: float = 1.0) -> list[Trace]:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConvertError(f"input is not valid JSON: {exc}") from None
    return convert_pytorch(doc, cycles_per_us)


def _pt_nodes(doc: object) -> "dict[int, dict]":
    if not isinstance(doc, dict) or not isinstance(doc.get("nodes"), list):
        raise ConvertError("document must be an object with a 'nodes' array")
    out: dict[int, dict] = {}
    for i, raw in enumerate(doc["nodes"]):
        if not isinstance(raw, dict):
            raise ConvertError(f"nodes[{i}] is not an object")
        node_id = raw.get("id")
        if not isinstance(node_id, int) or isinstance(node_id, bool):
            raise ConvertError(f"nodes[{i}] lacks an integer id")
        if node_id in out:
            raise ConvertError(f"duplicate node id {node_id}")
        name = raw.get("name")
        if not isinstance(name, str):
            raise ConvertError(f"node {node_id} lacks a string name")
        deps = raw.get("ctrl_deps", [])
        if not isinstance(deps, list) or not all(isinstance(d, int) and not isinstance(d, bool) for d in deps):
            raise ConvertError(f"node {node_id}: ctrl_deps must be a list of ids")
        npu = raw.get("npu", 0)
        if not isinstance(npu, int) or isinstance(npu, bool):
            raise ConvertError(f"node {node_id}: npu must be an integer")
        out[node_id] = {**raw, "name": name, "ctrl_deps": deps, "npu": npu, "id": node_id}
    for node_id, raw in out.items():
        for dep in raw["ctrl_deps"]:
            if dep not in out:
                raise ConvertError(f"node {node_id} references unknown ctrl_dep {dep}")
    return out


def _find_nccl_child(children: Iterable[dict]) -> "dict | None":
    for child in sorted(children, key=lambda c: c["id"]):
        name = child.get("name", "")
        if name.startswith("nccl:") and name.split(":", 1)[1] in _NCCL_SUFFIX_TO_TYPE:
            return child
    return None


# --------------------------------------------------------------------------
# FlexFlow-style DOT dialect
# --------------------------------------------------------------------------

_DOT_HEADER_RE = re.compile(r"^\s*(strict\s+)?digraph\s+\w*\s*\{\s*$")
_DOT_NODE_RE = re.compile(r"^\s*\"?(\w+)\"?\s*\[(.*)\]\s*;?\s*$")
_DOT_EDGE_RE = re.compile(r"^\s*\"?(\w+)\"?\s*->\s*\"?(\w+)\"?\s*(\[.*\])?\s*;?\s*$")
_DOT_ATTR_RE = re.compile(r"\s*(\w+)\s*=\s*(\"[^\"]*\"|[^,\]]+)\s*(?:,|$)")

XFER_P2P = "XferP2P"
_MEM_LABELS = {"MemLoad": NodeType.MEM_LOAD, "MemStore": NodeType.MEM_STORE}


def convert_flexflow(text: str) -> list[Trace]:
    """Convert FlexFlow-style DOT text into per-NPU traces.

    Node statements carry key=value metadata: ``label`` selects the operator.
    Operators with ``cycles`` become COMP nodes; ``MemLoad``/``MemStore`` with
    ``bytes`` become memory nodes; ``XferP2P`` (src/dst/bytes) becomes a
    tagged SEND/RECV pair; unknown operators become INVALID. DOT edges map to
    dependency edges.
    """
    parsed_nodes, parsed_edges = _parse_dot(text)

    converted: dict[str, GlobalNode] = {}
    xfer_ends: dict[str, tuple[int, int]] = {}  # dot id -> (send id, recv id)
    next_id = 1
    next_tag = 1
    for dot_id in parsed_nodes:  # insertion = declaration order
        attrs, line_no = parsed_nodes[dot_id]
        label = attrs.get("label", "")
        if label == XFER_P2P:
            src = _dot_int(attrs, "src", dot_id, line_no)
            dst = _dot_int(attrs, "dst", dot_id, line_no)
            size = _dot_int(attrs, "bytes", dot_id, line_no)
            send_id, recv_id = next_id, next_id + 1
            next_id += 2
            tag = next_tag
            next_tag += 1
            converted[dot_id] = GlobalNode(
                send_id,
                f"{dot_id}_send",
                NodeType.COMM_SEND,
                parents=(),
                attributes=make_attributes({ATTR_COMM_SIZE: size, ATTR_COMM_PEER: dst, ATTR_COMM_TAG: tag}),
                npu=src,
            )
            # The recv half lives outside `converted`; edges out of the xfer
            # node are rewired onto it below.
            xfer_ends[dot_id] = (send_id, recv_id)
            converted[f"{dot_id}__recv"] = GlobalNode(
                recv_id,
                f"{dot_id}_recv",
                NodeType.COMM_RECV,
                parents=(),
                attributes=make_attributes({ATTR_COMM_SIZE: size, ATTR_COMM_PEER: src, ATTR_COMM_TAG: tag}),
                npu=dst,
            )
            continue
        npu = _dot_int(attrs, "npu", dot_id, line_no, default=0)
        if label in _MEM_LABELS:
            size = _dot_int(attrs, "bytes", dot_id, line_no, default=0)
            node_type = _MEM_LABELS[label]
            node_attrs: dict[str, object] = {ATTR_TENSOR_SIZE: size}
        elif "cycles" in attrs:
            node_type = NodeType.COMP
            node_attrs = {ATTR_RUNTIME: _dot_int(attrs, "cycles", dot_id, line_no)}
        else:
            node_type = NodeType.INVALID
            node_attrs = {}
        converted[dot_id] = GlobalNode(
            next_id, label or dot_id, node_type, (), make_attributes(node_attrs), npu
        )
        next_id += 1

    # Wire edges: into an xfer -> its send half; out of an xfer -> from its recv half.
    parents: dict[int, list[int]] = {gn.id: [] for gn in converted.values()}
    for (src_dot, dst_dot), line_no in parsed_edges:
        src_gn = converted[src_dot]
        src_id = xfer_ends[src_dot][1] if src_dot in xfer_ends else src_gn.id
        dst_gn = converted[dst_dot]
        dst_id = xfer_ends[dst_dot][0] if dst_dot in xfer_ends else dst_gn.id
        if src_id not in (dst_id, *parents[dst_id]):
            parents[dst_id].append(src_id)

    final = [
        GlobalNode(gn.id, gn.name, gn.type, tuple(parents[gn.id]), gn.attributes, gn.npu)
        for gn in converted.values()
    ]
    return split_per_npu(final)


def _dot_int(
    attrs: "dict[str, str]", key: str, dot_id: str, line_no: int, default: "int | None" = None
) -> int:
    if key not in attrs:
        if default is not None:
            return default
        raise DotParseError(f"node {dot_id!r} is missing required attribute {key!r}", line_no)
    try:
        return int(attrs[key])
    except ValueError:
        raise DotParseError(f"node {dot_id!r}: attribute {key!r} is not an integer", line_no) from None


def _parse_dot(text: str) -> "tuple[dict[str, tuple[dict[str, str], int]], list[tuple[tuple[str, str], int]]]":
    nodes: dict[str, tuple[dict[str, str], int]] = {}
    edges: list[tuple[tuple[str, str], int]] = []
    opened = closed = False
    for line_no, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("//", 1)[0].strip()
        if not line:
            continue
        if not opened:
            if _DOT_HEADER_RE.match(line):
                opened = True
                continue
            raise DotParseError(f"expected 'digraph <name> {{', got {line!r}", line_no)
        if line == "}":
            closed = True
            continue
        if closed:
            raise DotParseError(f"content after closing brace: {line!r}", line_no)
        edge = _DOT_EDGE_RE.match(line)
        if edge:
            src, dst = edge.group(1), edge.group(2)
            for end in (src, dst):
                if end not in nodes:
                    raise DotParseError(f"edge references undeclared node {end!r}", line_no)
            edges.append(((src, dst), line_no))
            continue
        node = _DOT_NODE_RE.match(line)
        if node:
            dot_id, attr_text = node.group(1), node.group(2)
            if dot_id in nodes:
                raise DotParseError(f"node {dot_id!r} declared twice", line_no)
            attrs = {}
            for m in _DOT_ATTR_RE.finditer(attr_text):
                value = m.group(2).strip()
                if value.startswith('"') and value.endswith('"'):
                    value = value[1:-1]
                attrs[m.group(1)] = value
            nodes[dot_id] = (attrs, line_no)
            continue
        raise DotParseError(f"unparseable statement: {line!r}", line_no)
    if not opened:
        raise DotParseError("no digraph header found", max(1, text.count("\n") + 1))
    if not closed:
        raise DotParseError("missing closing '}'", text.count("\n") + 1)
    return nodes, edges
