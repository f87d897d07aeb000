"""Trace serialization: canonical JSON and a compact binary container.

Both codecs are deterministic (same trace -> same bytes) and reject inputs
they cannot faithfully represent, rather than guessing. Binary decode errors
report the absolute byte offset where the stream ran out or went bad.
"""
from __future__ import annotations

import io
import json
import struct
from pathlib import Path
from typing import BinaryIO, Iterable

from .schema import (
    Attribute,
    AttributeKind,
    ETNode,
    NodeType,
    Trace,
    attr_value_matches_kind,
    parse_schema_version,
)
from .validate import InvalidTraceError, validate_trace

MAGIC = b"CHKET\0"
FORMAT_JSON = "json"
FORMAT_BINARY = "binary"
TRACE_FILE_SUFFIX = ".et"


class DecodeError(ValueError):
    """Malformed trace bytes. ``offset`` is set for binary truncation/corruption."""

    def __init__(self, message: str, offset: "int | None" = None):
        self.offset = offset
        if offset is not None:
            message = f"{message} (at byte offset {offset})"
        super().__init__(message)


# --------------------------------------------------------------------------
# JSON
# --------------------------------------------------------------------------


def _attr_to_obj(attr: Attribute) -> dict:
    value = attr.value
    if isinstance(value, tuple):
        value = list(value)
    return {
        "name": attr.name,
        "kind": attr.kind.name,
        "doc_string": attr.doc_string,
        "value": value,
    }


def trace_to_obj(trace: Trace) -> dict:
    """Plain-dict form of a trace, with nodes in ascending id order."""
    return {
        "schema_version": trace.schema_version,
        "npu_id": trace.npu_id,
        "nodes": [
            {
                "id": node.id,
                "name": node.name,
                "type": node.type.name,
                "parents": list(node.parents),
                "attributes": [_attr_to_obj(a) for a in node.attributes],
            }
            for node in sorted(trace.nodes, key=lambda n: n.id)
        ],
    }


def _require(obj: dict, key: str, ctx: str) -> object:
    if key not in obj:
        raise DecodeError(f"{ctx}: missing required field {key!r}")
    return obj[key]


def _attr_from_obj(obj: object, ctx: str) -> Attribute:
    if not isinstance(obj, dict):
        raise DecodeError(f"{ctx}: attribute must be an object")
    name = _require(obj, "name", ctx)
    kind_name = _require(obj, "kind", ctx)
    value = _require(obj, "value", ctx)
    if not isinstance(name, str):
        raise DecodeError(f"{ctx}: attribute name must be a string")
    try:
        kind = AttributeKind[kind_name]  # type: ignore[index]
    except (KeyError, TypeError):
        raise DecodeError(f"{ctx}: unknown attribute kind {kind_name!r}") from None
    if isinstance(value, list):
        value = tuple(value)
    if kind is AttributeKind.FLOAT and isinstance(value, int) and not isinstance(value, bool):
        value = float(value)
    if kind is AttributeKind.FLOATS and isinstance(value, tuple):
        if all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
            value = tuple(float(v) for v in value)
    if not attr_value_matches_kind(kind, value):
        raise DecodeError(f"{ctx}: attribute {name!r} value {value!r} does not match kind {kind.name}")
    doc = obj.get("doc_string", "")
    if not isinstance(doc, str):
        raise DecodeError(f"{ctx}: doc_string must be a string")
    return Attribute(name, kind, value, doc)


def _node_from_obj(obj: object) -> ETNode:
    if not isinstance(obj, dict):
        raise DecodeError("node must be an object")
    node_id = _require(obj, "id", "node")
    if not isinstance(node_id, int) or isinstance(node_id, bool):
        raise DecodeError("node id must be an integer")
    ctx = f"node {node_id}"
    name = _require(obj, "name", ctx)
    if not isinstance(name, str):
        raise DecodeError(f"{ctx}: name must be a string")
    type_name = _require(obj, "type", ctx)
    try:
        node_type = NodeType[type_name]  # type: ignore[index]
    except (KeyError, TypeError):
        raise DecodeError(f"{ctx}: unknown node type {type_name!r}") from None
    parents = obj.get("parents", [])
    if not isinstance(parents, list) or not all(
        isinstance(p, int) and not isinstance(p, bool) for p in parents
    ):
        raise DecodeError(f"{ctx}: parents must be a list of integers")
    attrs_obj = obj.get("attributes", [])
    if not isinstance(attrs_obj, list):
        raise DecodeError(f"{ctx}: attributes must be a list")
    attrs = tuple(_attr_from_obj(a, ctx) for a in attrs_obj)
    return ETNode(node_id, name, node_type, tuple(parents), attrs)


def trace_from_obj(obj: object) -> Trace:
    if not isinstance(obj, dict):
        raise DecodeError("trace must be a JSON object")
    version = _require(obj, "schema_version", "trace")
    if not isinstance(version, str):
        raise DecodeError("schema_version must be a string")
    try:
        major, _ = parse_schema_version(version)
    except ValueError as exc:
        raise DecodeError(str(exc)) from None
    if major > 0:
        raise DecodeError(f"unsupported schema_version {version!r}: major version too new")
    npu_id = _require(obj, "npu_id", "trace")
    if not isinstance(npu_id, int) or isinstance(npu_id, bool):
        raise DecodeError("npu_id must be an integer")
    nodes_obj = _require(obj, "nodes", "trace")
    if not isinstance(nodes_obj, list):
        raise DecodeError("nodes must be a list")
    nodes = tuple(_node_from_obj(n) for n in nodes_obj)
    return Trace(npu_id=npu_id, nodes=nodes, schema_version=version)


def trace_to_json(trace: Trace) -> str:
    return json.dumps(trace_to_obj(trace), indent=2) + "\n"


def trace_from_json(text: "str | bytes") -> Trace:
    if isinstance(text, bytes):
        text = text.decode("utf-8")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise DecodeError(f"not valid JSON: {exc}") from None
    return trace_from_obj(obj)


# --------------------------------------------------------------------------
# Binary
# --------------------------------------------------------------------------

_TYPE_TAGS = {t: t.value for t in NodeType}
_TYPE_FROM_TAG = {t.value: t for t in NodeType}
_KIND_TAGS = {k: k.value for k in AttributeKind}
_KIND_FROM_TAG = {k.value: k for k in AttributeKind}


def _pack_str(out: io.BytesIO, text: str, width: str) -> None:
    raw = text.encode("utf-8")
    out.write(struct.pack(f"<{width}", len(raw)))
    out.write(raw)


def _pack_attr(out: io.BytesIO, attr: Attribute) -> None:
    if not attr_value_matches_kind(attr.kind, attr.value):
        raise ValueError(f"attribute {attr.name!r}: value does not match kind {attr.kind.name}")
    _pack_str(out, attr.name, "H")
    out.write(struct.pack("<B", _KIND_TAGS[attr.kind]))
    _pack_str(out, attr.doc_string, "I")
    kind, value = attr.kind, attr.value
    if kind is AttributeKind.FLOAT:
        out.write(struct.pack("<d", float(value)))
    elif kind is AttributeKind.INT:
        out.write(struct.pack("<q", value))
    elif kind is AttributeKind.STRING:
        _pack_str(out, value, "I")
    elif kind is AttributeKind.FLOATS:
        out.write(struct.pack("<I", len(value)))
        out.write(struct.pack(f"<{len(value)}d", *[float(v) for v in value]))
    elif kind is AttributeKind.INTS:
        out.write(struct.pack("<I", len(value)))
        out.write(struct.pack(f"<{len(value)}q", *value))
    elif kind is AttributeKind.STRINGS:
        out.write(struct.pack("<I", len(value)))
        for item in value:
            _pack_str(out, item, "I")


def _pack_node(node: ETNode) -> bytes:
    body = io.BytesIO()
    body.write(struct.pack("<Q", node.id))
    _pack_str(body, node.name, "H")
    body.write(struct.pack("<B", _TYPE_TAGS[node.type]))
    body.write(struct.pack("<I", len(node.parents)))
    if node.parents:
        body.write(struct.pack(f"<{len(node.parents)}Q", *node.parents))
    body.write(struct.pack("<H", len(node.attributes)))
    for attr in node.attributes:
        _pack_attr(body, attr)
    return body.getvalue()


def trace_to_binary(trace: Trace) -> bytes:
    major, minor = parse_schema_version(trace.schema_version)
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<BB", major, minor))
    out.write(struct.pack("<I", trace.npu_id))
    nodes = sorted(trace.nodes, key=lambda n: n.id)
    out.write(struct.pack("<I", len(nodes)))
    for node in nodes:
        record = _pack_node(node)
        out.write(struct.pack("<I", len(record)))
        out.write(record)
    return out.getvalue()


class _Reader:
    """Tracks the absolute offset so errors can point at the bad byte."""

    def __init__(self, data: bytes):
        self.data = data
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.data):
            raise DecodeError(f"truncated while reading {what}", offset=self.pos)
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def unpack(self, fmt: str, what: str) -> tuple:
        size = struct.calcsize(fmt)
        return struct.unpack(fmt, self.take(size, what))

    def take_str(self, width: str, what: str) -> str:
        (length,) = self.unpack(f"<{width}", f"{what} length")
        raw = self.take(length, what)
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError:
            raise DecodeError(f"{what} is not valid UTF-8", offset=self.pos - length) from None


def _unpack_attr(rd: _Reader) -> Attribute:
    name = rd.take_str("H", "attribute name")
    tag_offset = rd.pos
    (kind_tag,) = rd.unpack("<B", "attribute kind")
    kind = _KIND_FROM_TAG.get(kind_tag)
    if kind is None:
        raise DecodeError(f"unknown attribute kind tag {kind_tag}", offset=tag_offset)
    doc = rd.take_str("I", "attribute doc_string")
    value: object
    if kind is AttributeKind.FLOAT:
        (value,) = rd.unpack("<d", "FLOAT value")
    elif kind is AttributeKind.INT:
        (value,) = rd.unpack("<q", "INT value")
    elif kind is AttributeKind.STRING:
        value = rd.take_str("I", "STRING value")
    elif kind is AttributeKind.FLOATS:
        (count,) = rd.unpack("<I", "FLOATS count")
        value = rd.unpack(f"<{count}d", "FLOATS values") if count else ()
    elif kind is AttributeKind.INTS:
        (count,) = rd.unpack("<I", "INTS count")
        value = rd.unpack(f"<{count}q", "INTS values") if count else ()
    else:  # STRINGS
        (count,) = rd.unpack("<I", "STRINGS count")
        value = tuple(rd.take_str("I", "STRINGS item") for _ in range(count))
    return Attribute(name, kind, value, doc)


def _unpack_node(rd: _Reader, end: int) -> ETNode:
    (node_id,) = rd.unpack("<Q", "node id")
    name = rd.take_str("H", "node name")
    tag_offset = rd.pos
    (type_tag,) = rd.unpack("<B", "node type")
    node_type = _TYPE_FROM_TAG.get(type_tag)
    if node_type is None:
        raise DecodeError(f"unknown node type tag {type_tag}", offset=tag_offset)
    (parent_count,) = rd.unpack("<I", "parent count")
    parents = rd.unpack(f"<{parent_count}Q", "parents") if parent_count else ()
    (attr_count,) = rd.unpack("<H", "attribute count")
    attrs = tuple(_unpack_attr(rd) for _ in range(attr_count))
    if rd.pos != end:
        raise DecodeError(
            f"node {node_id} record has {end - rd.pos} unread trailing bytes", offset=rd.pos
        )
    return ETNode(node_id, name, node_type, parents, attrs)


def trace_from_binary(data: bytes) -> Trace:
    rd = _Reader(data)
    magic = rd.take(len(MAGIC), "magic")
    if magic != MAGIC:
        raise DecodeError(f"bad magic {magic!r}, expected {MAGIC!r}", offset=0)
    major, minor = rd.unpack("<BB", "version")
    if major > 0:
        raise DecodeError(f"unsupported major version {major}", offset=len(MAGIC))
    (npu_id,) = rd.unpack("<I", "npu_id")
    (node_count,) = rd.unpack("<I", "node count")
    nodes = []
    for _ in range(node_count):
        (record_len,) = rd.unpack("<I", "node record length")
        end = rd.pos + record_len
        if end > len(data):
            raise DecodeError("truncated while reading node record", offset=rd.pos)
        nodes.append(_unpack_node(rd, end))
    if rd.pos != len(data):
        raise DecodeError("trailing bytes after last node record", offset=rd.pos)
    return Trace(npu_id=npu_id, nodes=tuple(nodes), schema_version=f"{major}.{minor}")


# --------------------------------------------------------------------------
# Format-agnostic entry points and file IO
# --------------------------------------------------------------------------


def encode_trace(trace: Trace, fmt: str = FORMAT_JSON, *, validate: bool = True) -> bytes:
    if validate:
        report = validate_trace(trace)
        if not report.ok:
            raise InvalidTraceError(report, "refusing to encode invalid trace")
    if fmt == FORMAT_JSON:
        return trace_to_json(trace).encode("utf-8")
    if fmt == FORMAT_BINARY:
        return trace_to_binary(trace)
    raise ValueError(f"unknown trace format {fmt!r}")


def decode_trace(data: bytes, fmt: "str | None" = None) -> Trace:
    """Decode trace bytes; sniffs the format when ``fmt`` is None."""
    if fmt is None:
        fmt = FORMAT_BINARY if data.startswith(MAGIC) else FORMAT_JSON
    if fmt == FORMAT_JSON:
        return trace_from_json(data)
    if fmt == FORMAT_BINARY:
        return trace_from_binary(data)
    raise ValueError(f"unknown trace format {fmt!r}")


def trace_filename(prefix: str, npu_id: int) -> str:
    return f"{prefix}.{npu_id}{TRACE_FILE_SUFFIX}"


def write_trace(trace: Trace, path: "str | Path", fmt: str = FORMAT_JSON, *, validate: bool = True) -> Path:
    path = Path(path)
    path.write_bytes(encode_trace(trace, fmt, validate=validate))
    return path


def read_trace(path: "str | Path", fmt: "str | None" = None) -> Trace:
    path = Path(path)
    try:
        return decode_trace(path.read_bytes(), fmt)
    except DecodeError as exc:
        raise DecodeError(f"{path}: {exc}", offset=None) from exc


def write_workload(
    traces: Iterable[Trace],
    directory: "str | Path",
    prefix: str = "trace",
    fmt: str = FORMAT_JSON,
    *,
    validate: bool = True,
) -> list[Path]:
    """Write one ``<prefix>.<npu_id>.et`` file per trace; returns the paths."""
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for trace in sorted(traces, key=lambda t: t.npu_id):
        paths.append(write_trace(trace, directory / trace_filename(prefix, trace.npu_id), fmt, validate=validate))
    return paths


def read_workload(directory: "str | Path", prefix: str = "trace") -> list[Trace]:
    """Read every ``<prefix>.<npu_id>.et`` under ``directory``, ordered by npu_id."""
    directory = Path(directory)
    found: list[tuple[int, Path]] = []
    for path in directory.glob(f"{prefix}.*{TRACE_FILE_SUFFIX}"):
        stem = path.name[len(prefix) + 1 : -len(TRACE_FILE_SUFFIX)]
        if stem.isdigit():
            found.append((int(stem), path))
    if not found:
        raise FileNotFoundError(f"no {prefix}.<npu_id>{TRACE_FILE_SUFFIX} files in {directory}")
    traces = []
    for npu_id, path in sorted(found):
        trace = read_trace(path)
        if trace.npu_id != npu_id:
            raise DecodeError(f"{path}: filename says npu {npu_id} but trace says {trace.npu_id}")
        traces.append(trace)
    return traces
