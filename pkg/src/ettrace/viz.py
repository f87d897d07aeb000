"""Human-readable views of traces and replay timelines.

* Graphviz DOT text for a single trace (node names + dependency edges).
* The replay timeline CSV format (``issue``/``callback`` rows).
* Conversion of a timeline into Chrome trace-viewer JSON, where each
  issue/callback pair becomes one complete ("X") event.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

from .schema import ETNode, NodeType, Trace

ISSUE = "issue"
CALLBACK = "callback"

# Chrome trace rows: one lane per resource class on every process (= GPU).
TID_MEMORY = 1
TID_COMPUTE = 2
TID_COMM = 3

_TID_FOR_TYPE = {
    NodeType.MEM_LOAD: TID_MEMORY,
    NodeType.MEM_STORE: TID_MEMORY,
    NodeType.COMP: TID_COMPUTE,
    NodeType.COMM_SEND: TID_COMM,
    NodeType.COMM_RECV: TID_COMM,
    NodeType.COMM_COLL: TID_COMM,
}


class TimelineError(ValueError):
    pass


@dataclass(frozen=True)
class TimelineRow:
    event: str  # ISSUE or CALLBACK
    gpu_id: int
    cycle: int
    node_id: int
    node_name: str


def emit_timeline_csv(rows: Iterable[TimelineRow]) -> str:
    lines = [f"{r.event},[{r.gpu_id}],[{r.cycle}],[{r.node_id}],[{r.node_name}]" for r in rows]
    return "\n".join(lines) + ("\n" if lines else "")


def _unbracket(field: str, what: str, line_no: int) -> str:
    field = field.strip()
    if not (field.startswith("[") and field.endswith("]")):
        raise TimelineError(f"line {line_no}: {what} field {field!r} is not bracketed")
    return field[1:-1]


def parse_timeline_csv(text: str) -> list[TimelineRow]:
    rows: list[TimelineRow] = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        parts = line.split(",", 4)  # node names may contain commas
        if len(parts) != 5:
            raise TimelineError(f"line {line_no}: expected 5 fields, got {len(parts)}")
        event = parts[0].strip()
        if event not in (ISSUE, CALLBACK):
            raise TimelineError(f"line {line_no}: unknown event {event!r}")
        try:
            gpu = int(_unbracket(parts[1], "gpu_id", line_no))
            cycle = int(_unbracket(parts[2], "cycle", line_no))
            node = int(_unbracket(parts[3], "node_id", line_no))
        except ValueError as exc:
            if isinstance(exc, TimelineError):
                raise
            raise TimelineError(f"line {line_no}: non-integer field ({exc})") from None
        name = _unbracket(parts[4], "node_name", line_no)
        rows.append(TimelineRow(event, gpu, cycle, node, name))
    return rows


# --------------------------------------------------------------------------
# DOT
# --------------------------------------------------------------------------


def _dot_escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace('"', '\\"')


def emit_dot(trace: Trace, graph_name: str = "et") -> str:
    """Graphviz text: one statement per node (labeled with its name) and edge."""
    nodes = sorted(trace.nodes, key=lambda n: n.id)
    if not nodes:
        return f"digraph {graph_name} {{ }}\n"
    lines = [f"digraph {graph_name} {{"]
    for node in nodes:
        lines.append(f'  {node.id} [label="{_dot_escape(node.name)}"];')
    for node in nodes:
        for pid in sorted(set(node.parents)):
            lines.append(f"  {pid} -> {node.id};")
    lines.append("}")
    return "\n".join(lines) + "\n"


# --------------------------------------------------------------------------
# Chrome trace viewer
# --------------------------------------------------------------------------

TypeLookup = Callable[[int, int], NodeType]


def node_type_lookup(traces: "Sequence[Trace] | Iterable[Trace]") -> TypeLookup:
    """Build a (gpu_id, node_id) -> NodeType lookup from per-NPU traces."""
    table: dict[tuple[int, int], NodeType] = {}
    for trace in traces:
        for node in trace.nodes:
            table[(trace.npu_id, node.id)] = node.type

    def type_of(gpu_id: int, node_id: int) -> NodeType:
        try:
            return table[(gpu_id, node_id)]
        except KeyError:
            raise TimelineError(f"no node {node_id} on gpu {gpu_id} in the given traces") from None

    return type_of


def timeline_to_chrome_events(rows: Sequence[TimelineRow], type_of: TypeLookup) -> list[dict]:
    """Pair issue/callback rows into complete events, one per pair.

    ts/dur are in cycles; the viewer renders them as microseconds. Every
    issue needs a later callback for the same (gpu, node) and vice versa;
    leftovers mean the timeline is truncated or corrupt and raise.
    """
    open_issues: dict[tuple[int, int], TimelineRow] = {}
    events: list[dict] = []
    for row in rows:
        key = (row.gpu_id, row.node_id)
        if row.event == ISSUE:
            if key in open_issues:
                raise TimelineError(f"node {row.node_id} on gpu {row.gpu_id} issued twice without callback")
            open_issues[key] = row
        else:
            issue = open_issues.pop(key, None)
            if issue is None:
                raise TimelineError(f"callback without issue for node {row.node_id} on gpu {row.gpu_id}")
            if row.cycle < issue.cycle:
                raise TimelineError(f"node {row.node_id} on gpu {row.gpu_id}: callback precedes issue")
            node_type = type_of(row.gpu_id, row.node_id)
            tid = _TID_FOR_TYPE.get(node_type)
            if tid is None:
                raise TimelineError(f"node {row.node_id} on gpu {row.gpu_id} has untimeable type {node_type.name}")
            events.append(
                {
                    "name": issue.node_name,
                    "ph": "X",
                    "pid": row.gpu_id,
                    "tid": tid,
                    "ts": issue.cycle,
                    "dur": row.cycle - issue.cycle,
                }
            )
    if open_issues:
        missing = sorted(open_issues)
        raise TimelineError(f"issue rows without callbacks for (gpu, node) pairs: {missing}")
    return events


def timeline_to_chrome_trace(rows: Sequence[TimelineRow], type_of: TypeLookup) -> str:
    """JSON text (array-of-events form) for the Chrome trace viewer."""
    return json.dumps(timeline_to_chrome_events(rows, type_of), indent=1) + "\n"
