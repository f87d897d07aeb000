import json

import pytest

from ettrace.builder import TraceBuilder
from ettrace.schema import ETNode, NodeType, Trace
from ettrace.viz import (
    TID_COMM,
    TID_COMPUTE,
    TID_MEMORY,
    TimelineError,
    TimelineRow,
    emit_dot,
    emit_timeline_csv,
    node_type_lookup,
    parse_timeline_csv,
    timeline_to_chrome_events,
    timeline_to_chrome_trace,
)


def test_dot_empty_trace():
    assert emit_dot(Trace(0, ())) == "digraph et { }\n"


def test_dot_two_node_chain():
    b = TraceBuilder(0)
    a = b.comp("fwd", 5)
    b.comp("bwd", 5, parents=[a])
    text = emit_dot(b.build())
    assert text == (
        "digraph et {\n"
        '  1 [label="fwd"];\n'
        '  2 [label="bwd"];\n'
        "  1 -> 2;\n"
        "}\n"
    )


def test_dot_escapes_quotes_and_backslashes():
    trace = Trace(0, (ETNode(1, 'say "hi" \\ bye', NodeType.COMP, attributes=()),))
    text = emit_dot(trace, graph_name="g")
    assert text.startswith("digraph g {")
    assert 'label="say \\"hi\\" \\\\ bye"' in text


def test_dot_duplicate_parent_edges_collapse():
    trace = Trace(0, (
        ETNode(1, "a", NodeType.COMP),
        ETNode(2, "b", NodeType.COMP, parents=(1, 1)),
    ))
    assert emit_dot(trace, graph_name="g").count("1 -> 2;") == 1


def rows():
    return [
        TimelineRow("issue", 0, 0, 1, "ld, with comma"),
        TimelineRow("callback", 0, 7, 1, "ld, with comma"),
    ]


def test_timeline_csv_roundtrip_with_commas_in_name():
    text = emit_timeline_csv(rows())
    assert text == "issue,[0],[0],[1],[ld, with comma]\ncallback,[0],[7],[1],[ld, with comma]\n"
    assert parse_timeline_csv(text) == rows()


def test_timeline_csv_empty():
    assert emit_timeline_csv([]) == ""
    assert parse_timeline_csv("") == []
    assert parse_timeline_csv("\n  \n") == []


def test_timeline_parse_errors_name_line_numbers():
    with pytest.raises(TimelineError, match="line 1: expected 5 fields"):
        parse_timeline_csv("issue,[0],[1]")
    with pytest.raises(TimelineError, match="line 2: unknown event 'boop'"):
        parse_timeline_csv("issue,[0],[0],[1],[a]\nboop,[0],[0],[1],[a]")
    with pytest.raises(TimelineError, match=r"line 1: cycle field '3' is not bracketed"):
        parse_timeline_csv("issue,[0],3,[1],[a]")
    with pytest.raises(TimelineError, match="line 1: non-integer"):
        parse_timeline_csv("issue,[0],[x],[1],[a]")


def lookup_for(node_type):
    return lambda gpu, node: node_type


def test_chrome_event_shape():
    events = timeline_to_chrome_events(rows(), lookup_for(NodeType.MEM_LOAD))
    assert events == [
        {"name": "ld, with comma", "ph": "X", "pid": 0, "tid": TID_MEMORY, "ts": 0, "dur": 7}
    ]


def test_chrome_tid_mapping():
    expect = {
        NodeType.MEM_LOAD: TID_MEMORY,
        NodeType.MEM_STORE: TID_MEMORY,
        NodeType.COMP: TID_COMPUTE,
        NodeType.COMM_SEND: TID_COMM,
        NodeType.COMM_RECV: TID_COMM,
        NodeType.COMM_COLL: TID_COMM,
    }
    assert (TID_MEMORY, TID_COMPUTE, TID_COMM) == (1, 2, 3)
    for node_type, tid in expect.items():
        events = timeline_to_chrome_events(rows(), lookup_for(node_type))
        assert events[0]["tid"] == tid


def test_chrome_invalid_type_rejected():
    with pytest.raises(TimelineError, match="untimeable type INVALID"):
        timeline_to_chrome_events(rows(), lookup_for(NodeType.INVALID))


def test_chrome_pairing_errors():
    issue = TimelineRow("issue", 0, 0, 1, "a")
    with pytest.raises(TimelineError, match="issued twice"):
        timeline_to_chrome_events([issue, issue], lookup_for(NodeType.COMP))
    with pytest.raises(TimelineError, match="callback without issue"):
        timeline_to_chrome_events([TimelineRow("callback", 0, 5, 1, "a")], lookup_for(NodeType.COMP))
    with pytest.raises(TimelineError, match="callback precedes issue"):
        timeline_to_chrome_events(
            [TimelineRow("issue", 0, 9, 1, "a"), TimelineRow("callback", 0, 5, 1, "a")],
            lookup_for(NodeType.COMP),
        )
    with pytest.raises(TimelineError, match=r"without callbacks .*\(0, 1\)"):
        timeline_to_chrome_events([issue], lookup_for(NodeType.COMP))


def test_chrome_same_node_id_on_two_gpus_is_fine():
    rows_ = [
        TimelineRow("issue", 0, 0, 1, "a"),
        TimelineRow("issue", 1, 0, 1, "b"),
        TimelineRow("callback", 1, 3, 1, "b"),
        TimelineRow("callback", 0, 4, 1, "a"),
    ]
    events = timeline_to_chrome_events(rows_, lookup_for(NodeType.COMP))
    assert [(e["pid"], e["dur"]) for e in events] == [(1, 3), (0, 4)]


def test_node_type_lookup_from_traces():
    b = TraceBuilder(3)
    b.comp("mm", 5)
    type_of = node_type_lookup([b.build()])
    assert type_of(3, 1) is NodeType.COMP
    with pytest.raises(TimelineError, match="no node 9 on gpu 3"):
        type_of(3, 9)


def test_chrome_trace_json_text():
    text = timeline_to_chrome_trace(rows(), lookup_for(NodeType.COMP))
    assert text.endswith("\n")
    assert text == json.dumps(json.loads(text), indent=1) + "\n"
    parsed = json.loads(text)
    assert isinstance(parsed, list) and len(parsed) == 1
    assert parsed[0]["ph"] == "X"
