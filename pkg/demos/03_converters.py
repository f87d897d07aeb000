"""Import traces from two foreign formats and render one back out as DOT.

Sources:
  * PyTorch-subset JSON — profiler-style op lists where ``dur`` is
    microseconds and collectives appear as ``record_param_comms`` framework
    ops with an ``nccl:<op>`` child carrying size and process group.
  * FlexFlow-style DOT — a task graph whose node labels carry cycle counts,
    memory sizes, and explicit cross-device transfers (``XferP2P``).

Both converters return one validated trace per NPU; cross-NPU edges become
tagged SEND/RECV pairs so each per-NPU trace stays self-contained.
"""
import json

from ettrace import convert_flexflow, convert_pytorch_json, emit_dot
from ettrace.schema import get_attr


def show(traces, title):
    print(f"--- {title} ---")
    for t in traces:
        for n in t.nodes:
            attrs = {a.name: a.value for a in n.attributes}
            print(f"  npu{t.npu_id}  #{n.id} {n.type.name:9} {n.name!r:22} "
                  f"parents={list(n.parents)} {attrs}")
    print()


# A GPU trace fragment: two kernels, then an all-reduce recorded the way the
# profiler does it — a framework op whose nccl child holds the payload info.
pt_doc = {
    "nodes": [
        {"id": 10, "name": "aten::matmul", "dur": 125.0, "ctrl_deps": []},
        {"id": 11, "name": "aten::relu", "dur": 8.4, "ctrl_deps": [10]},
        {"id": 12, "name": "record_param_comms", "ctrl_deps": [11]},
        {"id": 13, "name": "nccl:all_reduce", "size": 4 << 20, "pg": "dp",
         "ctrl_deps": [12]},
    ]
}
traces = convert_pytorch_json(json.dumps(pt_doc), cycles_per_us=1000.0)
show(traces, "pytorch import (1 GHz clock, so 125us -> 125000 cycles)")

comm = traces[0].node(12)
assert get_attr(comm, "comm_type") == "ALL_REDUCE"
assert get_attr(comm, "comm_size") == 4 << 20
# the consumed nccl child remains as an INVALID placeholder to keep deps intact
assert traces[0].node(13).type.name == "INVALID"

# A two-device task graph with an explicit transfer between them.
dot_text = """\
digraph g {
  load   [label=MemLoad, bytes=1048576, npu=0];
  matmul [label=Dense, cycles=40000, npu=0];
  xfer   [label=XferP2P, src=0, dst=1, bytes=524288];
  relu   [label=Relu, cycles=900, npu=1];
  load -> matmul;
  matmul -> xfer;
  xfer -> relu;
}
"""
ff_traces = convert_flexflow(dot_text)
show(ff_traces, "flexflow import (send/recv pair share comm_tag)")

send = next(n for n in ff_traces[0].nodes if n.type.name == "COMM_SEND")
recv = next(n for n in ff_traces[1].nodes if n.type.name == "COMM_RECV")
assert get_attr(send, "comm_tag") == get_attr(recv, "comm_tag")
assert get_attr(send, "comm_peer") == 1 and get_attr(recv, "comm_peer") == 0

print("--- npu0 trace rendered as DOT ---")
print(emit_dot(ff_traces[0]))
