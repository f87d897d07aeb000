"""Build a trace by hand, validate it, and round-trip it through both codecs.

A trace is a DAG of typed nodes (compute, memory, communication) with
extensible attributes. The JSON encoding is canonical — stable key order,
sorted ids, enum names as strings — so equal traces always serialize to
identical bytes. The binary encoding is a compact length-prefixed record
stream behind a magic/version header.
"""
from ettrace import (
    FORMAT_BINARY,
    FORMAT_JSON,
    CommType,
    TraceBuilder,
    decode_trace,
    encode_trace,
    validate_trace,
)

builder = TraceBuilder(npu_id=0)
load = builder.add_node("MEM_LOAD", "load_weights", {"tensor_size": 1 << 20})
fwd = builder.comp("fwd_pass", runtime=5_000, parents=[load])
grad = builder.comp("bwd_pass", runtime=9_000, parents=[fwd])
builder.coll("grad_allreduce", CommType.ALL_REDUCE, 4 << 20, "dp", parents=[grad])
trace = builder.build()

report = validate_trace(trace)
print(f"validation: {'OK' if report.ok else report}")

json_bytes = encode_trace(trace, FORMAT_JSON)
print("\ncanonical JSON:")
print(json_bytes.decode())

binary_bytes = encode_trace(trace, FORMAT_BINARY)
print(f"binary encoding: {len(binary_bytes)} bytes, header {binary_bytes[:8]!r}")

for fmt, blob in ((FORMAT_JSON, json_bytes), (FORMAT_BINARY, binary_bytes)):
    assert decode_trace(blob) == trace, fmt
print("both encodings decode back to the identical trace")
