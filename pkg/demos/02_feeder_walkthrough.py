"""Drive the dependency feeder by hand through a diamond-shaped graph.

The feeder is the issue queue a simulator (or real runtime) sits on top of:
it hands out nodes whose parents have all completed, lets the consumer defer
a node it cannot issue yet (push it back to the tail), and unlocks children
when a node finishes. Any drain order it produces is a topological order.
"""
from ettrace import Feeder, TraceBuilder

#        fwd
#       /   \
#   grad_a  grad_b      (independent branches)
#       \   /
#       update
b = TraceBuilder(npu_id=0)
fwd = b.comp("fwd", 10)
grad_a = b.comp("grad_a", 4, parents=[fwd])
grad_b = b.comp("grad_b", 6, parents=[fwd])
update = b.comp("update", 2, parents=[grad_a, grad_b])
trace = b.build()
names = {n.id: n.name for n in trace.nodes}

feeder = Feeder(trace)
print(f"loaded {feeder.pending_count()} nodes, ready queue: "
      f"{[names[i] for i in feeder.queued_ids]}")

order = []
while feeder.has_nodes_to_issue():
    node = feeder.get_next_issuable_node()

    # Pretend grad_a's execution unit is busy the first time we see it:
    # push it back and take the next candidate instead.
    if node.id == grad_a and grad_a not in order and len(feeder.queued_ids) > 0:
        feeder.push_back_issuable_node(node.id)
        print(f"deferred {names[node.id]!r}, queue is now "
              f"{[names[i] for i in feeder.queued_ids]}")
        continue

    order.append(node.id)
    freed = feeder.free_children_nodes(node.id)
    print(f"ran {names[node.id]!r:10} freed {[names[i] for i in freed]}")

print(f"\ndrain order: {[names[i] for i in order]}")
assert order.index(fwd) == 0 and order.index(update) == 3
assert feeder.completed_ids == frozenset(order)
assert not feeder.has_nodes_to_issue() and feeder.pending_count() == 0
