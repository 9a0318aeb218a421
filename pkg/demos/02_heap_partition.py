"""Cut each snapshot's heap at the cells other variables point to."""

from __future__ import annotations

from heapinv import run_builtin, split_heap
from heapinv.programs import specs_for

tf = run_builtin("dll_concat", specs_for("dll_concat", [3, 2]))
models = tf.at("L3")
part = split_heap(models, "x")
for m, sub, b in zip(models, part.sub_models, part.boundaries):
    stack = ", ".join(f"{v}={val}" for v, val in m.stack.items())
    print(f"{m.test_id} [{stack}]")
    print(f"   cells owned by x: {sorted(sub.heap)}  boundary: {sorted(b)}")
print("boundary shared by every snapshot:", sorted(part.common_boundary))
