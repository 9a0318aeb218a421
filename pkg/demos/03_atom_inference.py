"""Enumerate the single-predicate descriptions of one variable's sub-heaps."""

from __future__ import annotations

from heapinv import builtin_env, infer_atom, run_builtin, split_heap
from heapinv.canon import canonical_text
from heapinv.programs import specs_for

env = builtin_env()
tf = run_builtin("dll_concat", specs_for("dll_concat", [3, 2]))
part = split_heap(tf.at("L3"), "x")
results = infer_atom("x", part.sub_models, part.common_boundary, env)
print(f"{len(results)} candidates accepted on every sub-heap:")
for r in results:
    left = [len(h) for h in r.residuals]
    print(f"   {canonical_text(r.formula, env):45s} cells left per snapshot {left}")
