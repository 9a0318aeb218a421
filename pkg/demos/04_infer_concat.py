"""Infer invariants for list concatenation at its entry and both returns."""

from __future__ import annotations

from heapinv import builtin_env, infer, isomorphic, run_builtin
from heapinv.dsl import format_formula, parse_formula
from heapinv.programs import specs_for

env = builtin_env()
tf = run_builtin("dll_concat", specs_for("dll_concat", [3, 2]))
scope = ["x", "y", "res"]

# the hand-written descriptions we hope to recover
expected = {
    "L1": "exists u1, u2, u3, u4 . dll(x, u1, u2, nil) * dll(y, u3, u4, nil) & u3 = nil",
    "L2": "exists u1, u2 . dll(y, u1, u2, nil) & u1 = nil & x = nil & res = y",
    "L3": "exists u1, u3, u5, tmp . dll(x, u1, x, tmp) * dll(tmp, x, u3, y) * dll(y, u3, u5, nil) & res = x",
}
for loc, text in expected.items():
    results = infer(tf.at(loc), env, scope=scope, params=tf.params)
    want = parse_formula(text, env)
    rank = next(i for i, r in enumerate(results) if isomorphic(r.formula, want))
    print(f"{loc}: {len(results)} invariants from {len(tf.at(loc))} snapshots")
    print(f"   best:     {format_formula(results[0].formula, env)}")
    print(f"   expected: {format_formula(results[rank].formula, env)}  (rank {rank})")
