"""Run the other built-in programs and print their top invariants."""

from __future__ import annotations

from heapinv import infer, run_many
from heapinv.dsl import format_formula
from heapinv.programs import default_corpus

for name in ("sll_reverse", "sorted_insert", "bst_insert"):
    tf = run_many(name, default_corpus(name))
    env = tf.env()
    print(name)
    for loc in tf.locations():
        models = tf.at(loc)
        loop = loc in tf.loops
        scope = None if loop else [*tf.params, "res"]
        top = infer(models, env, scope=scope, params=tf.params)[0]
        tag = "loop invariant" if loop else "invariant"
        print(f"   {loc} ({tag}, {len(models)} snapshots): {format_formula(top.formula, env)}")
