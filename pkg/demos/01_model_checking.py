"""Check a formula against a concrete heap and read off what it leaves behind."""

from __future__ import annotations

from heapinv import NIL, Addr, Cell, StackHeapModel, builtin_env, check
from heapinv.dsl import format_formula, parse_formula

env = builtin_env()

# a three-cell doubly linked list, with x at the middle cell
heap = {
    Addr(1): Cell("Node", (Addr(2), NIL)),
    Addr(2): Cell("Node", (Addr(3), Addr(1))),
    Addr(3): Cell("Node", (NIL, Addr(2))),
}
model = StackHeapModel("t1", "demo", {"x": Addr(2)}, heap)

for text in [
    "exists p, t . dll(x, p, t, nil)",
    "exists h, t . dll(h, nil, t, nil)",
    "x -> Node(nil, nil)",
    "emp",
]:
    f = parse_formula(text, env)
    out = check(model, f, env)
    print(format_formula(f, env))
    if out.satisfied:
        print("   satisfied; residual cells:", sorted(out.residual), "witness:", out.instantiation)
    else:
        print("   not satisfied")
