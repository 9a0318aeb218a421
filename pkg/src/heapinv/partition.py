"""Splitting heaps into a root's sub-heap and the rest."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

from .core import NIL, Addr, Int, SLError, StackHeapModel, value_key

NIL_TOKEN = "nil"


@dataclass(frozen=True)
class PartitionResult:
    sub_models: list[StackHeapModel]
    rest_models: list[StackHeapModel]
    common_boundary: frozenset[str]
    boundaries: list[frozenset[str]]


def _split_one(m: StackHeapModel, root: str) -> tuple[set[Addr], frozenset[str]]:
    if root not in m.stack:
        raise SLError(f"root {root} is not on the stack of {m.test_id}")
    rv = m.stack[root]
    if isinstance(rv, Int):
        raise SLError(f"root {root} is an integer in {m.test_id}")
    ptr_vars = {v: val for v, val in m.stack.items() if not isinstance(val, Int)}
    aliases = {v for v, val in ptr_vars.items() if val == rv}
    if rv is NIL:
        return set(), frozenset(aliases | {NIL_TOKEN})

    by_value: dict = {}
    for v, val in ptr_vars.items():
        if val is not NIL:
            by_value.setdefault(val, set()).add(v)
    stop = {val for val, names in by_value.items() if not names <= aliases}

    boundary = set(aliases)
    sub: set[Addr] = set()
    seen_vals = set()
    todo = [rv]
    # iterative DFS, fields visited in declared order
    while todo:
        a = todo.pop()
        if a in sub:
            continue
        if a not in m.heap:
            continue
        sub.add(a)
        cell = m.heap[a]
        nxt = []
        for f in cell.fields:
            if isinstance(f, Int):
                continue
            seen_vals.add(f)
            if f is NIL or f in sub:
                continue
            if f in stop:
                continue
            nxt.append(f)
        todo.extend(reversed(nxt))
    for val in seen_vals:
        if val is NIL:
            boundary.add(NIL_TOKEN)
        else:
            boundary.update(by_value.get(val, ()))
    return sub, frozenset(boundary)


def split_heap(models: Sequence[StackHeapModel], root: str) -> PartitionResult:
    """DFS from ``root`` in every model, stopping at cells named by non-aliases.

    The boundary of a sub-heap holds the root, its aliases, ``nil`` when a
    sub-heap cell has a nil field, and every pointer variable whose value
    is a field value of a sub-heap cell.
    """
    subs, rests, bounds = [], [], []
    for m in models:
        sub, b = _split_one(m, root)
        subs.append(m.with_heap({a: c for a, c in m.heap.items() if a in sub}))
        rests.append(m.with_heap({a: c for a, c in m.heap.items() if a not in sub}))
        bounds.append(b)
    common = frozenset.intersection(*bounds) if bounds else frozenset()
    return PartitionResult(subs, rests, common, bounds)


def sorted_domain(heap) -> list[Addr]:
    return sorted(heap, key=value_key)
