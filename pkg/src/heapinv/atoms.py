"""Inferring the atomic predicate that describes one root's sub-heaps.

Three kinds of answer, tried in this order: instances of the user's
inductive predicates with boundary variables (or fresh existentials) as
arguments, a points-to cell when every sub-heap is a single cell, and
``emp`` when nothing else fits.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Mapping, Sequence

from .checker import check
from .core import (
    INT,
    NIL,
    NILT,
    Addr,
    Cell,
    Env,
    Formula,
    Int,
    PointsTo,
    PredicateDef,
    PredInstance,
    StackHeapModel,
    Value,
    Var,
)
from .partition import NIL_TOKEN


@dataclass(frozen=True)
class AtomResult:
    formula: Formula
    residuals: list[dict[Addr, Cell]]
    instantiations: list[dict[str, Value]]


class FreshNames:
    """Global supply of existential names that cannot clash with program variables."""

    def __init__(self, prefix: str = "_u"):
        self.prefix = prefix
        self.n = 0

    def __call__(self) -> str:
        self.n += 1
        return f"{self.prefix}{self.n}"

    def many(self, k: int) -> list[str]:
        return [self() for _ in range(k)]


def variable_types(models: Sequence[StackHeapModel]) -> dict[str, str | None]:
    """Record type each stack variable points to, ``"int"``, or None if never seen."""
    out: dict[str, str | None] = {}
    for m in models:
        for v, val in m.stack.items():
            if isinstance(val, Int):
                out[v] = INT
            elif isinstance(val, Addr) and val in m.heap and out.get(v) is None:
                out[v] = m.heap[val].type
            else:
                out.setdefault(v, None)
    return out


def boundary_order(root: str, boundary) -> list[str]:
    rest = sorted(b for b in boundary if b not in (root, NIL_TOKEN))
    out = [root] if root in boundary else []
    out += rest
    if NIL_TOKEN in boundary:
        out.append(NIL_TOKEN)
    return out


def _compatible(k: str, ptype: str, vtypes: Mapping[str, str | None]) -> bool:
    if ptype == INT:
        return False
    if k == NIL_TOKEN:
        return True
    t = vtypes.get(k)
    return t is None or t == ptype


def _arg_term(k: str):
    return NILT if k == NIL_TOKEN else Var(k)


def candidate_arguments(
    root: str,
    boundary,
    pred: PredicateDef,
    vtypes: Mapping[str, str | None],
    type_filter: bool = True,
):
    """Yield argument layouts: tuples of boundary names, with None for a fresh slot.

    Subsets containing the root are visited by ascending size; each layout
    is produced once (fresh slots are interchangeable).
    """
    n = pred.arity
    order = boundary_order(root, boundary)
    if root not in order:
        return
    others = order[1:]
    for size in range(1, min(n, len(order)) + 1):
        for extra in itertools.combinations(others, size - 1):
            chosen = (root, *extra)
            for slots in itertools.permutations(range(n), size):
                layout: list[str | None] = [None] * n
                for k, pos in zip(chosen, slots):
                    layout[pos] = k
                if type_filter and not all(
                    k is None or _compatible(k, t, vtypes)
                    for k, t in zip(layout, pred.param_types)
                ):
                    continue
                yield tuple(layout)


def _check_all(models, f: Formula, env: Env):
    residuals, insts = [], []
    consumed_any = False
    for m in models:
        out = check(m, f, env)
        if not out.satisfied:
            return None
        consumed_any = consumed_any or bool(out.consumed)
        residuals.append(out.residual)
        insts.append(out.instantiation)
    return residuals, insts, consumed_any


def infer_singleton(
    root: str,
    sub_models: Sequence[StackHeapModel],
    boundary,
    env: Env,
    fresh: FreshNames,
) -> list[AtomResult]:
    cells = []
    for m in sub_models:
        if len(m.heap) != 1:
            return []
        (addr, cell), = m.heap.items()
        if m.stack.get(root) != addr:
            return []
        cells.append(cell)
    tname = cells[0].type
    if any(c.type != tname for c in cells) or tname not in env.types:
        return []
    td = env.types[tname]
    order = [b for b in boundary_order(root, boundary) if b != NIL_TOKEN]
    args, exists = [], []
    for i, (_, ftype) in enumerate(td.fields):
        vals = [c.fields[i] for c in cells]
        term = None
        if ftype != INT:
            if all(v is NIL for v in vals):
                term = NILT
            else:
                for k in order:
                    if all(m.stack.get(k) == v for m, v in zip(sub_models, vals)):
                        term = Var(k)
                        break
        if term is None:
            u = fresh()
            exists.append(u)
            term = Var(u)
        args.append(term)
    f = Formula(tuple(exists), (PointsTo(Var(root), tname, tuple(args)),), ())
    got = _check_all(sub_models, f, env)
    if got is None:
        return []
    residuals, insts, _ = got
    return [AtomResult(f, residuals, insts)]


def emp_result(sub_models: Sequence[StackHeapModel]) -> AtomResult:
    return AtomResult(
        Formula(), [dict(m.heap) for m in sub_models], [{} for _ in sub_models]
    )


def infer_atom(
    root: str,
    sub_models: Sequence[StackHeapModel],
    boundary,
    env: Env,
    *,
    var_types: Mapping[str, str | None] | None = None,
    fresh: FreshNames | None = None,
    type_filter: bool = True,
) -> list[AtomResult]:
    """All atomic formulae over ``root`` accepted on every sub-model.

    Inductive candidates that consume no cell in any sub-model say nothing
    beyond ``emp`` and are dropped.
    """
    fresh = fresh or FreshNames()
    vtypes = var_types if var_types is not None else variable_types(sub_models)
    if all(m.stack[root] is NIL for m in sub_models):
        return [emp_result(sub_models)]
    root_type = vtypes.get(root)
    results: list[AtomResult] = []
    for pred in env.preds.values():
        if type_filter and not any(
            t != INT and (root_type is None or t == root_type) for t in pred.param_types
        ):
            continue
        for layout in candidate_arguments(root, boundary, pred, vtypes, type_filter):
            names = fresh.many(sum(1 for k in layout if k is None))
            it = iter(names)
            args = tuple(Var(next(it)) if k is None else _arg_term(k) for k in layout)
            f = Formula(tuple(names), (PredInstance(pred.name, args),), ())
            got = _check_all(sub_models, f, env)
            if got is None:
                continue
            residuals, insts, consumed_any = got
            if not consumed_any:
                continue
            results.append(AtomResult(f, residuals, insts))
    if all(len(m.heap) == 1 for m in sub_models):
        results.extend(infer_singleton(root, sub_models, boundary, env, fresh))
    if not results:
        results.append(emp_result(sub_models))
    return results
