"""Brute-force satisfaction oracle, written straight from the textbook semantics.

Shares nothing with the checker besides the data types: every split of the
heap, every clause, and every instantiation over the finite candidate value
set is enumerated explicitly.
"""

from __future__ import annotations

import itertools
from typing import Iterable

from heapinv.core import (
    NIL,
    Emp,
    Env,
    EvalError,
    Formula,
    Int,
    IntLit,
    NilT,
    PointsTo,
    PredInstance,
    StackHeapModel,
    Var,
    eval_pure,
)


def candidates(model: StackHeapModel) -> list:
    vals = {NIL}
    vals.update(model.stack.values())
    for a, c in model.heap.items():
        vals.add(a)
        vals.update(c.fields)
    return sorted(vals, key=repr)


def subsets(items: Iterable) -> list[frozenset]:
    items = list(items)
    return [
        frozenset(c) for r in range(len(items) + 1) for c in itertools.combinations(items, r)
    ]


def _term(t, s):
    if isinstance(t, Var):
        return s[t.name]
    if isinstance(t, NilT):
        return NIL
    if isinstance(t, IntLit):
        return Int(t.k)
    raise TypeError(t)


def _pure_ok(ps, s) -> bool:
    try:
        return all(eval_pure(p, s) for p in ps)
    except EvalError:
        return False


class Oracle:
    def __init__(self, model: StackHeapModel, env: Env):
        self.model = model
        self.env = env
        self.cands = candidates(model)
        self.memo: dict = {}
        self.active: set = set()

    def atom(self, s, dom: frozenset, a) -> bool:
        if isinstance(a, Emp):
            return not dom
        if isinstance(a, PointsTo):
            x = _term(a.root, s)
            if dom != frozenset([x]):
                return False
            cell = self.model.heap[x]
            return cell.type == a.type and cell.fields == tuple(_term(t, s) for t in a.args)
        assert isinstance(a, PredInstance)
        args = tuple(_term(t, s) for t in a.args)
        key = (a.name, args, dom)
        if key in self.memo:
            return self.memo[key]
        if key in self.active:
            return False
        self.active.add(key)
        pdef = self.env.preds[a.name]
        ok = False
        for clause in pdef.clauses:
            base = {p: v for (p, _), v in zip(pdef.params, args)}
            for vals in itertools.product(self.cands, repeat=len(clause.exists)):
                s2 = dict(base)
                s2.update(zip(clause.exists, vals))
                if _pure_ok(clause.pure, s2) and self.spatial(s2, dom, list(clause.spatial)):
                    ok = True
                    break
            if ok:
                break
        self.active.discard(key)
        self.memo[key] = ok
        return ok

    def spatial(self, s, dom: frozenset, atoms: list) -> bool:
        if not atoms:
            return not dom
        first, rest = atoms[0], atoms[1:]
        for h1 in subsets(dom):
            if self.atom(s, h1, first) and self.spatial(s, dom - h1, rest):
                return True
        return False

    def formula(self, dom: frozenset, f: Formula, inst: dict | None = None) -> bool:
        if inst is not None:
            combos = [tuple(inst[u] for u in f.exists)]
        else:
            combos = itertools.product(self.cands, repeat=len(f.exists))
        for vals in combos:
            s = dict(self.model.stack)
            s.update(zip(f.exists, vals))
            if _pure_ok(f.pure, s) and self.spatial(s, dom, list(f.spatial)):
                return True
        return False


def satisfies(model: StackHeapModel, f: Formula, env: Env, dom=None, inst=None) -> bool:
    """``s, h|dom |= f`` (whole heap when ``dom`` is None)."""
    dom = frozenset(model.heap) if dom is None else frozenset(dom)
    return Oracle(model, env).formula(dom, f, inst)


def brute_check(model: StackHeapModel, f: Formula, env: Env) -> tuple[bool, int | None]:
    """Is there any reduction at all, and what is the smallest residual size?"""
    o = Oracle(model, env)
    best = None
    for dom in subsets(model.heap):
        if o.formula(dom, f):
            r = len(model.heap) - len(dom)
            best = r if best is None else min(best, r)
    return best is not None, best
