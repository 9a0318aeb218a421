"""Symbolic-heap model checking with residual heaps and existential witnesses.

``check(model, F, env)`` searches for a sub-heap ``h'' <= h`` and an
instantiation of F's existentials such that ``s, h'' |= F``.  It returns the
reduction whose residual ``h \\ h''`` is smallest.  Ties are broken by the
consumed address set (lexicographic), the sequence of clause choices, and
finally the instantiation values (Nil < Int < Addr).

The search unfolds predicates clause by clause.  Existentials start out as
unbound logic variables; they get bound by unification against cell
addresses and field values, or by equalities in clause guards.  Whatever is
still unbound at the end is given the smallest observable value that
satisfies any pending arithmetic constraint.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Mapping, Sequence

from .core import (
    NIL,
    Add,
    Addr,
    And,
    Cell,
    Emp,
    Env,
    Eq,
    EvalError,
    Formula,
    Int,
    IntLit,
    Lt,
    Neg,
    NilT,
    Not,
    PointsTo,
    PredInstance,
    Scale,
    SLError,
    StackHeapModel,
    Sub,
    Value,
    Var,
    value_key,
)
from .dsl import recursive_clauses


class CheckError(SLError):
    """Ill-formed check request: unbound variable, unknown predicate, bad arity."""


class InternalCheckerError(SLError):
    """The unfolding bound was exceeded; indicates a bug, never a verdict."""


@dataclass(frozen=True)
class CheckOutcome:
    satisfied: bool
    residual: dict[Addr, Cell]
    instantiation: dict[str, Value]
    consumed: frozenset = field(default_factory=frozenset)


# Resolved terms are either a Value or a logic variable (a str).
# Resolved expressions are nested tuples:
#   ("c", value) | ("v", lvar) | ("neg", e) | ("add", a, b) | ("sub", a, b) | ("scale", k, e)
# Resolved pure atoms: ("eq", a, b) | ("lt", a, b) | ("not", p) | ("and", ps)


def _expr_lvars(e, out: set) -> None:
    tag = e[0]
    if tag == "v":
        out.add(e[1])
    elif tag == "c":
        return
    elif tag in ("neg",):
        _expr_lvars(e[1], out)
    elif tag == "scale":
        _expr_lvars(e[2], out)
    else:
        _expr_lvars(e[1], out)
        _expr_lvars(e[2], out)


def _pure_lvars(p, out: set) -> None:
    tag = p[0]
    if tag in ("eq", "lt"):
        _expr_lvars(p[1], out)
        _expr_lvars(p[2], out)
    elif tag == "not":
        _pure_lvars(p[1], out)
    else:
        for q in p[1]:
            _pure_lvars(q, out)


class _Search:
    def __init__(self, model: StackHeapModel, env: Env, rec: Mapping[str, tuple[bool, ...]], cap: int):
        self.heap = model.heap
        self.env = env
        self.rec = rec
        self.cap = cap
        self.bind: dict[str, object] = {}
        self.avail: set[Addr] = set(model.heap)
        self.consumed: list[Addr] = []
        self.trace: list[int] = []
        self.deferred: list = []
        self.unfolds = 0
        self.counter = 0
        self.by_type: dict[str, list[Addr]] = {}
        for a in sorted(model.heap, key=value_key):
            self.by_type.setdefault(model.heap[a].type, []).append(a)
        self.candidates = sorted(model.values(), key=value_key)
        self.best_key = None
        self.best = None
        self.top_lvars: list[str] = []

    # -- unification -------------------------------------------------------
    def walk(self, t):
        while isinstance(t, str):
            nxt = self.bind.get(t)
            if nxt is None:
                return t
            t = nxt
        return t

    def unify(self, a, b, trail: list) -> bool:
        a, b = self.walk(a), self.walk(b)
        if isinstance(a, str):
            if a == b:
                return True
            self.bind[a] = b
            trail.append(a)
            return True
        if isinstance(b, str):
            self.bind[b] = a
            trail.append(b)
            return True
        return a == b

    def undo(self, trail: list) -> None:
        for v in reversed(trail):
            del self.bind[v]
        trail.clear()

    # -- pure evaluation -----------------------------------------------------
    def eval_expr(self, e) -> Value:
        tag = e[0]
        if tag == "c":
            return e[1]
        if tag == "v":
            v = self.walk(e[1])
            if isinstance(v, str):
                raise LookupError(v)
            return v
        if tag == "neg":
            return Int(-_int(self.eval_expr(e[1])))
        if tag == "add":
            return Int(_int(self.eval_expr(e[1])) + _int(self.eval_expr(e[2])))
        if tag == "sub":
            return Int(_int(self.eval_expr(e[1])) - _int(self.eval_expr(e[2])))
        return Int(e[1] * _int(self.eval_expr(e[2])))

    def eval_pure(self, p) -> bool:
        tag = p[0]
        if tag == "eq":
            return self.eval_expr(p[1]) == self.eval_expr(p[2])
        if tag == "lt":
            return _int(self.eval_expr(p[1])) < _int(self.eval_expr(p[2]))
        if tag == "not":
            return not self.eval_pure(p[1])
        return all(self.eval_pure(q) for q in p[1])

    def try_pure(self, p) -> bool | None:
        """True/False when ground; None when some logic variable is unbound."""
        try:
            return self.eval_pure(p)
        except LookupError:
            return None
        except EvalError:
            return False

    def add_pure(self, p, trail: list, deferred_added: list) -> bool:
        if p[0] == "eq" and p[1][0] in ("c", "v") and p[2][0] in ("c", "v"):
            if not self.unify(p[1][1], p[2][1], trail):
                return False
            return self.recheck_deferred()
        r = self.try_pure(p)
        if r is None:
            self.deferred.append(p)
            deferred_added.append(p)
            return True
        return r

    def recheck_deferred(self) -> bool:
        for p in self.deferred:
            if self.try_pure(p) is False:
                return False
        return True

    # -- goal conversion -----------------------------------------------------
    def fresh(self, hint: str) -> str:
        self.counter += 1
        return f"?{self.counter}:{hint}"

    def res_expr(self, e, sub: Mapping[str, object]):
        if isinstance(e, Var):
            t = sub[e.name]
            return ("v", t) if isinstance(t, str) else ("c", t)
        if isinstance(e, NilT):
            return ("c", NIL)
        if isinstance(e, IntLit):
            return ("c", Int(e.k))
        if isinstance(e, Neg):
            return ("neg", self.res_expr(e.e, sub))
        if isinstance(e, Add):
            return ("add", self.res_expr(e.l, sub), self.res_expr(e.r, sub))
        if isinstance(e, Sub):
            return ("sub", self.res_expr(e.l, sub), self.res_expr(e.r, sub))
        if isinstance(e, Scale):
            return ("scale", e.k, self.res_expr(e.e, sub))
        raise TypeError(e)

    def res_pure(self, p, sub):
        if isinstance(p, Eq):
            return ("eq", self.res_expr(p.l, sub), self.res_expr(p.r, sub))
        if isinstance(p, Lt):
            return ("lt", self.res_expr(p.l, sub), self.res_expr(p.r, sub))
        if isinstance(p, Not):
            return ("not", self.res_pure(p.p, sub))
        if isinstance(p, And):
            return ("and", tuple(self.res_pure(q, sub) for q in p.ps))
        raise TypeError(p)

    def res_term(self, t, sub):
        if isinstance(t, Var):
            return sub[t.name]
        if isinstance(t, NilT):
            return NIL
        return Int(t.k)

    def res_atom(self, a, sub):
        if isinstance(a, PointsTo):
            return ("pt", self.res_term(a.root, sub), a.type, tuple(self.res_term(t, sub) for t in a.args))
        if isinstance(a, PredInstance):
            return ("pred", a.name, tuple(self.res_term(t, sub) for t in a.args))
        return None

    # -- search ----------------------------------------------------------------
    def run(self, goals: tuple) -> None:
        if not goals:
            self.leaf()
            return
        idx = self.pick(goals)
        g = goals[idx]
        rest = goals[:idx] + goals[idx + 1:]
        if g[0] == "pt":
            self.do_points_to(g, rest)
        else:
            self.do_unfold(g, rest)

    def pick(self, goals: tuple) -> int:
        unbound_pt = None
        for i, g in enumerate(goals):
            if g[0] == "pt":
                if not isinstance(self.walk(g[1]), str):
                    return i
                if unbound_pt is None:
                    unbound_pt = i
        if unbound_pt is not None:
            return unbound_pt
        return 0

    def do_points_to(self, g, rest) -> None:
        _, root, tname, args = g
        r = self.walk(root)
        if isinstance(r, str):
            choices = [a for a in self.by_type.get(tname, ()) if a in self.avail]
        else:
            if not isinstance(r, Addr) or r not in self.avail or self.heap[r].type != tname:
                return
            choices = [r]
        for a in choices:
            trail: list = []
            ok = True
            if isinstance(r, str):
                ok = self.unify(r, a, trail)
            if ok:
                for t, v in zip(args, self.heap[a].fields):
                    if not self.unify(t, v, trail):
                        ok = False
                        break
            if ok and trail:
                ok = self.recheck_deferred()
            if ok:
                self.avail.remove(a)
                self.consumed.append(a)
                self.run(rest)
                self.consumed.pop()
                self.avail.add(a)
            self.undo(trail)

    def do_unfold(self, g, rest) -> None:
        _, name, args = g
        pdef = self.env.preds[name]
        flags = self.rec[name]
        for ci, clause in enumerate(pdef.clauses):
            if flags[ci]:
                self.unfolds += 1
                if self.unfolds > self.cap:
                    raise InternalCheckerError(
                        f"unfolding bound {self.cap} exceeded while unfolding {name}"
                    )
            sub = {p: a for (p, _), a in zip(pdef.params, args)}
            for u in clause.exists:
                sub[u] = self.fresh(u)
            trail: list = []
            dadded: list = []
            ok = True
            for p in clause.pure:
                if not self.add_pure(self.res_pure(p, sub), trail, dadded):
                    ok = False
                    break
            if ok:
                new = tuple(x for x in (self.res_atom(a, sub) for a in clause.spatial) if x is not None)
                self.trace.append(ci)
                self.run(new + rest)
                self.trace.pop()
            for p in dadded:
                self.deferred.remove(p)
            self.undo(trail)
            if flags[ci]:
                self.unfolds -= 1

    def leaf(self) -> None:
        pending: set = set()
        for p in self.deferred:
            _pure_lvars(p, pending)
        pending = {w for w in (self.walk(v) for v in pending) if isinstance(w, str)}
        if not pending:
            if all(self.try_pure(p) for p in self.deferred):
                self.record()
            return
        order = []
        for v in self.top_lvars:
            w = self.walk(v)
            if isinstance(w, str) and w in pending and w not in order:
                order.append(w)
        order += sorted(pending - set(order))
        if len(order) > 4:
            raise InternalCheckerError("too many unconstrained logic variables in pure guards")
        trail: list = []
        for combo in itertools.product(self.candidates, repeat=len(order)):
            for v, val in zip(order, combo):
                self.bind[v] = val
                trail.append(v)
            ok = all(self.try_pure(p) for p in self.deferred)
            if ok:
                self.record()
            self.undo(trail)
            if ok:
                return

    def record(self) -> None:
        inst = []
        for v in self.top_lvars:
            w = self.walk(v)
            inst.append(NIL if isinstance(w, str) else w)
        key = (
            len(self.avail),
            tuple(sorted(value_key(a) for a in self.consumed)),
            tuple(self.trace),
            tuple(value_key(x) for x in inst),
        )
        if self.best_key is None or key < self.best_key:
            self.best_key = key
            self.best = (frozenset(self.consumed), inst)


def _int(v: Value) -> int:
    if not isinstance(v, Int):
        raise EvalError(f"integer operation applied to {v}")
    return v.k


def _recursion_flags(env: Env) -> Mapping[str, tuple[bool, ...]]:
    cached = getattr(env, "_rec_flags", None)
    if cached is not None and cached[0] is env.preds and cached[1] == len(env.preds):
        return cached[2]
    flags = recursive_clauses(env.preds.values())
    env._rec_flags = (env.preds, len(env.preds), flags)
    return flags


def validate_formula(f: Formula, env: Env, bound: set[str]) -> None:
    """Reject unbound variables, unknown predicates/types and arity mismatches."""
    ex = set(f.exists)
    for v in f.all_vars():
        if v not in ex and v not in bound:
            raise CheckError(f"unbound variable {v}")
    for a in f.spatial:
        if isinstance(a, PredInstance):
            p = env.preds.get(a.name)
            if p is None:
                raise CheckError(f"unknown predicate {a.name}")
            if p.arity != len(a.args):
                raise CheckError(f"{a.name} expects {p.arity} arguments, got {len(a.args)}")
        elif isinstance(a, PointsTo):
            td = env.types.get(a.type)
            if td is None:
                raise CheckError(f"unknown type {a.type}")
            if len(td.fields) != len(a.args):
                raise CheckError(f"{a.type} has {len(td.fields)} fields, got {len(a.args)}")


def check(
    model: StackHeapModel,
    f: Formula,
    env: Env,
    instantiation: Mapping[str, Value] | None = None,
) -> CheckOutcome:
    """Find the minimal-residual reduction of ``model`` against ``f``.

    With ``instantiation`` the listed existentials are fixed up front
    instead of searched.
    """
    validate_formula(f, env, set(model.stack))
    spatial = [a for a in f.spatial if not isinstance(a, Emp)]
    cap = len(model.heap) + len(spatial) + 1
    s = _Search(model, env, _recursion_flags(env), cap)
    sub: dict[str, object] = dict(model.stack)
    fixed = dict(instantiation or {})
    for u in f.exists:
        if u in fixed:
            sub[u] = fixed[u]
        else:
            lv = s.fresh(u)
            sub[u] = lv
            s.top_lvars.append(lv)
    trail: list = []
    dadded: list = []
    for p in f.pure:
        if not s.add_pure(s.res_pure(p, sub), trail, dadded):
            return CheckOutcome(False, dict(model.heap), {})
    goals = tuple(s.res_atom(a, sub) for a in spatial)
    s.run(goals)
    if s.best is None:
        return CheckOutcome(False, dict(model.heap), {})
    consumed, inst_vals = s.best
    inst = {u: fixed[u] for u in f.exists if u in fixed}
    free = [u for u in f.exists if u not in fixed]
    inst.update(zip(free, inst_vals))
    inst = {u: inst[u] for u in f.exists}
    residual = {a: c for a, c in model.heap.items() if a not in consumed}
    return CheckOutcome(True, residual, inst, consumed)


def check_sequence(
    models: Sequence[StackHeapModel], f: Formula, env: Env
) -> tuple[bool, list[dict[Addr, Cell]], list[dict[str, Value]]]:
    if not models:
        raise CheckError("empty model sequence")
    residuals, insts = [], []
    ok = True
    for m in models:
        out = check(m, f, env)
        ok = ok and out.satisfied
        residuals.append(out.residual)
        insts.append(out.instantiation)
    return ok, residuals, insts
