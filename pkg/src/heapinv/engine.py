"""Invariant inference over a set of stack-heap models at one location."""

from __future__ import annotations

import itertools
from collections import deque
from dataclasses import dataclass
from typing import Mapping, Sequence

from .atoms import FreshNames, infer_atom, variable_types
from .canon import canonical, internal_index, is_internal, normal_key
from .core import (
    NIL,
    NILT,
    Addr,
    Cell,
    Env,
    Eq,
    Formula,
    Int,
    SLError,
    StackHeapModel,
    Value,
    Var,
    atom_terms,
    pure_vars,
    subst_formula,
)
from .dsl import format_formula
from .partition import split_heap

RES = "res"
DEFAULT_WIDTH = 64


class InferError(SLError):
    pass


class ValidateError(SLError):
    pass


@dataclass(frozen=True)
class InferenceResult:
    """A formula with the residual heap and instantiation it leaves on each model."""

    formula: Formula
    residuals: tuple[Mapping[Addr, Cell], ...]
    instantiations: tuple[Mapping[str, Value], ...]
    test_ids: tuple[str, ...] = ()
    loc: str = ""

    @property
    def residual_cells(self) -> int:
        return sum(len(r) for r in self.residuals)

    def residual_for(self, test_id: str) -> Mapping[Addr, Cell]:
        return self.residuals[self.test_ids.index(test_id)]

    def text(self, env: Env | None = None) -> str:
        return format_formula(self.formula, env)


@dataclass(frozen=True)
class Specification:
    pre: Formula
    posts: tuple[tuple[str, Formula], ...]
    valid: bool
    failed_tests: tuple[str, ...] = ()

    def text(self, env: Env | None = None) -> str:
        post = " \u2228 ".join(f"[{loc}] {format_formula(q, env)}" for loc, q in self.posts)
        tag = "valid" if self.valid else "invalid"
        return f"{{{format_formula(self.pre, env)}}} -> {{{post}}} ({tag})"


# -- variable order ------------------------------------------------------------


def pointer_variables(models: Sequence[StackHeapModel]) -> list[str]:
    names: set[str] = set()
    ints: set[str] = set()
    for m in models:
        for v, val in m.stack.items():
            names.add(v)
            if isinstance(val, Int):
                ints.add(v)
    return sorted(names - ints)


def _reachable_in_order(m: StackHeapModel, start: Value) -> list[Addr]:
    out: list[Addr] = []
    seen = set()
    q = deque([start])
    while q:
        a = q.popleft()
        if a in seen or not isinstance(a, Addr) or a not in m.heap:
            continue
        seen.add(a)
        out.append(a)
        for f in m.heap[a].fields:
            if isinstance(f, Addr) and f not in seen:
                q.append(f)
    return out


def variable_order(
    models: Sequence[StackHeapModel], params: Sequence[str] = ()
) -> list[str]:
    """Parameters first (``res`` last), each followed by what its heap reaches.

    Reachability is over the full heap of each model; a variable is reached
    when its value is an address in the region, and variables are taken in
    the order their cells are discovered.  Unreached variables follow in
    name order, and ``res`` always comes last.
    """
    if not models:
        raise InferError("no models")
    ptrs = pointer_variables(models)
    ptr_set = set(ptrs)
    roots = [p for p in params if p in ptr_set and p != RES]
    order: list[str] = []
    placed: set[str] = set()

    def discovered(v: str) -> list[str]:
        found: list[str] = []
        for m in models:
            if v not in m.stack:
                continue
            by_addr: dict[Value, list[str]] = {}
            for w in sorted(m.stack):
                if w in ptr_set and w != RES:
                    by_addr.setdefault(m.stack[w], []).append(w)
            for a in _reachable_in_order(m, m.stack[v]):
                for w in by_addr.get(a, ()):
                    if w not in found:
                        found.append(w)
        return found

    for r in roots + [v for v in ptrs if v != RES]:
        if r in placed:
            continue
        q = deque([r])
        placed.add(r)
        while q:
            v = q.popleft()
            order.append(v)
            for w in discovered(v):
                if w not in placed:
                    placed.add(w)
                    q.append(w)
    if RES in ptr_set:
        order.append(RES)
    return order


# -- pure inference --------------------------------------------------------------


def _rep_key(name: str, scope: set[str] | None, exists: Sequence[str] = ()):
    if name == "nil":
        return (0, 0, "")
    if name in exists:
        idx = internal_index(name) if is_internal(name) else exists.index(name)
        return (3, idx, name)
    in_scope = scope is None or name in scope
    # the ghost return variable is named after what it aliases
    return (1 if in_scope else 2, int(name == RES), name)


def infer_pure(
    f: Formula,
    models: Sequence[StackHeapModel],
    insts: Sequence[Mapping[str, Value]],
    scope: set[str] | None = None,
) -> tuple[Formula, list[dict[str, Value]]]:
    """Add every equality that holds in all models, in union-find normal form.

    Existentials joined to a program variable are replaced by it; an
    existential whose class is represented by nil keeps an explicit
    ``u = nil``, and existentials in a class of existentials collapse to the
    oldest one.  Previous equalities are recomputed from scratch.
    """
    stack_vars = [v for v in pointer_variables(models)]
    terms = ["nil"] + stack_vars + list(f.exists)

    def vec(t: str):
        if t == "nil":
            return tuple(NIL for _ in models)
        if t in f.exists:
            return tuple(i.get(t) for i in insts)
        return tuple(m.stack.get(t) for m in models)

    classes: dict[tuple, list[str]] = {}
    for t in terms:
        v = vec(t)
        if any(x is None or isinstance(x, Int) for x in v):
            continue
        classes.setdefault(v, []).append(t)

    sub: dict[str, object] = {}
    eqs: list[Eq] = []
    for members in classes.values():
        if len(members) < 2:
            continue
        members = sorted(members, key=lambda n: _rep_key(n, scope, f.exists))
        rep = members[0]
        rep_term = NILT if rep == "nil" else Var(rep)
        for m in members[1:]:
            if m in f.exists and rep != "nil":
                sub[m] = rep_term
            else:
                eqs.append(Eq(Var(m), rep_term))
    kept = tuple(p for p in f.pure if not isinstance(p, Eq))
    g = subst_formula(Formula(f.exists, f.spatial, kept), sub)
    g = Formula(g.exists, g.spatial, g.pure + tuple(eqs))
    new_insts = [{u: v for u, v in i.items() if u not in sub} for i in insts]
    return g, new_insts


# -- main loop -------------------------------------------------------------------


@dataclass
class _Tuple:
    formula: Formula
    rest: list[StackHeapModel]
    insts: list[dict[str, Value]]
    key: str = ""
    text: str = ""

    def rank(self):
        cells = sum(len(m.heap) for m in self.rest)
        return (cells, len(self.formula.exists), len(self.text), self.text)


def _describe(t: _Tuple) -> _Tuple:
    c, _ = canonical(t.formula)
    t.text = format_formula(c)
    t.key = normal_key(t.formula)
    return t


def _prune(tuples: list[_Tuple], width: int | None) -> list[_Tuple]:
    best: dict[str, _Tuple] = {}
    for t in map(_describe, tuples):
        old = best.get(t.key)
        if old is None or t.rank() < old.rank():
            best[t.key] = t
    ranked = sorted(best.values(), key=_Tuple.rank)
    return ranked if width is None else ranked[:width]


def _heap_key(models: Sequence[StackHeapModel]):
    return tuple(frozenset(m.heap.items()) for m in models)


def _finalize(t: _Tuple, models: Sequence[StackHeapModel], scope: set[str]) -> _Tuple:
    f = t.formula
    out = [v for v in f.free_vars() if v not in scope]
    if not out:
        return t
    pure = list(f.pure)
    sub: dict[str, object] = {}
    for v in out:
        for p in pure:
            if not isinstance(p, Eq):
                continue
            for a, b in ((p.l, p.r), (p.r, p.l)):
                if a == Var(v) and isinstance(b, Var) and b.name in scope:
                    sub[v] = b
                    break
            if v in sub:
                pure.remove(p)
                break
    f = subst_formula(Formula(f.exists, f.spatial, tuple(pure)), sub)
    spatial_vars = {
        x.name for a in f.spatial for x in atom_terms(a) if isinstance(x, Var)
    }
    rebound = [v for v in out if v not in sub and v in spatial_vars]
    dropped = {v for v in out if v not in sub and v not in spatial_vars}
    pure2 = tuple(p for p in f.pure if not (set(pure_vars(p)) & dropped))
    f = Formula(f.exists + tuple(rebound), f.spatial, pure2)
    insts = [
        {**i, **{v: m.stack[v] for v in rebound}} for i, m in zip(t.insts, models)
    ]
    return _Tuple(f, t.rest, insts)


def infer(
    models: Sequence[StackHeapModel],
    env: Env,
    *,
    scope: Sequence[str] | None = None,
    params: Sequence[str] = (),
    order: Sequence[str] | None = None,
    width: int | None = DEFAULT_WIDTH,
    type_filter: bool = True,
) -> list[InferenceResult]:
    """Ranked invariants describing every model.

    Ranking: fewest residual cells over all models, then fewest
    existentials, then shortest printed form.
    """
    models = list(models)
    if not models:
        raise InferError("no models to infer from")
    names = set(models[0].stack)
    for m in models[1:]:
        if set(m.stack) != names:
            raise InferError(
                f"stack variables differ between {models[0].test_id} and {m.test_id}"
            )
    for m in models:
        m.check_types(env.types)
    order = list(order) if order is not None else variable_order(models, params)
    scope_set = set(scope) if scope is not None else None
    vtypes = variable_types(models)
    fresh = FreshNames()

    R = [_Tuple(Formula(), models, [{} for _ in models])]
    for v in order:
        cache: dict = {}
        nxt: list[_Tuple] = []
        for t in R:
            part = split_heap(t.rest, v)
            key = (part.common_boundary, _heap_key(part.sub_models))
            if key not in cache:
                cache[key] = infer_atom(
                    v,
                    part.sub_models,
                    part.common_boundary,
                    env,
                    var_types=vtypes,
                    fresh=fresh,
                    type_filter=type_filter,
                )
            for a in cache[key]:
                rest = [
                    r.with_heap({**r.heap, **res}) for r, res in zip(part.rest_models, a.residuals)
                ]
                insts = [{**i, **j} for i, j in zip(t.insts, a.instantiations)]
                f, insts = infer_pure(t.formula.star(a.formula), models, insts, scope_set)
                nxt.append(_Tuple(f, rest, insts))
        R = _prune(nxt, width)
    if not order:
        f, insts = infer_pure(Formula(), models, [{} for _ in models], scope_set)
        R = [_Tuple(f, models, insts)]
    if scope_set is not None:
        R = [_finalize(t, models, scope_set) for t in R]
    R = _prune(R, None)

    out = []
    for t in R:
        f, mapping = canonical(t.formula)
        insts = tuple(
            {mapping.get(u, u): val for u, val in i.items() if mapping.get(u, u) in f.exists}
            for i in t.insts
        )
        out.append(
            InferenceResult(
                f,
                tuple(dict(m.heap) for m in t.rest),
                insts,
                tuple(m.test_id for m in models),
                models[0].loc,
            )
        )
    return out


# -- specifications ------------------------------------------------------------


def same_residual(a: Mapping[Addr, Cell], b: Mapping[Addr, Cell]) -> bool:
    return dict(a) == dict(b)


def validate(
    pre: Sequence[InferenceResult],
    posts: Mapping[str, Sequence[InferenceResult]],
    *,
    max_specs: int = 256,
) -> list[Specification]:
    """Pair pre and post candidates and keep those whose residuals agree per run.

    Every run that reached the entry must reach exactly one of the given
    exit locations, matched by test id.
    """
    if not pre:
        raise ValidateError("no precondition candidates")
    pre_ids = set(pre[0].test_ids)
    where: dict[str, str] = {}
    for loc, qs in posts.items():
        if not qs:
            raise ValidateError(f"no candidates at {loc}")
        for tid in qs[0].test_ids:
            if tid in where:
                raise ValidateError(f"run {tid} reaches both {where[tid]} and {loc}")
            where[tid] = loc
    missing = sorted(pre_ids - set(where))
    if missing:
        raise ValidateError(f"runs without an exit model: {', '.join(missing)}")
    extra = sorted(set(where) - pre_ids)
    if extra:
        raise ValidateError(f"exit runs without an entry model: {', '.join(extra)}")

    locs = sorted(posts)
    valid: list[Specification] = []
    invalid: list[Specification] = []
    for p in pre:
        ok: dict[str, list[int]] = {}
        bad: dict[str, list[tuple[int, tuple[str, ...]]]] = {}
        for loc in locs:
            ok[loc], bad[loc] = [], []
            for qi, q in enumerate(posts[loc]):
                fails = tuple(
                    tid
                    for tid in q.test_ids
                    if not same_residual(p.residual_for(tid), q.residual_for(tid))
                )
                if fails:
                    bad[loc].append((qi, fails))
                else:
                    ok[loc].append(qi)
        for choice in itertools.islice(itertools.product(*(ok[loc] for loc in locs)), max_specs):
            valid.append(
                Specification(
                    p.formula,
                    tuple((loc, posts[loc][qi].formula) for loc, qi in zip(locs, choice)),
                    True,
                )
            )
        # one witness per failing post candidate is enough to report
        for k, loc in enumerate(locs):
            if len(invalid) >= max_specs:
                break
            others = [posts[l][ok[l][0] if ok[l] else 0].formula for l in locs]
            for qi, fails in bad[loc][: max(0, max_specs - len(invalid))]:
                chosen = list(others)
                chosen[k] = posts[loc][qi].formula
                invalid.append(Specification(p.formula, tuple(zip(locs, chosen)), False, fails))
    return valid + invalid


def best_specification(
    pre: Sequence[InferenceResult], posts: Mapping[str, Sequence[InferenceResult]]
) -> Specification | None:
    """First valid pairing, choosing per location the best-ranked matching post."""
    locs = sorted(posts)
    for p in pre:
        chosen = []
        for loc in locs:
            q = next(
                (
                    q
                    for q in posts[loc]
                    if all(same_residual(p.residual_for(t), q.residual_for(t)) for t in q.test_ids)
                ),
                None,
            )
            if q is None:
                break
            chosen.append((loc, q.formula))
        else:
            return Specification(p.formula, tuple(chosen), True)
    return None
