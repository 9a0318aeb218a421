"""Canonical naming, comparison and JSON encoding of formulae."""

from __future__ import annotations

import itertools
from typing import Any, Iterable, Mapping

from .core import (
    NILT,
    Add,
    And,
    Eq,
    Formula,
    IntLit,
    Lt,
    Neg,
    NilT,
    Not,
    PointsTo,
    PredInstance,
    Pure,
    Scale,
    SLError,
    Sub,
    Var,
    subst_formula,
)
from .dsl import format_formula, format_pure

INTERNAL_PREFIX = "_u"


def is_internal(name: str) -> bool:
    return name.startswith(INTERNAL_PREFIX)


def internal_index(name: str) -> int:
    try:
        return int(name[len(INTERNAL_PREFIX):])
    except ValueError:
        return 1 << 30


def _term_key(t) -> tuple[int, str]:
    # nil goes right, otherwise lexicographic
    if isinstance(t, NilT):
        return (2, "")
    if isinstance(t, Var):
        return (0, t.name)
    if isinstance(t, IntLit):
        return (1, f"{t.k:+020d}")
    return (0, str(t))


def orient(p: Pure) -> Pure:
    if isinstance(p, Eq) and _term_key(p.r) < _term_key(p.l):
        return Eq(p.r, p.l)
    if isinstance(p, Not) and isinstance(p.p, Eq):
        return Not(orient(p.p))
    return p


def rename_existentials(
    f: Formula, avoid: Iterable[str] = (), rename_all: bool = False
) -> tuple[Formula, dict[str, str]]:
    """Rename internal existentials to ``u1, u2, ...`` by first occurrence.

    Existentials that came from program variables keep their names and are
    listed after the generated ones, unless ``rename_all`` is set, in which
    case every bound name becomes ``?k``.
    """
    if rename_all:
        order = [v for v in f.all_vars() if v in f.exists]
        order += [u for u in f.exists if u not in order]
        mapping = {u: f"?{k}" for k, u in enumerate(order, 1)}
        g = subst_formula(f, {u: Var(n) for u, n in mapping.items()})
        return Formula(tuple(mapping.values()), g.spatial, g.pure), mapping
    taken = set(avoid) | set(f.free_vars()) | {u for u in f.exists if not is_internal(u)}
    mapping: dict[str, str] = {}
    k = 0
    order = [v for v in f.all_vars() if v in f.exists]
    order += [u for u in f.exists if u not in order]
    for u in order:
        if not is_internal(u):
            continue
        k += 1
        while f"u{k}" in taken:
            k += 1
        mapping[u] = f"u{k}"
    sub = {old: Var(new) for old, new in mapping.items()}
    renamed = subst_formula(f, sub)
    gen = [mapping[u] for u in order if u in mapping]
    kept = [u for u in order if u not in mapping]
    return Formula(tuple(gen + kept), renamed.spatial, renamed.pure), mapping


def canonical(f: Formula) -> tuple[Formula, dict[str, str]]:
    g, mapping = rename_existentials(f)
    pure = sorted({orient(p) for p in g.pure}, key=format_pure)
    return Formula(g.exists, g.spatial, tuple(pure)), mapping


def canonical_text(f: Formula, env=None) -> str:
    return format_formula(canonical(f)[0], env)


# -- comparison ---------------------------------------------------------------


def _eliminate_bound_existentials(f: Formula) -> Formula:
    """Substitute away existentials pinned by an equality to a variable or nil."""
    changed = True
    while changed:
        changed = False
        ex = set(f.exists)
        for p in f.pure:
            if not isinstance(p, Eq):
                continue
            for u, t in ((p.l, p.r), (p.r, p.l)):
                if isinstance(u, Var) and u.name in ex and isinstance(t, (Var, NilT)) and t != u:
                    rest = tuple(q for q in f.pure if q is not p)
                    f = subst_formula(Formula(f.exists, f.spatial, rest), {u.name: t})
                    changed = True
                    break
            if changed:
                break
    pure = tuple(
        q for q in f.pure if not (isinstance(q, Eq) and q.l == q.r)
    )
    return Formula(f.exists, f.spatial, pure)


def _pure_set(ps) -> frozenset:
    return frozenset(format_pure(orient(p)) for p in ps)


def _alias_rank(name: str) -> tuple[int, str]:
    return (int(name == "res"), name)


def _merge_aliases(f: Formula) -> Formula:
    """Use one name per class of equated free variables inside spatial atoms."""
    ex = set(f.exists)
    parent: dict[str, str] = {}

    def find(v: str) -> str:
        while parent.get(v, v) != v:
            v = parent[v]
        return v

    for p in f.pure:
        if isinstance(p, Eq) and isinstance(p.l, Var) and isinstance(p.r, Var):
            a, b = find(p.l.name), find(p.r.name)
            if a != b and a not in ex and b not in ex:
                lo, hi = sorted((a, b), key=_alias_rank)
                parent[hi] = lo
    sub = {v: Var(find(v)) for v in parent}
    if not sub:
        return f
    g = subst_formula(Formula((), f.spatial, ()), sub)
    return Formula(f.exists, g.spatial, f.pure)


def normal_form(f: Formula) -> Formula:
    """Representative of the formula's class under the comparator below."""
    g = _merge_aliases(_eliminate_bound_existentials(f))
    g, _ = rename_existentials(Formula(g.exists, g.spatial, g.pure), rename_all=True)
    pure = sorted({orient(p) for p in g.pure}, key=format_pure)
    return Formula(g.exists, g.spatial, tuple(pure))


def normal_key(f: Formula) -> str:
    return format_formula(normal_form(f))


def isomorphic(f: Formula, g: Formula, max_perm_atoms: int = 6) -> bool:
    """Equal up to existential renaming, atom order and equality orientation.

    Existentials equated to a variable or nil are substituted first, so
    ``exists u . dll(y, u, v, nil) & u = nil`` matches ``dll(y, nil, v, nil)``;
    likewise ``dll(res, ...) & res = x`` matches ``dll(x, ...) & res = x``.
    """
    f = _merge_aliases(_eliminate_bound_existentials(f))
    target = normal_form(g)
    if len(f.spatial) != len(target.spatial) or len(f.exists) != len(target.exists):
        return False
    if set(f.free_vars()) != set(target.free_vars()):
        return False
    perms: Iterable = (
        itertools.permutations(f.spatial)
        if len(f.spatial) <= max_perm_atoms
        else [f.spatial]
    )
    for sp in perms:
        if normal_form(Formula(f.exists, tuple(sp), f.pure)) == target:
            return True
    return False


# -- JSON ---------------------------------------------------------------------


def expr_to_json(e) -> Any:
    if isinstance(e, Var):
        return {"var": e.name}
    if isinstance(e, NilT):
        return "nil"
    if isinstance(e, IntLit):
        return {"int": e.k}
    if isinstance(e, Neg):
        return {"op": "neg", "e": expr_to_json(e.e)}
    if isinstance(e, Scale):
        return {"op": "scale", "k": e.k, "e": expr_to_json(e.e)}
    if isinstance(e, Add):
        return {"op": "add", "l": expr_to_json(e.l), "r": expr_to_json(e.r)}
    if isinstance(e, Sub):
        return {"op": "sub", "l": expr_to_json(e.l), "r": expr_to_json(e.r)}
    raise SLError(f"cannot encode {e!r}")


def expr_from_json(d) -> Any:
    if d == "nil":
        return NILT
    if not isinstance(d, dict):
        raise SLError(f"bad term {d!r}")
    if "var" in d:
        return Var(d["var"])
    if "int" in d:
        return IntLit(int(d["int"]))
    op = d.get("op")
    if op == "neg":
        return Neg(expr_from_json(d["e"]))
    if op == "scale":
        return Scale(int(d["k"]), expr_from_json(d["e"]))
    if op == "add":
        return Add(expr_from_json(d["l"]), expr_from_json(d["r"]))
    if op == "sub":
        return Sub(expr_from_json(d["l"]), expr_from_json(d["r"]))
    raise SLError(f"bad term {d!r}")


def pure_to_json(p: Pure) -> Any:
    if isinstance(p, Eq):
        return {"op": "eq", "l": expr_to_json(p.l), "r": expr_to_json(p.r)}
    if isinstance(p, Lt):
        return {"op": "lt", "l": expr_to_json(p.l), "r": expr_to_json(p.r)}
    if isinstance(p, Not):
        return {"op": "not", "p": pure_to_json(p.p)}
    return {"op": "and", "ps": [pure_to_json(q) for q in p.ps]}


def pure_from_json(d: Mapping) -> Pure:
    op = d.get("op")
    if op == "eq":
        return Eq(expr_from_json(d["l"]), expr_from_json(d["r"]))
    if op == "lt":
        return Lt(expr_from_json(d["l"]), expr_from_json(d["r"]))
    if op == "not":
        return Not(pure_from_json(d["p"]))
    if op == "and":
        return And(tuple(pure_from_json(q) for q in d["ps"]))
    raise SLError(f"bad pure formula {d!r}")


def formula_to_json(f: Formula) -> dict:
    spatial = []
    for a in f.spatial:
        if isinstance(a, PointsTo):
            spatial.append(
                {
                    "kind": "pointsto",
                    "root": expr_to_json(a.root),
                    "type": a.type,
                    "args": [expr_to_json(t) for t in a.args],
                }
            )
        elif isinstance(a, PredInstance):
            spatial.append(
                {"kind": "pred", "name": a.name, "args": [expr_to_json(t) for t in a.args]}
            )
    return {
        "exists": list(f.exists),
        "spatial": spatial,
        "pure": [pure_to_json(p) for p in f.pure],
    }


def formula_from_json(d: Mapping) -> Formula:
    spatial = []
    for a in d.get("spatial", []):
        if a.get("kind") == "pointsto":
            spatial.append(
                PointsTo(expr_from_json(a["root"]), a["type"], tuple(expr_from_json(t) for t in a["args"]))
            )
        elif a.get("kind") == "pred":
            spatial.append(PredInstance(a["name"], tuple(expr_from_json(t) for t in a["args"])))
        else:
            raise SLError(f"bad spatial atom {a!r}")
    return Formula(
        tuple(d.get("exists", [])),
        tuple(spatial),
        tuple(pure_from_json(p) for p in d.get("pure", [])),
    )
