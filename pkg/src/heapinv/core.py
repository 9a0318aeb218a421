"""Values, stack-heap models, and the symbolic-heap formula language.

Everything here is immutable after construction.  Formulas are plain
frozen dataclasses so they hash and compare structurally.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Iterable, Iterator, Mapping, Union


class SLError(Exception):
    """Base class for errors raised by this package."""


class EvalError(SLError):
    pass


# -- values ------------------------------------------------------------------


@dataclass(frozen=True, order=True)
class Addr:
    a: int

    def __str__(self) -> str:
        return f"0x{self.a:02x}"

    def __repr__(self) -> str:
        return f"Addr({self})"


class _Nil:
    _inst = None

    def __new__(cls):
        if cls._inst is None:
            cls._inst = super().__new__(cls)
        return cls._inst

    def __repr__(self) -> str:
        return "Nil"

    def __str__(self) -> str:
        return "nil"

    def __reduce__(self):
        return (_Nil, ())


NIL = _Nil()


@dataclass(frozen=True)
class Int:
    k: int

    def __str__(self) -> str:
        return str(self.k)


Value = Union[Addr, _Nil, Int]


def value_key(v: Value) -> tuple[int, int]:
    """Total order on values: Nil < Int (by value) < Addr (by token)."""
    if v is NIL:
        return (0, 0)
    if isinstance(v, Int):
        return (1, v.k)
    return (2, v.a)


def parse_value(raw: str | int) -> Value:
    if isinstance(raw, bool):
        raise ValueError(f"not a heap value: {raw!r}")
    if isinstance(raw, int):
        return Int(raw)
    if raw == "nil":
        return NIL
    if raw.startswith("0x"):
        a = int(raw[2:], 16)
        if a == 0:
            raise ValueError("0x0 is nil; write 'nil'")
        return Addr(a)
    raise ValueError(f"not a heap value: {raw!r}")


def format_value(v: Value) -> str | int:
    if isinstance(v, Int):
        return v.k
    return str(v)


# -- types and models --------------------------------------------------------

INT = "int"


@dataclass(frozen=True)
class TypeDecl:
    """A record type.  Field types are a record name (pointer to it) or ``"int"``."""

    name: str
    fields: tuple[tuple[str, str], ...]

    def __post_init__(self):
        names = [f for f, _ in self.fields]
        if len(set(names)) != len(names):
            raise SLError(f"duplicate field in type {self.name}")

    @property
    def field_names(self) -> tuple[str, ...]:
        return tuple(f for f, _ in self.fields)

    def field_index(self, name: str) -> int:
        return self.field_names.index(name)


@dataclass(frozen=True)
class Cell:
    type: str
    fields: tuple[Value, ...]


@dataclass(frozen=True)
class StackHeapModel:
    test_id: str
    loc: str
    stack: Mapping[str, Value]
    heap: Mapping[Addr, Cell]

    def __post_init__(self):
        if NIL in self.heap:
            raise SLError("nil cannot be allocated")

    def with_heap(self, heap: Mapping[Addr, Cell]) -> "StackHeapModel":
        return replace(self, heap=dict(heap))

    def pointer_vars(self) -> list[str]:
        return [v for v, val in self.stack.items() if not isinstance(val, Int)]

    def values(self) -> set[Value]:
        """Every value observable in the model: stack values, addresses, fields."""
        out: set[Value] = {NIL}
        out.update(self.stack.values())
        for a, c in self.heap.items():
            out.add(a)
            out.update(c.fields)
        return out

    def check_types(self, types: Mapping[str, TypeDecl]) -> None:
        for a, c in self.heap.items():
            td = types.get(c.type)
            if td is None:
                raise SLError(f"cell {a}: unknown type {c.type}")
            if len(c.fields) != len(td.fields):
                raise SLError(
                    f"cell {a}: type {c.type} has {len(td.fields)} fields, "
                    f"got {len(c.fields)}"
                )


def heap_minus(heap: Mapping[Addr, Cell], gone: Iterable[Addr]) -> dict[Addr, Cell]:
    gone = set(gone)
    return {a: c for a, c in heap.items() if a not in gone}


# -- terms and pure formulae -------------------------------------------------


@dataclass(frozen=True)
class Var:
    name: str

    def __str__(self) -> str:
        return self.name


@dataclass(frozen=True)
class NilT:
    def __str__(self) -> str:
        return "nil"


@dataclass(frozen=True)
class IntLit:
    k: int

    def __str__(self) -> str:
        return str(self.k)


NILT = NilT()

Term = Union[Var, NilT, IntLit]


@dataclass(frozen=True)
class Neg:
    e: "Expr"


@dataclass(frozen=True)
class Add:
    l: "Expr"
    r: "Expr"


@dataclass(frozen=True)
class Sub:
    l: "Expr"
    r: "Expr"


@dataclass(frozen=True)
class Scale:
    k: int
    e: "Expr"


Expr = Union[Var, NilT, IntLit, Neg, Add, Sub, Scale]


@dataclass(frozen=True)
class Eq:
    l: Expr
    r: Expr


@dataclass(frozen=True)
class Lt:
    l: Expr
    r: Expr


@dataclass(frozen=True)
class Not:
    p: "Pure"


@dataclass(frozen=True)
class And:
    ps: tuple["Pure", ...]


Pure = Union[Eq, Lt, Not, And]


def expr_vars(e) -> Iterator[str]:
    if isinstance(e, Var):
        yield e.name
    elif isinstance(e, (Neg, Scale)):
        yield from expr_vars(e.e)
    elif isinstance(e, (Add, Sub)):
        yield from expr_vars(e.l)
        yield from expr_vars(e.r)


def pure_vars(p: Pure) -> Iterator[str]:
    if isinstance(p, (Eq, Lt)):
        yield from expr_vars(p.l)
        yield from expr_vars(p.r)
    elif isinstance(p, Not):
        yield from pure_vars(p.p)
    else:
        for q in p.ps:
            yield from pure_vars(q)


def _eval_expr(e, val: Mapping[str, Value]) -> Value:
    if isinstance(e, Var):
        try:
            return val[e.name]
        except KeyError:
            raise EvalError(f"unbound variable {e.name}") from None
    if isinstance(e, NilT):
        return NIL
    if isinstance(e, IntLit):
        return Int(e.k)
    if isinstance(e, Neg):
        return Int(-_as_int(_eval_expr(e.e, val)))
    if isinstance(e, Add):
        return Int(_as_int(_eval_expr(e.l, val)) + _as_int(_eval_expr(e.r, val)))
    if isinstance(e, Sub):
        return Int(_as_int(_eval_expr(e.l, val)) - _as_int(_eval_expr(e.r, val)))
    if isinstance(e, Scale):
        return Int(e.k * _as_int(_eval_expr(e.e, val)))
    raise TypeError(e)


def _as_int(v: Value) -> int:
    if not isinstance(v, Int):
        raise EvalError(f"integer operation applied to {v}")
    return v.k


def eval_pure(pi: Pure, valuation: Mapping[str, Value]) -> bool:
    """Evaluate a pure formula under a total valuation of its free variables."""
    if isinstance(pi, Eq):
        return _eval_expr(pi.l, valuation) == _eval_expr(pi.r, valuation)
    if isinstance(pi, Lt):
        return _as_int(_eval_expr(pi.l, valuation)) < _as_int(_eval_expr(pi.r, valuation))
    if isinstance(pi, Not):
        return not eval_pure(pi.p, valuation)
    if isinstance(pi, And):
        return all(eval_pure(q, valuation) for q in pi.ps)
    raise TypeError(pi)


# -- spatial formulae --------------------------------------------------------


@dataclass(frozen=True)
class Emp:
    pass


@dataclass(frozen=True)
class PointsTo:
    root: Term
    type: str
    args: tuple[Term, ...]


@dataclass(frozen=True)
class PredInstance:
    name: str
    args: tuple[Term, ...]


EMP = Emp()

SpatialAtom = Union[Emp, PointsTo, PredInstance]


def atom_terms(a: SpatialAtom) -> tuple[Term, ...]:
    if isinstance(a, PointsTo):
        return (a.root, *a.args)
    if isinstance(a, PredInstance):
        return a.args
    return ()


@dataclass(frozen=True)
class Formula:
    """``exists exists . spatial_1 * ... * spatial_n & pure_1 & ...``"""

    exists: tuple[str, ...] = ()
    spatial: tuple[SpatialAtom, ...] = ()
    pure: tuple[Pure, ...] = ()

    def all_vars(self) -> list[str]:
        """Variables in first-occurrence order (spatial then pure)."""
        seen: dict[str, None] = {}
        for a in self.spatial:
            for t in atom_terms(a):
                if isinstance(t, Var):
                    seen.setdefault(t.name)
        for p in self.pure:
            for v in pure_vars(p):
                seen.setdefault(v)
        return list(seen)

    def free_vars(self) -> list[str]:
        ex = set(self.exists)
        return [v for v in self.all_vars() if v not in ex]

    def star(self, other: "Formula") -> "Formula":
        spatial = tuple(a for a in self.spatial + other.spatial if not isinstance(a, Emp))
        return Formula(self.exists + other.exists, spatial, self.pure + other.pure)

    def is_emp(self) -> bool:
        return all(isinstance(a, Emp) for a in self.spatial)


@dataclass(frozen=True)
class Clause:
    exists: tuple[str, ...]
    spatial: tuple[SpatialAtom, ...]
    pure: tuple[Pure, ...] = ()


@dataclass(frozen=True)
class PredicateDef:
    name: str
    params: tuple[tuple[str, str], ...]
    clauses: tuple[Clause, ...]

    @property
    def arity(self) -> int:
        return len(self.params)

    @property
    def param_types(self) -> tuple[str, ...]:
        return tuple(t for _, t in self.params)


@dataclass
class Env:
    """Type and predicate declarations available to the checker."""

    types: dict[str, TypeDecl] = field(default_factory=dict)
    preds: dict[str, PredicateDef] = field(default_factory=dict)

    @classmethod
    def of(cls, types: Iterable[TypeDecl] = (), preds: Iterable[PredicateDef] = ()) -> "Env":
        return cls({t.name: t for t in types}, {p.name: p for p in preds})

    def merged(self, other: "Env") -> "Env":
        return Env({**self.types, **other.types}, {**self.preds, **other.preds})


# -- substitution ------------------------------------------------------------


def subst_term(t: Term, sub: Mapping[str, Term]) -> Term:
    if isinstance(t, Var):
        return sub.get(t.name, t)
    return t


def subst_expr(e, sub: Mapping[str, Term]):
    if isinstance(e, Var):
        return sub.get(e.name, e)
    if isinstance(e, Neg):
        return Neg(subst_expr(e.e, sub))
    if isinstance(e, Scale):
        return Scale(e.k, subst_expr(e.e, sub))
    if isinstance(e, Add):
        return Add(subst_expr(e.l, sub), subst_expr(e.r, sub))
    if isinstance(e, Sub):
        return Sub(subst_expr(e.l, sub), subst_expr(e.r, sub))
    return e


def subst_pure(p: Pure, sub: Mapping[str, Term]) -> Pure:
    if isinstance(p, Eq):
        return Eq(subst_expr(p.l, sub), subst_expr(p.r, sub))
    if isinstance(p, Lt):
        return Lt(subst_expr(p.l, sub), subst_expr(p.r, sub))
    if isinstance(p, Not):
        return Not(subst_pure(p.p, sub))
    return And(tuple(subst_pure(q, sub) for q in p.ps))


def subst_atom(a: SpatialAtom, sub: Mapping[str, Term]) -> SpatialAtom:
    if isinstance(a, PointsTo):
        return PointsTo(subst_term(a.root, sub), a.type, tuple(subst_term(t, sub) for t in a.args))
    if isinstance(a, PredInstance):
        return PredInstance(a.name, tuple(subst_term(t, sub) for t in a.args))
    return a


def subst_formula(f: Formula, sub: Mapping[str, Term]) -> Formula:
    """Substitute terms for variables; substituted existentials are dropped."""
    return Formula(
        tuple(u for u in f.exists if u not in sub),
        tuple(subst_atom(a, sub) for a in f.spatial),
        tuple(subst_pure(p, sub) for p in f.pure),
    )
