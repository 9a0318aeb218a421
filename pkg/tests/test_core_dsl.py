from __future__ import annotations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from heapinv.core import (
    NIL,
    NILT,
    Add,
    Addr,
    Cell,
    Eq,
    EvalError,
    Formula,
    Int,
    IntLit,
    Lt,
    Not,
    PointsTo,
    PredInstance,
    SLError,
    StackHeapModel,
    Var,
    eval_pure,
    parse_value,
    subst_formula,
    value_key,
)
from heapinv.dsl import (
    DSLError,
    format_formula,
    format_program,
    parse_env,
    parse_formula,
    parse_predicates,
)
from heapinv.programs import builtin_source

DLL = """
type Node { next: Node*, prev: Node* }
pred dll(hd: Node*, pr: Node*, tl: Node*, nx: Node*) :=
    emp & hd = nx & pr = tl
  | exists u . hd -> Node { next: u, prev: pr } * dll(u, hd, tl, nx) ;
"""


def test_dll_definition_shape():
    types, preds = parse_predicates(DLL)
    (dll,) = preds
    assert dll.arity == 4
    assert len(dll.clauses) == 2
    assert dll.clauses[0].exists == ()
    assert dll.clauses[1].exists == ("u",)
    assert types[0].field_names == ("next", "prev")


def test_minimal_predicate():
    _, preds = parse_predicates("type Node { next: Node*, prev: Node* }\npred p(x: Node*) := emp & x = nil;")
    (p,) = preds
    assert len(p.clauses) == 1
    assert p.clauses[0].exists == ()
    assert p.clauses[0].pure == (Eq(Var("x"), NILT),)


def test_non_well_founded_rejected():
    with pytest.raises(DSLError, match="well-founded"):
        parse_predicates("type Node { next: Node*, prev: Node* }\npred bad(x: Node*) := bad(x);")


def test_mutual_recursion_needs_progress():
    src = """
    type Node { next: Node*, prev: Node* }
    pred a(x: Node*) := emp & x = nil | b(x) ;
    pred b(x: Node*) := a(x) ;
    """
    with pytest.raises(DSLError):
        parse_predicates(src)


@pytest.mark.parametrize(
    "src, fragment",
    [
        ("type T { a: T*, a: T* }", "duplicate"),
        ("type T { a: U* }", "unknown type"),
        ("type T { a: T* }\npred p(x: T*) := x -> T { b: x } ;", "field"),
        ("type T { a: T* }\npred p(x: T*) := emp & y = nil ;", "unbound"),
        ("type T { a: T* }\npred p(x: T*) := p(x, x) ;", "argument"),
    ],
)
def test_declaration_errors(src, fragment):
    with pytest.raises(DSLError) as e:
        parse_predicates(src)
    assert fragment in str(e.value)


def test_error_reports_position():
    with pytest.raises(DSLError) as e:
        parse_predicates("type Node { next: Node* }\npred p(x: Node*) := emp & & x = nil ;")
    assert e.value.line == 2


def test_eval_empty_clause_guard():
    g = (Eq(Var("x"), Var("nx")), Eq(Var("pr"), Var("tl")))
    val = {"x": NIL, "nx": NIL, "pr": Addr(5), "tl": Addr(5)}
    assert all(eval_pure(p, val) for p in g)


def test_lt_is_irreflexive():
    assert not eval_pure(Lt(Var("e1"), Var("e2")), {"e1": Int(3), "e2": Int(3)})


def test_alias_equality():
    assert eval_pure(Eq(Var("x"), Var("u2")), {"x": Addr(1), "u2": Addr(1)})


def test_eval_arithmetic_and_errors():
    assert eval_pure(Lt(Add(Var("a"), IntLit(1)), IntLit(5)), {"a": Int(3)})
    with pytest.raises(EvalError):
        eval_pure(Eq(Var("missing"), NILT), {})
    with pytest.raises(EvalError):
        eval_pure(Lt(Var("p"), IntLit(1)), {"p": Addr(1)})


def test_value_order_and_parsing():
    assert parse_value("nil") is NIL
    assert parse_value("0x0a") == Addr(10)
    assert parse_value(7) == Int(7)
    with pytest.raises(ValueError):
        parse_value("0x0")
    vals = [Addr(1), Int(5), NIL, Int(-2)]
    assert sorted(vals, key=value_key) == [NIL, Int(-2), Int(5), Addr(1)]


def test_nil_never_allocated():
    with pytest.raises(SLError):
        StackHeapModel("t", "L", {}, {NIL: Cell("Node", (NIL, NIL))})


def test_formula_parse_named_and_positional(env):
    a = parse_formula("exists u . x -> Node { next: u, prev: nil } * dll(u, x, y, nil)", env)
    b = parse_formula("exists u . x -> Node(u, nil) * dll(u, x, y, nil)", env)
    assert a == b
    assert a.spatial[0] == PointsTo(Var("x"), "Node", (Var("u"), NILT))
    assert isinstance(a.spatial[1], PredInstance)


def test_formula_comparisons(env):
    f = parse_formula("emp & a != b & c <= 3 & d > -2", env)
    assert f.pure[0] == Not(Eq(Var("a"), Var("b")))
    assert f.pure[1] == Not(Lt(IntLit(3), Var("c")))
    assert f.pure[2] == Lt(IntLit(-2), Var("d"))


def test_substitution_drops_bound_names():
    f = Formula(("u", "v"), (PredInstance("dll", (Var("x"), Var("u"), Var("v"), NILT)),), ())
    g = subst_formula(f, {"u": Var("x")})
    assert g.exists == ("v",)
    assert g.spatial[0].args[1] == Var("x")


def test_builtin_program_round_trip():
    types, preds = parse_predicates(builtin_source())
    again = parse_predicates(format_program(types, preds))
    assert again == (types, preds)


_names = st.sampled_from(["x", "y", "tmp", "res"])
_term = st.one_of(_names.map(Var), st.just(NILT))


@st.composite
def formulas(draw):
    env = parse_env(DLL)
    n_ex = draw(st.integers(0, 2))
    exists = tuple(f"u{i}" for i in range(n_ex))
    term = st.one_of(_term, st.sampled_from(exists).map(Var)) if exists else _term
    atoms = []
    for _ in range(draw(st.integers(0, 3))):
        if draw(st.booleans()):
            atoms.append(PredInstance("dll", tuple(draw(term) for _ in range(4))))
        else:
            atoms.append(PointsTo(draw(_names.map(Var)), "Node", (draw(term), draw(term))))
    pure = []
    for _ in range(draw(st.integers(0, 2))):
        e = Eq(draw(term), draw(term))
        pure.append(e if draw(st.booleans()) else Not(e))
    return env, Formula(exists, tuple(atoms), tuple(pure))


@settings(max_examples=200, deadline=None)
@given(formulas())
def test_print_parse_round_trip(case):
    env, f = case
    assert parse_formula(format_formula(f, env), env) == f
    assert parse_formula(format_formula(f), env) == f
