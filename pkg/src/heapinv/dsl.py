"""Concrete syntax for type declarations, predicate definitions and formulae.

    type Node { next: Node*, prev: Node* }
    pred dll(hd: Node*, pr: Node*, tl: Node*, nx: Node*) :=
        emp & hd = nx & pr = tl
      | exists u . hd -> Node { next: u, prev: pr } * dll(u, hd, tl, nx) ;

Formulae use the clause syntax: ``exists u1, u2 . dll(x, u1, u2, nil) & res = x``.
Points-to atoms accept named fields (``{next: u}``) or positional ones
(``Node(u, pr)``).  Comments run from ``//`` to end of line.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Iterable, Mapping

from .core import (
    INT,
    NILT,
    Add,
    And,
    Clause,
    Emp,
    EMP,
    Env,
    Eq,
    Formula,
    IntLit,
    Lt,
    Neg,
    Not,
    PointsTo,
    PredicateDef,
    PredInstance,
    Pure,
    Scale,
    SLError,
    SpatialAtom,
    Sub,
    Term,
    TypeDecl,
    Var,
    atom_terms,
    pure_vars,
)


class DSLError(SLError):
    def __init__(self, msg: str, line: int | None = None, col: int | None = None):
        where = f"{line}:{col}: " if line is not None else ""
        super().__init__(where + msg)
        self.line = line
        self.col = col


KEYWORDS = {"type", "pred", "exists", "emp", "nil", "int"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r]+)
  | (?P<nl>\n)
  | (?P<comment>//[^\n]*)
  | (?P<num>\d+)
  | (?P<id>[A-Za-z_][A-Za-z0-9_']*)
  | (?P<op>:=|->|!=|<=|>=|[{}(),:*|;&=<>.+\-!])
  """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Tok:
    kind: str  # "id", "num", "op", "kw", "eof"
    text: str
    line: int
    col: int


def tokenize(src: str) -> list[Tok]:
    toks: list[Tok] = []
    line, line_start, pos = 1, 0, 0
    while pos < len(src):
        m = _TOKEN_RE.match(src, pos)
        if not m:
            raise DSLError(f"unexpected character {src[pos]!r}", line, pos - line_start + 1)
        kind = m.lastgroup
        text = m.group()
        col = pos - line_start + 1
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind in ("ws", "comment"):
            pass
        elif kind == "id" and text in KEYWORDS:
            toks.append(Tok("kw", text, line, col))
        else:
            toks.append(Tok(kind, text, line, col))
        pos = m.end()
    toks.append(Tok("eof", "", line, pos - line_start + 1))
    return toks


class _Parser:
    def __init__(self, src: str):
        self.toks = tokenize(src)
        self.i = 0

    # -- token helpers
    @property
    def tok(self) -> Tok:
        return self.toks[self.i]

    def peek(self, k: int = 1) -> Tok:
        return self.toks[min(self.i + k, len(self.toks) - 1)]

    def at(self, text: str) -> bool:
        return self.tok.kind in ("op", "kw") and self.tok.text == text

    def error(self, msg: str, tok: Tok | None = None) -> DSLError:
        tok = tok or self.tok
        found = tok.text or "end of input"
        return DSLError(f"{msg} (found {found!r})", tok.line, tok.col)

    def expect(self, text: str) -> Tok:
        if not self.at(text):
            raise self.error(f"expected {text!r}")
        t = self.tok
        self.i += 1
        return t

    def accept(self, text: str) -> bool:
        if self.at(text):
            self.i += 1
            return True
        return False

    def ident(self) -> str:
        if self.tok.kind != "id":
            raise self.error("expected identifier")
        t = self.tok.text
        self.i += 1
        return t

    # -- declarations
    def program(self) -> tuple[list[TypeDecl], list[tuple[PredicateDef, Tok]]]:
        types, preds = [], []
        while self.tok.kind != "eof":
            if self.at("type"):
                types.append(self.type_decl())
            elif self.at("pred"):
                start = self.tok
                preds.append((self.pred_decl(), start))
            else:
                raise self.error("expected 'type' or 'pred'")
        return types, preds

    def type_ref(self) -> str:
        if self.accept("int"):
            return INT
        name = self.ident()
        self.expect("*")
        return name

    def type_decl(self) -> TypeDecl:
        self.expect("type")
        start = self.tok
        name = self.ident()
        self.expect("{")
        fields = []
        if not self.at("}"):
            while True:
                f = self.ident()
                self.expect(":")
                fields.append((f, self.type_ref()))
                if not self.accept(","):
                    break
        self.expect("}")
        self.accept(";")
        try:
            return TypeDecl(name, tuple(fields))
        except SLError as e:
            raise DSLError(str(e), start.line, start.col) from None

    def pred_decl(self) -> PredicateDef:
        self.expect("pred")
        name = self.ident()
        self.expect("(")
        params = []
        if not self.at(")"):
            while True:
                p = self.ident()
                self.expect(":")
                params.append((p, self.type_ref()))
                if not self.accept(","):
                    break
        self.expect(")")
        self.expect(":=")
        clauses = [self.clause()]
        while self.accept("|"):
            clauses.append(self.clause())
        self.expect(";")
        return PredicateDef(name, tuple(params), tuple(clauses))

    def clause(self) -> Clause:
        f = self.formula()
        return Clause(f.exists, f.spatial, f.pure)

    # -- formulae
    def formula(self) -> Formula:
        exists: list[str] = []
        if self.accept("exists"):
            while True:
                exists.append(self.ident())
                if not self.accept(","):
                    break
            self.expect(".")
        spatial: list[SpatialAtom] = []
        pure: list[Pure] = []
        if self._spatial_ahead():
            spatial.append(self.spatial_atom())
            while self.accept("*"):
                spatial.append(self.spatial_atom())
            while self.accept("&"):
                pure.extend(self.pure_atom())
        else:
            pure.extend(self.pure_atom())
            while self.accept("&"):
                pure.extend(self.pure_atom())
        spatial = [a for a in spatial if not isinstance(a, Emp)]
        return Formula(tuple(exists), tuple(spatial), tuple(pure))

    def _spatial_ahead(self) -> bool:
        if self.at("emp"):
            return True
        if self.tok.kind == "id" or self.at("nil"):
            nxt = self.peek()
            return nxt.kind == "op" and nxt.text in ("->", "(")
        return False

    def spatial_atom(self) -> SpatialAtom:
        if self.accept("emp"):
            return EMP
        if self.peek().text == "(" and self.tok.kind == "id":
            name = self.ident()
            self.expect("(")
            args = self.term_list(")")
            return PredInstance(name, tuple(args))
        start = self.tok
        root = self.term()
        self.expect("->")
        tname = self.ident()
        if self.accept("("):
            args = self.term_list(")")
            return PointsTo(root, tname, tuple(args))
        self.expect("{")
        named: list[tuple[str, Term, Tok]] = []
        if not self.at("}"):
            while True:
                ftok = self.tok
                fname = self.ident()
                self.expect(":")
                named.append((fname, self.term(), ftok))
                if not self.accept(","):
                    break
        self.expect("}")
        return _NamedPointsTo(root, tname, tuple(named), start)

    def term_list(self, close: str) -> list[Term]:
        out = []
        if not self.at(close):
            while True:
                out.append(self.term())
                if not self.accept(","):
                    break
        self.expect(close)
        return out

    def term(self) -> Term:
        if self.accept("nil"):
            return NILT
        if self.tok.kind == "num":
            k = int(self.tok.text)
            self.i += 1
            return IntLit(k)
        if self.at("-") and self.peek().kind == "num":
            self.i += 1
            k = int(self.tok.text)
            self.i += 1
            return IntLit(-k)
        return Var(self.ident())

    def pure_atom(self) -> list[Pure]:
        if self.accept("!"):
            if self.accept("("):
                ps = self.pure_atom()
                while self.accept("&"):
                    ps.extend(self.pure_atom())
                self.expect(")")
                return [Not(ps[0] if len(ps) == 1 else And(tuple(ps)))]
            return [Not(p) for p in self.pure_atom()]
        lhs = self.expr()
        op = self.tok
        if op.kind != "op" or op.text not in ("=", "!=", "<", "<=", ">", ">="):
            raise self.error("expected comparison")
        self.i += 1
        rhs = self.expr()
        return [_compare(op.text, lhs, rhs)]

    def expr(self):
        e = self.product()
        while self.at("+") or self.at("-"):
            op = self.tok.text
            self.i += 1
            r = self.product()
            e = Add(e, r) if op == "+" else Sub(e, r)
        return e

    def product(self):
        if self.tok.kind == "num" and self.peek().text == "*":
            k = int(self.tok.text)
            self.i += 2
            return Scale(k, self.factor())
        if self.at("-") and self.peek().kind == "num" and self.peek(2).text == "*":
            k = -int(self.peek().text)
            self.i += 3
            return Scale(k, self.factor())
        return self.factor()

    def factor(self):
        if self.at("-") and self.peek().kind == "num":
            self.i += 1
            k = int(self.tok.text)
            self.i += 1
            return IntLit(-k)
        if self.accept("-"):
            return Neg(self.factor())
        if self.accept("("):
            e = self.expr()
            self.expect(")")
            return e
        if self.accept("nil"):
            return NILT
        if self.tok.kind == "num":
            k = int(self.tok.text)
            self.i += 1
            return IntLit(k)
        return Var(self.ident())


@dataclass(frozen=True)
class _NamedPointsTo:
    """Points-to with named fields; resolved to positional once types are known."""

    root: Term
    type: str
    named: tuple
    tok: Tok


def _compare(op: str, l, r) -> Pure:
    if op == "=":
        return Eq(l, r)
    if op == "!=":
        return Not(Eq(l, r))
    if op == "<":
        return Lt(l, r)
    if op == ">":
        return Lt(r, l)
    if op == "<=":
        return Not(Lt(r, l))
    return Not(Lt(l, r))  # >=


# -- resolution and static checks -------------------------------------------


def _resolve_atom(a, types: Mapping[str, TypeDecl], preds: Mapping[str, int], where: Tok | None):
    line, col = (where.line, where.col) if where else (None, None)
    if isinstance(a, _NamedPointsTo):
        td = types.get(a.type)
        if td is None:
            raise DSLError(f"unknown type {a.type}", a.tok.line, a.tok.col)
        vals: dict[str, Term] = {}
        for fname, t, ftok in a.named:
            if fname not in td.field_names:
                raise DSLError(f"type {td.name} has no field {fname}", ftok.line, ftok.col)
            if fname in vals:
                raise DSLError(f"field {fname} given twice", ftok.line, ftok.col)
            vals[fname] = t
        missing = [f for f in td.field_names if f not in vals]
        if missing:
            raise DSLError(
                f"arity mismatch: {td.name} points-to is missing field(s) {', '.join(missing)}",
                a.tok.line,
                a.tok.col,
            )
        return PointsTo(a.root, a.type, tuple(vals[f] for f in td.field_names))
    if isinstance(a, PointsTo):
        td = types.get(a.type)
        if td is None:
            raise DSLError(f"unknown type {a.type}", line, col)
        if len(a.args) != len(td.fields):
            raise DSLError(
                f"arity mismatch: {td.name} has {len(td.fields)} fields, got {len(a.args)}",
                line,
                col,
            )
        return a
    if isinstance(a, PredInstance):
        if a.name not in preds:
            raise DSLError(f"unknown predicate {a.name}", line, col)
        if preds[a.name] != len(a.args):
            raise DSLError(
                f"arity mismatch: {a.name} takes {preds[a.name]} arguments, got {len(a.args)}",
                line,
                col,
            )
    return a


def _recursive_reach(preds: Iterable[PredicateDef]) -> dict[str, set[str]]:
    calls = {
        p.name: {a.name for c in p.clauses for a in c.spatial if isinstance(a, PredInstance)}
        for p in preds
    }
    reach: dict[str, set[str]] = {}
    for start in calls:
        seen: set[str] = set()
        stack = list(calls[start])
        while stack:
            q = stack.pop()
            if q in seen:
                continue
            seen.add(q)
            stack.extend(calls.get(q, ()))
        reach[start] = seen
    return reach


def recursive_clauses(preds: Iterable[PredicateDef]) -> dict[str, tuple[bool, ...]]:
    """For each predicate, which clauses call back into the predicate's own cycle."""
    preds = list(preds)
    reach = _recursive_reach(preds)
    out = {}
    for p in preds:
        flags = []
        for c in p.clauses:
            called = {a.name for a in c.spatial if isinstance(a, PredInstance)}
            flags.append(any(q == p.name or p.name in reach.get(q, ()) for q in called))
        out[p.name] = tuple(flags)
    return out


def _check_program(
    types: list[TypeDecl], raw_preds: list[tuple[PredicateDef, Tok]], base: Env | None
) -> list[PredicateDef]:
    tmap = dict(base.types) if base else {}
    seen_types: set[str] = set()
    for t in types:
        if t.name in seen_types:
            raise DSLError(f"duplicate type {t.name}")
        seen_types.add(t.name)
        tmap[t.name] = t
    for t in types:
        for f, ft in t.fields:
            if ft != INT and ft not in tmap:
                raise DSLError(f"type {t.name}.{f}: unknown type {ft}")
    arities = {p.name: p.arity for p in base.preds.values()} if base else {}
    seen_preds: set[str] = set()
    for p, tok in raw_preds:
        if p.name in seen_preds:
            raise DSLError(f"duplicate predicate {p.name}", tok.line, tok.col)
        seen_preds.add(p.name)
        arities[p.name] = p.arity
    preds = []
    for p, tok in raw_preds:
        pnames = [n for n, _ in p.params]
        if len(set(pnames)) != len(pnames):
            raise DSLError(f"{p.name}: duplicate parameter", tok.line, tok.col)
        for _, pt in p.params:
            if pt != INT and pt not in tmap:
                raise DSLError(f"{p.name}: unknown type {pt}", tok.line, tok.col)
        clauses = []
        for c in p.clauses:
            if set(c.exists) & set(pnames) or len(set(c.exists)) != len(c.exists):
                raise DSLError(f"{p.name}: existential shadows a parameter", tok.line, tok.col)
            spatial = tuple(_resolve_atom(a, tmap, arities, tok) for a in c.spatial)
            clause = Clause(c.exists, spatial, c.pure)
            bound = set(pnames) | set(c.exists)
            free = {t.name for a in spatial for t in atom_terms(a) if isinstance(t, Var)}
            free |= {v for q in c.pure for v in pure_vars(q)}
            extra = sorted(free - bound)
            if extra:
                raise DSLError(
                    f"{p.name}: unbound variable(s) {', '.join(extra)}", tok.line, tok.col
                )
            clauses.append(clause)
        preds.append(PredicateDef(p.name, p.params, tuple(clauses)))
    every = list(base.preds.values()) if base else []
    every = [q for q in every if q.name not in {p.name for p in preds}] + preds
    rec = recursive_clauses(every)
    for p, (_, tok) in zip(preds, raw_preds):
        for i, (c, is_rec) in enumerate(zip(p.clauses, rec[p.name])):
            if is_rec and not any(isinstance(a, PointsTo) for a in c.spatial):
                raise DSLError(
                    f"{p.name}: clause {i + 1} is recursive but allocates no cell "
                    "(non-well-founded clause)",
                    tok.line,
                    tok.col,
                )
    return preds


def parse_predicates(source: str, base: Env | None = None) -> tuple[list[TypeDecl], list[PredicateDef]]:
    """Parse ``type``/``pred`` declarations, in source order.

    ``base`` supplies declarations the source may refer to without
    redeclaring them.
    """
    p = _Parser(source)
    types, raw = p.program()
    preds = _check_program(types, raw, base)
    return types, preds


def parse_env(source: str, base: Env | None = None) -> Env:
    types, preds = parse_predicates(source, base)
    env = Env.of(types, preds)
    return base.merged(env) if base else env


def parse_formula(text: str, env: Env | None = None) -> Formula:
    p = _Parser(text)
    f = p.formula()
    if p.tok.kind != "eof":
        raise p.error("unexpected trailing input")
    if env is None:
        if any(isinstance(a, _NamedPointsTo) for a in f.spatial):
            raise DSLError("named points-to fields need type declarations")
        return f
    arities = {q.name: q.arity for q in env.preds.values()}
    spatial = tuple(_resolve_atom(a, env.types, arities, None) for a in f.spatial)
    return Formula(f.exists, spatial, f.pure)


# -- printing ----------------------------------------------------------------


def format_term(t) -> str:
    return str(t)


def _prec(e) -> int:
    if isinstance(e, (Add, Sub)):
        return 1
    if isinstance(e, Scale):
        return 2
    if isinstance(e, Neg):
        return 3
    return 4


def format_expr(e) -> str:
    if isinstance(e, Add):
        r = format_expr(e.r)
        return f"{format_expr(e.l)} + {'(' + r + ')' if _prec(e.r) <= 1 else r}"
    if isinstance(e, Sub):
        r = format_expr(e.r)
        return f"{format_expr(e.l)} - {'(' + r + ')' if _prec(e.r) <= 1 else r}"
    if isinstance(e, Scale):
        inner = format_expr(e.e)
        return f"{e.k} * {'(' + inner + ')' if _prec(e.e) <= 3 else inner}"
    if isinstance(e, Neg):
        inner = format_expr(e.e)
        if _prec(e.e) <= 3 or isinstance(e.e, IntLit):
            inner = "(" + inner + ")"
        return f"-{inner}"
    return str(e)


def format_pure(p: Pure) -> str:
    if isinstance(p, Eq):
        return f"{format_expr(p.l)} = {format_expr(p.r)}"
    if isinstance(p, Lt):
        return f"{format_expr(p.l)} < {format_expr(p.r)}"
    if isinstance(p, Not):
        q = p.p
        if isinstance(q, Eq):
            return f"{format_expr(q.l)} != {format_expr(q.r)}"
        if isinstance(q, Lt):
            return f"{format_expr(q.r)} <= {format_expr(q.l)}"
        return f"!({format_pure(q)})"
    return " & ".join(format_pure(q) for q in p.ps)


def format_atom(a: SpatialAtom, env: Env | None = None) -> str:
    if isinstance(a, Emp):
        return "emp"
    if isinstance(a, PredInstance):
        return f"{a.name}({', '.join(map(format_term, a.args))})"
    td = env.types.get(a.type) if env else None
    if td is None:
        return f"{a.root} -> {a.type}({', '.join(map(format_term, a.args))})"
    inner = ", ".join(f"{f}: {t}" for f, t in zip(td.field_names, a.args))
    return f"{a.root} -> {a.type} {{ {inner} }}"


def format_body(exists, spatial, pure, env: Env | None = None) -> str:
    head = f"exists {', '.join(exists)} . " if exists else ""
    parts = [format_atom(a, env) for a in spatial] or ["emp"]
    text = head + " * ".join(parts)
    for p in pure:
        text += " & " + format_pure(p)
    return text


def format_formula(f: Formula, env: Env | None = None) -> str:
    return format_body(f.exists, f.spatial, f.pure, env)


def format_type(t: TypeDecl) -> str:
    fields = ", ".join(f"{f}: {'int' if ft == INT else ft + '*'}" for f, ft in t.fields)
    return f"type {t.name} {{ {fields} }}"


def format_pred(p: PredicateDef, env: Env | None = None) -> str:
    params = ", ".join(f"{n}: {'int' if t == INT else t + '*'}" for n, t in p.params)
    clauses = [format_body(c.exists, c.spatial, c.pure, env) for c in p.clauses]
    return f"pred {p.name}({params}) :=\n    " + "\n  | ".join(clauses) + " ;"


def format_program(types: Iterable[TypeDecl], preds: Iterable[PredicateDef]) -> str:
    types, preds = list(types), list(preds)
    env = Env.of(types, preds)
    out = [format_type(t) for t in types] + [format_pred(p, env) for p in preds]
    return "\n".join(out) + "\n"
