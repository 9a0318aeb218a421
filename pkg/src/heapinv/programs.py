"""Seeded input generators and small heap-manipulating programs that dump traces.

Programs run on an explicit machine model: cells are allocated at
sequential addresses, and every breakpoint snapshots the stack together
with every live cell.  Dereferencing nil or a freed cell stops the run.
"""

from __future__ import annotations

from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import Callable, Sequence

import numpy as np

from .core import NIL, Addr, Cell, Env, Int, SLError, StackHeapModel, Value
from .dsl import parse_env
from .traces import TraceFile

BUILTIN_FILE = "builtin.sl"
STRUCTURES = ("sll", "dll", "sorted_sll", "bst")
PAYLOAD_RANGE = (0, 100)


def builtin_source_path() -> Path:
    return Path(str(resources.files("heapinv") / "data" / BUILTIN_FILE))


def builtin_source() -> str:
    return builtin_source_path().read_text()


_ENV: Env | None = None


def builtin_env() -> Env:
    global _ENV
    if _ENV is None:
        _ENV = parse_env(builtin_source())
    return _ENV


class ProgramError(SLError):
    pass


class NullDereference(ProgramError):
    pass


@dataclass(frozen=True)
class GenSpec:
    structure: str
    size: int
    seed: int = 0

    def __post_init__(self):
        if self.structure not in STRUCTURES:
            raise ProgramError(f"unknown structure {self.structure!r}")
        if self.size < 0:
            raise ProgramError("size must be non-negative")


# -- machine ---------------------------------------------------------------------


class Machine:
    def __init__(self, env: Env):
        self.env = env
        self.heap: dict[Addr, Cell] = {}
        self.next_addr = 1
        self.records: list[StackHeapModel] = []

    def alloc(self, type_name: str, **fields: Value) -> Addr:
        td = self.env.types[type_name]
        a = Addr(self.next_addr)
        self.next_addr += 1
        vals = []
        for fname, ftype in td.fields:
            default = Int(0) if ftype == "int" else NIL
            vals.append(fields.get(fname, default))
        self.heap[a] = Cell(type_name, tuple(vals))
        return a

    def _cell(self, a: Value, what: str) -> Cell:
        if a is NIL:
            raise NullDereference(f"{what} through nil")
        if a not in self.heap:
            raise NullDereference(f"{what} through dangling {a}")
        return self.heap[a]

    def load(self, a: Value, fname: str) -> Value:
        c = self._cell(a, f"read of {fname}")
        return c.fields[self.env.types[c.type].field_index(fname)]

    def store(self, a: Value, fname: str, v: Value) -> None:
        c = self._cell(a, f"write of {fname}")
        i = self.env.types[c.type].field_index(fname)
        self.heap[a] = Cell(c.type, c.fields[:i] + (v,) + c.fields[i + 1:])

    def free(self, a: Value) -> None:
        self._cell(a, "free")
        del self.heap[a]

    def snap(self, test_id: str, loc: str, **stack: Value) -> None:
        self.records.append(StackHeapModel(test_id, loc, dict(stack), dict(self.heap)))


# -- generators ------------------------------------------------------------------


def _payloads(spec: GenSpec) -> list[int]:
    rng = np.random.default_rng(spec.seed)
    return [int(v) for v in rng.integers(*PAYLOAD_RANGE, size=spec.size)]


def build(m: Machine, spec: GenSpec) -> Value:
    """Allocate the structure described by ``spec`` and return its root."""
    if spec.structure == "dll":
        cells = [m.alloc("Node") for _ in range(spec.size)]
        for i, a in enumerate(cells):
            m.store(a, "next", cells[i + 1] if i + 1 < len(cells) else NIL)
            m.store(a, "prev", cells[i - 1] if i > 0 else NIL)
        return cells[0] if cells else NIL
    if spec.structure in ("sll", "sorted_sll"):
        keys = _payloads(spec)
        if spec.structure == "sorted_sll":
            keys.sort()
        cells = [m.alloc("SNode", data=Int(k)) for k in keys]
        for i, a in enumerate(cells):
            m.store(a, "next", cells[i + 1] if i + 1 < len(cells) else NIL)
        return cells[0] if cells else NIL
    # bst: distinct keys inserted in generation order
    lo, hi = PAYLOAD_RANGE
    if spec.size > hi - lo:
        raise ProgramError("bst size exceeds the payload range")
    picks = np.random.default_rng(spec.seed).choice(hi - lo, spec.size, replace=False)
    keys = [lo + int(k) for k in picks]
    root: Value = NIL
    for k in keys:
        node = m.alloc("TNode", key=Int(k))
        if root is NIL:
            root = node
            continue
        cur = root
        while True:
            side = "left" if k < m.load(cur, "key").k else "right"
            nxt = m.load(cur, side)
            if nxt is NIL:
                m.store(cur, side, node)
                break
            cur = nxt
    return root


def generate(spec: GenSpec, env: Env | None = None) -> StackHeapModel:
    """A one-record model with ``root`` naming the generated structure."""
    m = Machine(env or builtin_env())
    root = build(m, spec)
    return StackHeapModel(f"{spec.structure}-{spec.size}-{spec.seed}", "gen", {"root": root}, dict(m.heap))


def _key_for(spec: GenSpec) -> Int:
    return Int(int(np.random.default_rng([spec.seed, 2]).integers(*PAYLOAD_RANGE)))


# -- programs ----------------------------------------------------------------------


class _Ids:
    def __init__(self, start: int = 1):
        self.n = start - 1

    def __call__(self) -> str:
        self.n += 1
        return f"t{self.n}"


def _dll_concat(m: Machine, ids: _Ids, x: Value, y: Value, guarded: bool = True) -> Value:
    tid = ids()
    m.snap(tid, "L1", x=x, y=y)
    if guarded and x is NIL:
        m.snap(tid, "L2", x=x, y=y, res=y)
        return y
    tmp = _dll_concat(m, ids, m.load(x, "next"), y, guarded)
    m.store(x, "next", tmp)
    if tmp is not NIL:
        m.store(tmp, "prev", x)
    m.snap(tid, "L3", x=x, y=y, tmp=tmp, res=x)
    return x


def _sll_reverse(m: Machine, ids: _Ids, x: Value) -> Value:
    tid = ids()
    m.snap(tid, "L1", x=x)
    r: Value = NIL
    while True:
        m.snap(tid, "LOOP", x=x, r=r)
        if x is NIL:
            break
        t = m.load(x, "next")
        m.store(x, "next", r)
        r = x
        x = t
    m.snap(tid, "L2", x=x, r=r, res=r)
    return r


def _sorted_insert(m: Machine, ids: _Ids, x: Value, k: Int) -> Value:
    tid = ids()
    m.snap(tid, "L1", x=x, k=k)
    if x is NIL or k.k <= m.load(x, "data").k:
        n = m.alloc("SNode", next=x, data=k)
        m.snap(tid, "L2", x=x, k=k, n=n, res=n)
        return n
    t = _sorted_insert(m, ids, m.load(x, "next"), k)
    m.store(x, "next", t)
    m.snap(tid, "L3", x=x, k=k, t=t, res=x)
    return x


def _bst_insert(m: Machine, ids: _Ids, t: Value, k: Int) -> Value:
    tid = ids()
    m.snap(tid, "L1", t=t, k=k)
    if t is NIL:
        n = m.alloc("TNode", key=k)
        m.snap(tid, "L2", t=t, k=k, n=n, res=n)
        return n
    side = "left" if k.k < m.load(t, "key").k else "right"
    c = _bst_insert(m, ids, m.load(t, side), k)
    m.store(t, side, c)
    m.snap(tid, "L3", t=t, k=k, c=c, res=t)
    return t


@dataclass(frozen=True)
class Program:
    name: str
    inputs: tuple[str, ...]
    params: tuple[str, ...]
    entry: str
    exits: tuple[str, ...]
    loops: tuple[str, ...]
    run: Callable
    int_key: bool = False


PROGRAMS: dict[str, Program] = {
    p.name: p
    for p in (
        Program("dll_concat", ("dll", "dll"), ("x", "y"), "L1", ("L2", "L3"), (), _dll_concat),
        Program(
            "dll_concat_bug",
            ("dll", "dll"),
            ("x", "y"),
            "L1",
            ("L2", "L3"),
            (),
            lambda m, ids, x, y: _dll_concat(m, ids, x, y, guarded=False),
        ),
        Program("sll_reverse", ("sll",), ("x",), "L1", ("L2",), ("LOOP",), _sll_reverse),
        Program(
            "sorted_insert", ("sorted_sll",), ("x", "k"), "L1", ("L2", "L3"), (), _sorted_insert, True
        ),
        Program("bst_insert", ("bst",), ("t", "k"), "L1", ("L2", "L3"), (), _bst_insert, True),
    )
}


def get_program(name: str) -> Program:
    try:
        return PROGRAMS[name]
    except KeyError:
        raise ProgramError(
            f"unknown program {name!r}; known: {', '.join(sorted(PROGRAMS))}"
        ) from None


def _execute(prog: Program, inputs: Sequence[GenSpec], ids: _Ids) -> tuple[list[StackHeapModel], str | None]:
    if len(inputs) != len(prog.inputs):
        raise ProgramError(f"{prog.name} takes {len(prog.inputs)} input(s), got {len(inputs)}")
    for spec, want in zip(inputs, prog.inputs):
        if spec.structure != want:
            raise ProgramError(f"{prog.name} expects a {want} input, got {spec.structure}")
    m = Machine(builtin_env())
    args = [build(m, s) for s in inputs]
    if prog.int_key:
        args.append(_key_for(inputs[0]))
    crash = None
    try:
        prog.run(m, ids, *args)
    except NullDereference as e:
        crash = str(e)
    return m.records, crash


def run_builtin(program: str, inputs: Sequence[GenSpec]) -> TraceFile:
    """Run one input tuple."""
    return run_many(program, [inputs])


def run_many(program: str, runs: Sequence[Sequence[GenSpec]]) -> TraceFile:
    """Run each input tuple once; test ids keep counting across runs."""
    prog = get_program(program)
    ids = _Ids()
    records: list[StackHeapModel] = []
    crashes: list[str] = []
    for inputs in runs:
        recs, crash = _execute(prog, inputs, ids)
        records += recs
        if crash:
            crashes.append(crash)
    return TraceFile(
        types=BUILTIN_FILE,
        params=list(prog.params),
        exits=list(prog.exits),
        records=records,
        entry=prog.entry,
        loops=list(prog.loops),
        base_dir=builtin_source_path().parent,
        crashes=crashes,
    )


def specs_for(program: str, sizes: Sequence[int], seed: int = 0) -> list[GenSpec]:
    prog = get_program(program)
    if len(sizes) != len(prog.inputs):
        raise ProgramError(f"{program} takes {len(prog.inputs)} size(s), got {len(sizes)}")
    return [GenSpec(s, n, seed + i) for i, (s, n) in enumerate(zip(prog.inputs, sizes))]


def default_corpus(program: str) -> list[list[GenSpec]]:
    """Small input sets used by the sweep tests and demos."""
    prog = get_program(program)
    if len(prog.inputs) == 2:
        pairs = [(3, 2), (1, 0), (2, 3), (0, 1)]
        return [specs_for(program, p, seed=i) for i, p in enumerate(pairs)]
    return [specs_for(program, [n], seed=10 + n) for n in (0, 1, 3, 5)]
