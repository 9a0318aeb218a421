"""Line-oriented JSON trace files.

    {"header": {"types": "builtin.sl", "params": ["x", "y"], "exits": ["L2", "L3"]}}
    {"test_id": "t1", "loc": "L3", "stack": {"x": "0x01"}, "heap": {"0x01": {"type": "Node", "fields": ["nil", "nil"]}}}

The ``types`` entry is either inline declarations or a path, resolved
relative to the trace file.  Optional header keys: ``entry`` (the
precondition location) and ``loops`` (loop-head locations).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

from .core import INT, Addr, Cell, Env, Int, SLError, StackHeapModel, format_value, parse_value, value_key
from .dsl import DSLError, parse_env


class TraceError(SLError):
    def __init__(self, msg: str, line: int | None = None):
        self.line = line
        super().__init__(f"line {line}: {msg}" if line is not None else msg)


@dataclass
class TraceFile:
    types: str
    params: list[str]
    exits: list[str]
    records: list[StackHeapModel] = field(default_factory=list)
    entry: str | None = None
    loops: list[str] = field(default_factory=list)
    base_dir: Path | None = None
    # runtime failures seen while producing the records; not serialized
    crashes: list[str] = field(default_factory=list)

    def env(self) -> Env:
        """Declarations named by the header (inline text or a file)."""
        return load_declarations(self.types, self.base_dir)

    def locations(self) -> list[str]:
        seen: dict[str, None] = {}
        for r in self.records:
            seen.setdefault(r.loc)
        return list(seen)

    def at(self, loc: str) -> list[StackHeapModel]:
        return [r for r in self.records if r.loc == loc]

    def header(self) -> dict:
        h: dict = {"types": self.types, "params": list(self.params), "exits": list(self.exits)}
        if self.entry is not None:
            h["entry"] = self.entry
        if self.loops:
            h["loops"] = list(self.loops)
        return h


def _looks_inline(types: str) -> bool:
    return "{" in types or "\n" in types or types.lstrip().startswith(("type ", "pred "))


def load_declarations(types: str, base_dir: Path | None = None) -> Env:
    if _looks_inline(types):
        return parse_env(types)
    p = Path(types)
    if not p.is_absolute() and base_dir is not None:
        p = base_dir / p
    if not p.exists():
        from .programs import builtin_source_path

        if p.name == builtin_source_path().name:
            p = builtin_source_path()
        else:
            raise TraceError(f"declarations file not found: {types}")
    return parse_env(p.read_text())


def _value(raw, where: str, line: int):
    try:
        return parse_value(raw)
    except ValueError as e:
        raise TraceError(f"{where}: {e}", line) from None


def model_to_json(m: StackHeapModel) -> dict:
    return {
        "test_id": m.test_id,
        "loc": m.loc,
        "stack": {v: format_value(x) for v, x in m.stack.items()},
        "heap": {
            str(a): {"type": c.type, "fields": [format_value(x) for x in c.fields]}
            for a, c in sorted(m.heap.items(), key=lambda kv: value_key(kv[0]))
        },
    }


def model_from_json(d, line: int = 0, env: Env | None = None) -> StackHeapModel:
    if not isinstance(d, dict):
        raise TraceError("record is not an object", line)
    for k in ("test_id", "loc", "stack", "heap"):
        if k not in d:
            raise TraceError(f"record lacks '{k}'", line)
    if not isinstance(d["stack"], dict) or not isinstance(d["heap"], dict):
        raise TraceError("stack and heap must be objects", line)
    stack = {v: _value(x, f"variable {v}", line) for v, x in d["stack"].items()}
    heap = {}
    for a_raw, c in d["heap"].items():
        a = _value(a_raw, "cell address", line)
        if not isinstance(a, Addr):
            raise TraceError(f"cell address {a_raw!r} is not an address", line)
        if not isinstance(c, dict) or "type" not in c or not isinstance(c.get("fields"), list):
            raise TraceError(f"cell {a_raw}: needs 'type' and 'fields'", line)
        fields = tuple(_value(x, f"cell {a_raw}", line) for x in c["fields"])
        heap[a] = Cell(c["type"], fields)
    m = StackHeapModel(str(d["test_id"]), str(d["loc"]), stack, heap)
    if env is not None:
        check_model(m, env, line)
    return m


def check_model(m: StackHeapModel, env: Env, line: int = 0) -> None:
    for a, c in m.heap.items():
        td = env.types.get(c.type)
        if td is None:
            raise TraceError(f"cell {a}: unknown type {c.type}", line)
        if len(c.fields) != len(td.fields):
            raise TraceError(
                f"cell {a}: type {c.type} has {len(td.fields)} fields, got {len(c.fields)}", line
            )
        for (fname, ftype), v in zip(td.fields, c.fields):
            if (ftype == INT) != isinstance(v, Int):
                raise TraceError(f"cell {a}: field {fname} expects {ftype}, got {v}", line)


def parse_traces(text: str, base_dir: Path | None = None, validate: bool = True) -> TraceFile:
    lines = [(i, ln) for i, ln in enumerate(text.splitlines(), 1) if ln.strip()]
    if not lines:
        raise TraceError("empty trace file: missing header")
    i0, first = lines[0]
    try:
        head = json.loads(first)
    except json.JSONDecodeError as e:
        raise TraceError(f"bad JSON: {e.msg}", i0) from None
    if not isinstance(head, dict) or "header" not in head:
        raise TraceError("first line must be the header object", i0)
    h = head["header"]
    try:
        tf = TraceFile(
            types=h["types"],
            params=list(h.get("params", [])),
            exits=list(h.get("exits", [])),
            entry=h.get("entry"),
            loops=list(h.get("loops", [])),
            base_dir=base_dir,
        )
    except (KeyError, TypeError):
        raise TraceError("header needs 'types', 'params' and 'exits'", i0) from None
    env = None
    if validate:
        try:
            env = tf.env()
        except DSLError as e:
            raise TraceError(f"declarations: {e}", i0) from None
    declared = set(tf.exits) | set(tf.loops) | ({tf.entry} if tf.entry else set())
    for i, ln in lines[1:]:
        try:
            d = json.loads(ln)
        except json.JSONDecodeError as e:
            raise TraceError(f"bad JSON: {e.msg}", i) from None
        m = model_from_json(d, i, env)
        if validate and declared and m.loc not in declared:
            raise TraceError(f"undeclared location {m.loc}", i)
        tf.records.append(m)
    return tf


def read_traces(path: str | Path, validate: bool = True) -> TraceFile:
    p = Path(path)
    try:
        text = p.read_text(encoding="utf-8")
    except OSError as e:
        raise TraceError(f"cannot read {p}: {e.strerror}") from None
    return parse_traces(text, p.parent, validate)


def dumps_traces(tf: TraceFile) -> str:
    out = [json.dumps({"header": tf.header()})]
    out += [json.dumps(model_to_json(m)) for m in tf.records]
    return "\n".join(out) + "\n"


def write_traces(tf: TraceFile, path: str | Path) -> None:
    Path(path).write_text(dumps_traces(tf), encoding="utf-8")


def merge(files: Sequence[TraceFile]) -> TraceFile:
    """Concatenate records of several files; headers must agree."""
    if not files:
        raise TraceError("no trace files")
    first = files[0]
    for f in files[1:]:
        if (f.types, f.params) != (first.types, first.params):
            raise TraceError("trace files disagree on declarations or parameters")
    exits: dict[str, None] = {}
    loops: dict[str, None] = {}
    for f in files:
        exits.update(dict.fromkeys(f.exits))
        loops.update(dict.fromkeys(f.loops))
    entry = next((f.entry for f in files if f.entry), None)
    records = [r for f in files for r in f.records]
    return TraceFile(first.types, first.params, list(exits), records, entry, list(loops), first.base_dir)


def unique_test_ids(records: Iterable[StackHeapModel], loc: str) -> None:
    seen = set()
    for r in records:
        if r.loc == loc:
            if r.test_id in seen:
                raise TraceError(f"test {r.test_id} has two records at {loc}")
            seen.add(r.test_id)
