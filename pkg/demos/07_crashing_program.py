"""A variant that dereferences nil never reaches its returns, so nothing is inferred there."""

from __future__ import annotations

import io
import tempfile
from pathlib import Path

from heapinv import run_builtin, write_traces
from heapinv.cli import main
from heapinv.programs import specs_for

tf = run_builtin("dll_concat_bug", specs_for("dll_concat_bug", [3, 2]))
print("crash:", tf.crashes)
print("snapshots per location:", {loc: len(tf.at(loc)) for loc in ["L1", *tf.exits]})

with tempfile.TemporaryDirectory() as d:
    p = Path(d) / "bug.jsonl"
    write_traces(tf, p)
    code = main(["infer", "--traces", str(p), "--loc", "L3"], out=io.StringIO())
print("infer at L3 exit status:", code)
