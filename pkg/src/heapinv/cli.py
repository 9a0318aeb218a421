"""Command-line driver.

Exit status: 0 on success, 1 on bad input, 2 when there are no traces at
the requested location or no valid result.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path
from typing import Sequence

from .canon import formula_to_json
from .checker import check
from .core import Env, SLError, format_value, value_key
from .dsl import format_formula, parse_env, parse_formula
from .engine import DEFAULT_WIDTH, InferenceResult, infer, validate
from .partition import split_heap
from .programs import get_program, run_builtin, specs_for
from .traces import TraceFile, dumps_traces, merge, read_traces

OK, INPUT_ERROR, NO_RESULT = 0, 1, 2


class _Usage(Exception):
    pass


def _csv(text: str | None) -> list[str] | None:
    if text is None:
        return None
    return [t.strip() for t in text.split(",") if t.strip()]


def _ints(text: str) -> list[int]:
    try:
        return [int(t) for t in _csv(text) or []]
    except ValueError:
        raise _Usage(f"expected comma-separated integers, got {text!r}") from None


def _load(args) -> tuple[TraceFile, Env]:
    if not args.traces:
        raise _Usage("--traces is required")
    files = [read_traces(p) for p in args.traces]
    tf = merge(files)
    env = parse_env(Path(args.preds).read_text()) if args.preds else tf.env()
    return tf, env


def _addrs(heap) -> str:
    return "{" + ", ".join(str(a) for a in sorted(heap, key=value_key)) + "}"


def _inst_text(inst) -> str:
    return "{" + ", ".join(f"{u}: {v}" for u, v in inst.items()) + "}"


def _result_json(r: InferenceResult) -> dict:
    return {
        "formula": formula_to_json(r.formula),
        "text": format_formula(r.formula),
        "residual_sizes": {t: len(h) for t, h in zip(r.test_ids, r.residuals)},
    }


def _infer_at(tf: TraceFile, env: Env, loc: str, args) -> list[InferenceResult]:
    models = tf.at(loc)
    if not models:
        return []
    return infer(models, env, scope=_csv(args.scope), params=tf.params, width=args.width)


def cmd_infer(args, out) -> int:
    tf, env = _load(args)
    if not args.loc:
        raise _Usage("--loc is required")
    results = _infer_at(tf, env, args.loc, args)
    if not results:
        print(f"no traces at location {args.loc}", file=sys.stderr)
        return NO_RESULT
    shown = results[: args.limit] if args.limit else results
    kind = "loop invariant" if args.loc in tf.loops else "invariant"
    if args.format == "json":
        doc = {"loc": args.loc, "kind": kind, "results": [_result_json(r) for r in shown]}
        print(json.dumps(doc, indent=2), file=out)
    else:
        for r in shown:
            print(format_formula(r.formula, env), file=out)
    return OK


def cmd_check(args, out) -> int:
    tf, env = _load(args)
    if args.formula is None and args.formula_file is None:
        raise _Usage("give --formula or --formula-file")
    text = args.formula if args.formula is not None else Path(args.formula_file).read_text()
    f = parse_formula(text, env)
    models = tf.at(args.loc) if args.loc else tf.records
    if not models:
        print("no traces to check", file=sys.stderr)
        return NO_RESULT
    all_sat = True
    rows = []
    for m in models:
        o = check(m, f, env)
        all_sat = all_sat and o.satisfied
        rows.append((m, o))
    if args.format == "json":
        doc = [
            {
                "test_id": m.test_id,
                "loc": m.loc,
                "sat": o.satisfied,
                "residual": [str(a) for a in sorted(o.residual, key=value_key)],
                "instantiation": {u: format_value(v) for u, v in o.instantiation.items()},
            }
            for m, o in rows
        ]
        print(json.dumps(doc, indent=2), file=out)
    else:
        for m, o in rows:
            if o.satisfied:
                print(
                    f"{m.test_id} {m.loc} SAT residual={_addrs(o.residual)} "
                    f"inst={_inst_text(o.instantiation)}",
                    file=out,
                )
            else:
                print(f"{m.test_id} {m.loc} UNSAT", file=out)
    return OK if all_sat else NO_RESULT


def cmd_validate(args, out) -> int:
    tf, env = _load(args)
    entry = args.loc or tf.entry
    if not entry:
        raise _Usage("no entry location: pass --loc or add 'entry' to the header")
    pre = _infer_at(tf, env, entry, args)
    if not pre:
        print(f"no traces at location {entry}", file=sys.stderr)
        return NO_RESULT
    posts = {}
    for loc in tf.exits:
        rs = _infer_at(tf, env, loc, args)
        if rs:
            posts[loc] = rs
    if not posts:
        print("no traces at any exit location", file=sys.stderr)
        return NO_RESULT
    specs = validate(pre, posts)
    shown = specs[: args.limit] if args.limit else specs
    if args.format == "json":
        doc = [
            {
                "valid": s.valid,
                "pre": formula_to_json(s.pre),
                "posts": {loc: formula_to_json(q) for loc, q in s.posts},
                "failed_tests": list(s.failed_tests),
            }
            for s in shown
        ]
        print(json.dumps(doc, indent=2), file=out)
    else:
        for s in shown:
            print(s.text(env), file=out)
    return OK if any(s.valid for s in specs) else NO_RESULT


def cmd_gen(args, out) -> int:
    if not args.program:
        raise _Usage("--program is required")
    prog = get_program(args.program)
    sizes = _ints(args.sizes) if args.sizes else [3] * len(prog.inputs)
    tf = run_builtin(args.program, specs_for(args.program, sizes, args.seed))
    text = dumps_traces(tf)
    if args.out:
        Path(args.out).write_text(text, encoding="utf-8")
    else:
        out.write(text)
    for c in tf.crashes:
        print(f"program stopped: {c}", file=sys.stderr)
    return OK


def cmd_partition(args, out) -> int:
    tf, _ = _load(args)
    if not args.loc or not args.root:
        raise _Usage("--loc and --root are required")
    models = tf.at(args.loc)
    if not models:
        print(f"no traces at location {args.loc}", file=sys.stderr)
        return NO_RESULT
    part = split_heap(models, args.root)
    for m, sub, b in zip(models, part.sub_models, part.boundaries):
        print(f"{m.test_id} sub={_addrs(sub.heap)} boundary={{{', '.join(sorted(b))}}}", file=out)
    print(f"common boundary={{{', '.join(sorted(part.common_boundary))}}}", file=out)
    return OK


COMMANDS = {
    "infer": cmd_infer,
    "check": cmd_check,
    "validate": cmd_validate,
    "gen": cmd_gen,
    "partition": cmd_partition,
}


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="heapinv", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--preds", help="declarations file (default: the trace header's)")
        p.add_argument("--traces", nargs="+", default=[], help="trace file(s)")
        p.add_argument("--loc", help="location name")
        p.add_argument("--scope", help="comma-separated free variables allowed in results")
        p.add_argument("--width", type=int, default=DEFAULT_WIDTH, help="result-set cap per step")
        p.add_argument("--format", choices=("text", "json"), default="text")
        p.add_argument("--limit", type=int, default=0, help="print at most N results (0: all)")
        if name == "check":
            p.add_argument("--formula", help="formula text")
            p.add_argument("--formula-file", help="file holding the formula")
        if name == "gen":
            p.add_argument("--program", help="built-in program name")
            p.add_argument("--sizes", help="comma-separated input sizes")
            p.add_argument("--seed", type=int, default=0)
            p.add_argument("--out", help="output path (default: stdout)")
        if name == "partition":
            p.add_argument("--root", help="root variable")
    return ap


def main(argv: Sequence[str] | None = None, out=None) -> int:
    out = out or sys.stdout
    try:
        args = build_parser().parse_args(argv)
    except SystemExit as e:
        return INPUT_ERROR if e.code else OK
    try:
        if args.width is not None and args.width < 1:
            raise _Usage("--width must be positive")
        return COMMANDS[args.command](args, out)
    except (_Usage, SLError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return INPUT_ERROR


if __name__ == "__main__":
    raise SystemExit(main())
