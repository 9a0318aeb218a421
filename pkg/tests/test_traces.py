from __future__ import annotations

import json

import pytest

from heapinv.core import NIL, Addr, Cell, Int
from heapinv.traces import (
    TraceError,
    TraceFile,
    dumps_traces,
    merge,
    parse_traces,
    read_traces,
    unique_test_ids,
    write_traces,
)

from conftest import l3_models

HEADER = {"header": {"types": "builtin.sl", "params": ["x", "y"], "exits": ["L2", "L3"]}}


def _text(*records) -> str:
    return "\n".join(json.dumps(r) for r in (HEADER, *records)) + "\n"


def test_round_trip(tmp_path, concat_traces):
    p = tmp_path / "concat.jsonl"
    write_traces(concat_traces, p)
    back = read_traces(p)
    assert back.records == concat_traces.records
    assert (back.params, back.exits, back.entry) == (concat_traces.params, concat_traces.exits, "L1")
    assert dumps_traces(back) == p.read_text()


def test_example_snapshot_round_trip(tmp_path):
    tf = TraceFile("builtin.sl", ["x", "y"], ["L3"], l3_models())
    p = tmp_path / "l3.jsonl"
    write_traces(tf, p)
    assert read_traces(p).records == l3_models()


def test_header_only_file(tmp_path):
    p = tmp_path / "empty.jsonl"
    write_traces(TraceFile("builtin.sl", ["x"], ["L2"]), p)
    tf = read_traces(p)
    assert tf.records == [] and tf.at("L2") == []
    assert len(p.read_text().splitlines()) == 1


def test_inline_declarations():
    decl = "type P { nx: P* }\npred l(a: P*) := emp & a = nil | exists n . a -> P { nx: n } * l(n) ;"
    head = {"header": {"types": decl, "params": ["a"], "exits": ["E"]}}
    rec = {"test_id": "t1", "loc": "E", "stack": {"a": "0x01"}, "heap": {"0x01": {"type": "P", "fields": ["nil"]}}}
    tf = parse_traces(json.dumps(head) + "\n" + json.dumps(rec) + "\n")
    assert set(tf.env().preds) == {"l"}
    assert tf.records[0].heap == {Addr(1): Cell("P", (NIL,))}


def test_arity_error_names_cell():
    rec = {
        "test_id": "t1",
        "loc": "L2",
        "stack": {"x": "0x02"},
        "heap": {"0x02": {"type": "Node", "fields": ["nil", "nil", "nil"]}},
    }
    with pytest.raises(TraceError) as e:
        parse_traces(_text(rec))
    assert "0x02" in str(e.value) and e.value.line == 2


def test_int_field_checked():
    rec = {"test_id": "t1", "loc": "L2", "stack": {}, "heap": {"0x01": {"type": "SNode", "fields": ["nil", "nil"]}}}
    with pytest.raises(TraceError, match="data"):
        parse_traces(_text(rec))


@pytest.mark.parametrize(
    "line, fragment",
    [
        ("{not json", "bad JSON"),
        ('{"test_id": "t1", "loc": "L2", "stack": {}}', "heap"),
        ('{"test_id": "t1", "loc": "L9", "stack": {}, "heap": {}}', "undeclared"),
        ('{"test_id": "t1", "loc": "L2", "stack": {"x": "0xzz"}, "heap": {}}', "variable x"),
        ('{"test_id": "t1", "loc": "L2", "stack": {}, "heap": {"nil": {"type": "Node", "fields": []}}}', "address"),
        ('{"test_id": "t1", "loc": "L2", "stack": {}, "heap": {"0x01": {"type": "Zed", "fields": []}}}', "unknown type"),
    ],
)
def test_malformed_records_report_line(line, fragment):
    good = {"test_id": "t0", "loc": "L2", "stack": {"x": "nil"}, "heap": {}}
    text = _text(good) + line + "\n"
    with pytest.raises(TraceError) as e:
        parse_traces(text)
    assert e.value.line == 3
    assert fragment in str(e.value)


def test_missing_header():
    with pytest.raises(TraceError):
        parse_traces("")
    with pytest.raises(TraceError, match="header"):
        parse_traces('{"test_id": "t1"}\n')


def test_unreadable_path(tmp_path):
    with pytest.raises(TraceError, match="cannot read"):
        read_traces(tmp_path / "missing.jsonl")


def test_int_values_survive():
    rec = {"test_id": "t1", "loc": "L2", "stack": {"k": 5}, "heap": {"0x01": {"type": "SNode", "fields": ["nil", -3]}}}
    m = parse_traces(_text(rec)).records[0]
    assert m.stack["k"] == Int(5) and m.heap[Addr(1)].fields[1] == Int(-3)


def test_merge_and_duplicate_ids(concat_traces):
    both = merge([concat_traces, concat_traces])
    assert len(both.records) == 2 * len(concat_traces.records)
    with pytest.raises(TraceError):
        unique_test_ids(both.records, "L1")
    other = TraceFile("builtin.sl", ["t"], ["L2"])
    with pytest.raises(TraceError):
        merge([concat_traces, other])
