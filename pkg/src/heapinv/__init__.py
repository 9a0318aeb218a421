"""Separation-logic invariant inference from concrete stack-heap snapshots."""

from __future__ import annotations

from .atoms import AtomResult, infer_atom
from .canon import canonical, formula_from_json, formula_to_json, isomorphic
from .checker import CheckOutcome, check, check_sequence
from .core import NIL, Addr, Cell, Env, Formula, Int, SLError, StackHeapModel
from .dsl import format_formula, parse_env, parse_formula, parse_predicates
from .engine import InferenceResult, Specification, best_specification, infer, infer_pure, validate, variable_order
from .partition import PartitionResult, split_heap
from .programs import GenSpec, builtin_env, generate, run_builtin, run_many
from .traces import TraceFile, read_traces, write_traces

__version__ = "0.1.0"

__all__ = [
    "Addr",
    "AtomResult",
    "Cell",
    "CheckOutcome",
    "Env",
    "Formula",
    "GenSpec",
    "InferenceResult",
    "Int",
    "NIL",
    "PartitionResult",
    "SLError",
    "Specification",
    "StackHeapModel",
    "TraceFile",
    "best_specification",
    "builtin_env",
    "canonical",
    "check",
    "check_sequence",
    "format_formula",
    "formula_from_json",
    "formula_to_json",
    "generate",
    "infer",
    "infer_atom",
    "infer_pure",
    "isomorphic",
    "parse_env",
    "parse_formula",
    "parse_predicates",
    "read_traces",
    "run_builtin",
    "run_many",
    "split_heap",
    "validate",
    "variable_order",
    "write_traces",
]
