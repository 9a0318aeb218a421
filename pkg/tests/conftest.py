from __future__ import annotations

import pytest

from heapinv import NIL, Addr, Cell, StackHeapModel, builtin_env, run_builtin
from heapinv.programs import specs_for

# Target formulas for the concat example, written with their original numbering.
CONCAT_TARGETS = {
    "L1": "exists u1, u2, u3, u4 . dll(x, u1, u2, nil) * dll(y, u3, u4, nil) & u3 = nil",
    "L2": "exists u1, u2 . dll(y, u1, u2, nil) & u1 = nil & x = nil & res = y",
    "L3": "exists u1, u3, u5, tmp . dll(x, u1, x, tmp) * dll(tmp, x, u3, y) "
    "* dll(y, u3, u5, nil) & res = x",
}
SCOPE = ["x", "y", "res"]


def five_node_dll() -> dict:
    h = {}
    for i in range(1, 6):
        nxt = Addr(i + 1) if i < 5 else NIL
        prv = Addr(i - 1) if i > 1 else NIL
        h[Addr(i)] = Cell("Node", (nxt, prv))
    return h


def l3_models() -> list[StackHeapModel]:
    """The three exit snapshots of concat on lists of length 3 and 2."""
    A = Addr
    stacks = [
        ("t1", {"x": A(1), "tmp": A(2), "y": A(4), "res": A(1)}),
        ("t2", {"x": A(2), "tmp": A(3), "y": A(4), "res": A(2)}),
        ("t3", {"x": A(3), "tmp": A(4), "y": A(4), "res": A(3)}),
    ]
    return [StackHeapModel(t, "L3", s, five_node_dll()) for t, s in stacks]


@pytest.fixture(scope="session")
def env():
    return builtin_env()


@pytest.fixture
def exit_models():
    return l3_models()


@pytest.fixture(scope="session")
def concat_traces():
    return run_builtin("dll_concat", specs_for("dll_concat", [3, 2]))


# -- acceptance report -------------------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or (rep.when != "call" and rep.passed):
        return
    n, title = mark.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    if rep.failed:
        detail = detail or str(rep.longrepr).strip().splitlines()[-1]
    _ACCEPTANCE[n] = ("PASS" if rep.passed else "FAIL", title, detail)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        status, title, detail = _ACCEPTANCE[n]
        line = f"[{status}] {n}. {title}"
        terminalreporter.write_line(f"{line}: {detail}" if detail else line)
