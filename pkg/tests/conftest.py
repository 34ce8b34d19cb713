import time
from pathlib import Path

import pytest

DATA = Path(__file__).resolve().parents[1] / "src" / "trademl" / "data"

# acceptance results, filled by test_acceptance.report()
ACCEPTANCE = []
SUITE_BUDGET_S = 120.0
_t0 = {}


@pytest.fixture
def data_dir():
    return DATA


def pytest_sessionstart(session):
    _t0["start"] = time.perf_counter()


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    elapsed = time.perf_counter() - _t0["start"]
    tr = terminalreporter
    tr.section("acceptance criteria")
    for line in sorted(ACCEPTANCE):
        tr.write_line(line[1])
    ok = elapsed < SUITE_BUDGET_S
    tr.write_line(f"{'PASS' if ok else 'FAIL'}  9 suite wall time {elapsed:.1f}s (budget {SUITE_BUDGET_S:.0f}s)")
