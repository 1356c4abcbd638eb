import time
from contextlib import contextmanager

import pytest

RESULTS = {}


@contextmanager
def _criterion(number, title, budget_s=None):
    start = time.perf_counter()
    ok = False
    try:
        yield
        elapsed = time.perf_counter() - start
        if budget_s is not None:
            assert elapsed < budget_s, f"took {elapsed:.1f}s, budget {budget_s}s"
        ok = True
    finally:
        elapsed = time.perf_counter() - start
        RESULTS[number] = (ok, title, elapsed)
        print(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} ({elapsed:.2f}s)")


@pytest.fixture
def criterion():
    return _criterion


def pytest_terminal_summary(terminalreporter):
    if not RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(RESULTS):
        ok, title, elapsed = RESULTS[number]
        terminalreporter.line(f"criterion {number} {'PASS' if ok else 'FAIL'}: {title} "
                              f"({elapsed:.2f}s)")
