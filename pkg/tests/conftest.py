import numpy as np
import pytest


def assert_within(est, target, k=4.0):
    """|estimate - target| <= k * stderr (elementwise)."""
    value = np.asarray(est.value, dtype=float)
    err = np.asarray(est.stderr, dtype=float)
    gap = np.abs(value - target)
    assert np.all(gap <= k * err + 1e-14), f"estimate {value} vs {target}, stderr {err}"


@pytest.fixture
def within():
    return assert_within


# acceptance criteria record their verdicts here; printed once at the end
ACCEPTANCE: dict = {}


def record(criterion: str, ok: bool, detail: str = ""):
    ACCEPTANCE[criterion] = (bool(ok), detail)
    print(f"[{'PASS' if ok else 'FAIL'}] {criterion} {detail}")


@pytest.fixture
def verdict():
    return record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name in ACCEPTANCE:
        ok, detail = ACCEPTANCE[name]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}  {detail}")
