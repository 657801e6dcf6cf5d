import pytest

from tagged_exclusion.lattice import JumpRates


@pytest.fixture
def asym_d1():
    return JumpRates(1, {(1,): 0.7, (-1,): 0.3})


@pytest.fixture
def drift_d2():
    return JumpRates(2, {(1, 0): 0.5, (-1, 0): 0.1, (0, 1): 0.3, (0, -1): 0.1})


@pytest.fixture
def long_range_d1():
    return JumpRates(1, {(1,): 0.4, (-1,): 0.2, (2,): 0.3, (-2,): 0.1})


_CRITERIA: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of an acceptance criterion for the end-of-run table."""
    def record(number: int, passed: bool, detail: str) -> bool:
        _CRITERIA[number] = (bool(passed), detail)
        print(f"criterion {number:2d}: {'PASS' if passed else 'FAIL'}  {detail}")
        return bool(passed)
    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_CRITERIA):
        ok, detail = _CRITERIA[k]
        terminalreporter.write_line(f"criterion {k:2d}: {'PASS' if ok else 'FAIL'}  {detail}")
