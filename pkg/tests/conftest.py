import pytest

# acceptance outcomes, filled by tests/test_acceptance.py
ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def criterion():
    """Record the outcome of one acceptance criterion, then assert it."""

    def check(number: int, passed: bool, detail: str) -> None:
        ok, prev = ACCEPTANCE.get(number, (True, ""))
        ACCEPTANCE[number] = (ok and bool(passed), f"{prev}; {detail}" if prev else detail)
        assert passed, f"criterion {number}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[number]
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}")
