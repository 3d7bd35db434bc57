import pytest

_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture
def acceptance_line():
    """Record the one-line verdict for an acceptance criterion."""

    def record(number: int, title: str, passed: bool, detail: str, seconds: float) -> None:
        verdict = "PASS" if passed else "FAIL"
        _ACCEPTANCE[number] = f"[{verdict}] criterion {number:>2} {title}: {detail} ({seconds:.1f}s)"
        print(_ACCEPTANCE[number])

    return record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        terminalreporter.write_line(_ACCEPTANCE[n])
