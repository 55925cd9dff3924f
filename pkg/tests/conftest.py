import pytest

from pulsedyn import ReactionKinetics

_CRITERIA: dict[str, tuple[bool, str]] = {}


@pytest.fixture(scope="session")
def kin():
    return ReactionKinetics.hill()


@pytest.fixture
def criterion():
    """Record a pass/fail line for an acceptance criterion, then assert it."""

    def check(number: str, ok: bool, detail: str) -> None:
        ok = bool(ok)
        number = str(number)
        _CRITERIA[number] = (ok, detail)
        print(f"criterion {number:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
        assert ok, f"criterion {number}: {detail}"

    return check


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA, key=lambda n: (int(n.rstrip("abcd")), n)):
        ok, detail = _CRITERIA[number]
        terminalreporter.write_line(f"criterion {number:>3}: {'PASS' if ok else 'FAIL'}  {detail}")
