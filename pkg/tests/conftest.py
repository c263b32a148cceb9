"""Shared fixtures and the acceptance summary printed at the end of a run."""
import pytest

_VERDICTS = []


class Verdicts:
    """Collects one pass/fail line per acceptance criterion."""

    def record(self, key: str, ok: bool, detail: str) -> bool:
        line = f"{'PASS' if ok else 'FAIL'}  [{key}] {detail}"
        _VERDICTS.append(line)
        print(line)
        return ok


@pytest.fixture(scope="session")
def verdicts():
    return Verdicts()


def pytest_terminal_summary(terminalreporter):
    if not _VERDICTS:
        return
    terminalreporter.section("acceptance criteria")
    for line in _VERDICTS:
        terminalreporter.write_line(line)
    failed = sum(line.startswith("FAIL") for line in _VERDICTS)
    terminalreporter.write_line(f"{len(_VERDICTS) - failed} passed, {failed} failed")
