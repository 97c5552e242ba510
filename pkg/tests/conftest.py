import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_ACCEPTANCE: list[str] = []


@pytest.fixture
def acceptance():
    """``acceptance(criterion, passed, detail)`` records one summary line.

    ``passed`` may also be a status string for criteria that are not checked.
    """

    def record(criterion: str, passed, detail: str):
        status = passed if isinstance(passed, str) else ("PASS" if passed else "FAIL")
        line = f"[{status}] criterion {criterion}: {detail}"
        _ACCEPTANCE.append(line)
        print(line)
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE:
            terminalreporter.write_line(line)
