import pytest

# criterion number -> list of (check name, passed, detail)
_CRITERIA: dict[int, list] = {}


@pytest.fixture
def criterion():
    def record(number: int, name: str, passed: bool, detail: str = "") -> bool:
        _CRITERIA.setdefault(number, []).append((name, bool(passed), detail))
        return passed

    return record


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        checks = _CRITERIA[number]
        ok = all(p for _, p, _ in checks)
        terminalreporter.write_line(f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}")
        for name, passed, detail in checks:
            terminalreporter.write_line(f"    {'pass' if passed else 'FAIL'}  {name}: {detail}")
