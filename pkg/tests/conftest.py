import pytest

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def report_criterion():
    """Record and print one PASS/FAIL line for an acceptance criterion."""

    def _report(label: str, checks: list[tuple[str, bool]]) -> bool:
        ok = all(passed for _, passed in checks)
        failed = [name for name, passed in checks if not passed]
        line = f"{label}: {'PASS' if ok else 'FAIL'}"
        if failed:
            line += " (failed: " + "; ".join(failed) + ")"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok

    return _report


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
