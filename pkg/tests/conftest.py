import pytest

ACCEPTANCE_RESULTS = []


@pytest.fixture
def record_criterion():
    def _record(number, description, ok, detail=""):
        line = f"[criterion {number:02d}] {'PASS' if ok else 'FAIL'} {description}"
        if detail:
            line += f" ({detail})"
        ACCEPTANCE_RESULTS.append(line)
        print(line)

    return _record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.write_line("")
        terminalreporter.write_line("acceptance criteria:")
        for line in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line("  " + line)
