"""Collects the one-line PASS/FAIL verdicts of the acceptance suite and
prints them at the end of the pytest run."""

VERDICTS = []


def record_verdict(criterion: str, ok: bool, detail: str) -> str:
    line = f"{'PASS' if ok else 'FAIL'} criterion {criterion}: {detail}"
    VERDICTS.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
