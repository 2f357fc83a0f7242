from __future__ import annotations

VERDICTS: list[str] = []


def record_verdict(line: str) -> None:
    print(line)
    VERDICTS.append(line)


def pytest_terminal_summary(terminalreporter):
    if VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in VERDICTS:
            terminalreporter.write_line(line)
