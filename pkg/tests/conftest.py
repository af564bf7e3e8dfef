"""Shared pytest wiring: acceptance criteria summary table."""

CRITERIA: list[tuple[int, str, bool, str]] = []


def record_criterion(number: int, name: str, passed: bool, detail: str = "") -> None:
    CRITERIA.append((number, name, passed, detail))


def pytest_terminal_summary(terminalreporter):
    if not CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number, name, passed, detail in sorted(CRITERIA):
        status = "PASS" if passed else "FAIL"
        line = f"criterion {number:2d} [{status}] {name}"
        if detail:
            line += f" -- {detail}"
        terminalreporter.write_line(line)
