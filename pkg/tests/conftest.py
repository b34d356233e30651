import oracles


def pytest_terminal_summary(terminalreporter):
    if not oracles.ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(oracles.ACCEPTANCE_LINES):
        terminalreporter.write_line(oracles.ACCEPTANCE_LINES[k])
