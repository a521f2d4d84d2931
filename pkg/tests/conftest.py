import checks


def pytest_terminal_summary(terminalreporter):
    if checks.ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in checks.ACCEPTANCE:
            terminalreporter.write_line(line)
