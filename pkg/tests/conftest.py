import sys


def pytest_terminal_summary(terminalreporter):
    mod = sys.modules.get("tests.test_acceptance")
    lines = getattr(mod, "VERDICTS", None)
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
