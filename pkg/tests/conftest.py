"""Shared pytest wiring: the acceptance-verdict summary block."""

import accept_log


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if accept_log.LINES:
        terminalreporter.section("acceptance criteria")
        for line in accept_log.LINES:
            terminalreporter.write_line(line)
