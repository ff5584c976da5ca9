"""Shared pytest wiring.

The acceptance tests record one line per criterion; printing them from
inside a test gets swallowed by capture, so they are replayed in the
terminal summary where they stay visible in any run mode.
"""

acceptance_lines: list[str] = []


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in acceptance_lines:
            terminalreporter.write_line(line)
