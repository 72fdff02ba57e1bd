"""Shared pytest plumbing.

The acceptance tests record one verdict line each; we echo them in the
terminal summary so the pass/fail ledger is visible even with output
capture on.
"""

ACCEPTANCE_LINES = []


def record_verdict(ok: bool, name: str, detail: str):
    line = f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return line


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for line in ACCEPTANCE_LINES:
        terminalreporter.write_line(line)
