"""Shared pytest wiring: per-criterion result lines for the acceptance suite."""

from __future__ import annotations

_acceptance_reports: dict[str, object] = {}


def pytest_runtest_logreport(report):
    if "test_acceptance.py" not in report.nodeid:
        return
    if report.when == "call" or (report.when == "setup" and report.skipped):
        _acceptance_reports[report.nodeid] = report


def _skip_reason(report) -> str:
    longrepr = getattr(report, "longrepr", None)
    if isinstance(longrepr, tuple) and len(longrepr) == 3:
        return str(longrepr[2]).removeprefix("Skipped: ")
    return str(longrepr or "")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _acceptance_reports:
        return
    terminalreporter.section("acceptance criteria")
    for nodeid in sorted(_acceptance_reports):
        report = _acceptance_reports[nodeid]
        name = nodeid.split("::")[-1]
        if report.skipped:
            line = f"SKIP  {name}  -- {_skip_reason(report)}"
        elif report.passed:
            line = f"PASS  {name}"
        else:
            line = f"FAIL  {name}"
        terminalreporter.write_line(line)
