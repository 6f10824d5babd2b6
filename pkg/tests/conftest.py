"""Shared pytest hooks.

Tests named test_criterion_NN_* in test_acceptance.py are treated as
acceptance checks. After the run a summary section prints exactly one
PASS/FAIL line per criterion, including criteria whose test errored
during setup or was skipped.
"""

import re

import pytest

_CRITERION_RE = re.compile(r"test_criterion_(\d+)_")
_criteria: dict[int, dict] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    match = _CRITERION_RE.match(item.name)
    if not match or "test_acceptance" not in item.nodeid:
        return
    number = int(match.group(1))
    doc = item.function.__doc__ or item.name
    entry = _criteria.setdefault(
        number, {"desc": doc.strip().splitlines()[0], "passed": False, "done": False}
    )
    if report.when == "call":
        entry["done"] = True
        entry["passed"] = report.passed
    elif report.failed or report.skipped:
        entry["done"] = True
        entry["passed"] = False


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_criteria):
        entry = _criteria[number]
        status = "PASS" if entry["done"] and entry["passed"] else "FAIL"
        terminalreporter.write_line(f"CRITERION {number:02d}: {status} - {entry['desc']}")
