"""Acceptance summary: one PASS/FAIL line per numbered criterion.

Tests in test_acceptance.py carry ``@pytest.mark.acceptance(n, title)`` and
may attach a measured value with ``record_property("measured", ...)``; the
lines are printed at the end of every run that collected them.
"""

import pytest

_RESULTS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    number, title = marker.args
    state = _RESULTS.setdefault(number, [True, title, ""])
    if report.failed or report.skipped:
        state[0] = False
    if report.when == "call":
        state[2] = dict(item.user_properties).get("measured", "")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        ok, title, measured = _RESULTS[number]
        line = f"[{'PASS' if ok else 'FAIL'}] {number:>2}. {title}"
        if measured:
            line += f"  ({measured})"
        tr.write_line(line)
