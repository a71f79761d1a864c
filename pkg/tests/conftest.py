"""Acceptance bookkeeping: tests tagged ``@pytest.mark.criterion(n, name)`` are
rolled up into one PASS/FAIL line per criterion at the end of the run."""
from __future__ import annotations

import pytest

_RESULTS: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, name): acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, name = marker.args
    entry = _RESULTS.setdefault(number, {"name": name, "ok": True, "notes": []})
    if report.failed or (report.when == "call" and report.skipped):
        entry["ok"] = False
    if report.when == "call":
        entry["notes"].extend(f"{k}: {v}" for k, v in item.user_properties)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        entry = _RESULTS[number]
        tr.write_line(f"criterion {number:2d}  {'PASS' if entry['ok'] else 'FAIL'}  {entry['name']}")
        for note in entry["notes"]:
            tr.write_line(f"              {note}")
