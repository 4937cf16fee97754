"""Collects ``criterion(n, title)`` markers and prints one verdict line per criterion."""

import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion a test belongs to")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    entry = _results.setdefault(n, {"title": title, "tests": 0, "failed": []})
    if rep.when == "call":
        entry["tests"] += 1
    if rep.failed or (rep.when == "setup" and rep.skipped):
        entry["failed"].append(item.name)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_results):
        entry = _results[n]
        ok = not entry["failed"] and entry["tests"] > 0
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}: {entry['title']}"
        if entry["failed"]:
            line += f" (failed: {', '.join(sorted(set(entry['failed'])))})"
        terminalreporter.write_line(line)
