"""Collects the acceptance-criterion outcomes and prints one line per criterion."""

import pytest

_RESULTS: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or report.failed:
        status = "PASS" if report.passed else "FAIL"
        if number not in _RESULTS or status == "FAIL":
            _RESULTS[number] = (title, status, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, status, duration = _RESULTS[number]
        terminalreporter.write_line(f"criterion {number:>2}: {status}  {title}  ({duration:.2f}s)")
