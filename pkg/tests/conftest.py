"""Collects acceptance-criterion outcomes and prints one line per criterion at the end of the run."""

import pytest

_OUTCOMES: dict[int, tuple[str, str, str]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "PASS" if report.passed else "FAIL"
        detail = dict(item.user_properties).get("detail", "")
        if report.failed and not detail:
            detail = str(call.excinfo.value).splitlines()[0] if call.excinfo else ""
        _OUTCOMES[number] = (title, status, detail)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, status, detail = _OUTCOMES[number]
        terminalreporter.write_line(f"criterion {number} [{status}] {title}: {detail}")
