import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_acceptance: dict[str, tuple[str, bool]] = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("acceptance")
    if marker is None:
        return
    key, title = marker.args
    failed = report.failed
    # a criterion passes only if setup, call and teardown all pass
    if report.when == "call" or failed:
        prev = _acceptance.get(key, (title, True))[1]
        _acceptance[key] = (title, prev and not failed)


def pytest_terminal_summary(terminalreporter):
    if not _acceptance:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(_acceptance, key=lambda k: int(k.lstrip("AC"))):
        title, ok = _acceptance[key]
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {key}  {title}")
