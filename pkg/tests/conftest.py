import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

_CRITERIA: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, name): acceptance criterion number and short name")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    n, name = mark.args
    detail = dict(item.user_properties).get("detail", "")
    _CRITERIA[n] = {
        "name": name,
        "passed": report.passed,
        "detail": detail,
        "seconds": report.duration,
    }


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        c = _CRITERIA[n]
        status = "PASS" if c["passed"] else "FAIL"
        terminalreporter.write_line(f"criterion {n:2d} {status}  {c['name']}  [{c['seconds']:.1f}s]  {c['detail']}")
