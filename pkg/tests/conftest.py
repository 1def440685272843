import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20170417)


# Acceptance reporting: tests marked ``criterion(n)`` get one PASS/FAIL line each.
_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown":
        return
    if report.when == "setup" and report.passed:
        return
    n = marker.args[0]
    detail = dict(item.user_properties).get("detail", "")
    ok = report.passed and not report.skipped
    if report.skipped:
        status = "SKIP"
    else:
        status = "PASS" if ok else "FAIL"
    _CRITERIA[n] = f"criterion {n:>2}: {status}  {item.name}  {detail}".rstrip()


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        terminalreporter.write_line(_CRITERIA[n])
