"""Prints a PASS/FAIL line per acceptance criterion after the run."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "criterion(tag, desc): named acceptance criterion"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    tag, desc = mark.args
    if rep.when == "call":
        _RESULTS[tag] = (rep.passed, desc)
    elif rep.when == "setup" and not rep.passed:
        # setup errors (artifact build failures) still count as a verdict
        _RESULTS[tag] = (False, desc)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for tag in sorted(_RESULTS):
        passed, desc = _RESULTS[tag]
        verdict = "PASS" if passed else "FAIL"
        terminalreporter.write_line(f"{tag} {verdict}: {desc}")
