import sys
from pathlib import Path

import pytest

sys.path.insert(0, str(Path(__file__).parent))

from nugget_forge.running_example import build_running_model  # noqa: E402

_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): an acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None:
        return
    number, title = mark.args
    prev = _ACCEPTANCE.get(number, (title, True, 0.0))
    if rep.when == "call" or rep.failed:
        _ACCEPTANCE[number] = (title, prev[1] and rep.passed, prev[2] + rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_ACCEPTANCE):
        title, ok, secs = _ACCEPTANCE[number]
        terminalreporter.write_line(f"[{'PASS' if ok else 'FAIL'}] {number}. {title} ({secs:.2f} s)")


@pytest.fixture(scope="session")
def running_model():
    return build_running_model()


@pytest.fixture(scope="session")
def interval_model():
    return build_running_model(intervals=True)
