import os

import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "default",
    max_examples=int(os.environ.get("HYPOTHESIS_EXAMPLES", "40")),
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("default")


# -- acceptance report: one line per criterion at the end of the run ----------

_CRITERIA: dict[int, tuple[str, str, dict]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        props = dict(item.user_properties)
        _CRITERIA[marker.args[0]] = (marker.args[1], "PASS" if rep.passed else "FAIL", props)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.write_sep("=", "acceptance criteria")
    for number in sorted(_CRITERIA):
        title, status, props = _CRITERIA[number]
        seconds = props.get("seconds")
        timing = f" [{seconds:.1f}s]" if seconds is not None else ""
        detail = f" -- {props['detail']}" if props.get("detail") else ""
        terminalreporter.write_line(f"criterion {number:2d}: {status}  {title}{timing}{detail}")
