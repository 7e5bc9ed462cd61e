import sys
from pathlib import Path

import pytest
from hypothesis import settings

sys.path.insert(0, str(Path(__file__).parent))

settings.register_profile("default", deadline=None, max_examples=50)
settings.load_profile("default")


@pytest.fixture
def rng():
    import numpy as np
    return np.random.default_rng(1234)


# ---------------------------------------------------------------- acceptance reporting

_CRITERIA: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion covered by the test")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when != "call" and not report.skipped:
        return
    number, title = marker.args
    status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
    _CRITERIA.setdefault((number, title), []).append((item.name, status, report.duration))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for (number, title), rows in sorted(_CRITERIA.items(), key=lambda kv: str(kv[0][0]).zfill(4)):
        statuses = {s for _, s, _ in rows}
        status = "FAIL" if "FAIL" in statuses else ("PASS" if "PASS" in statuses else "SKIP")
        if status == "PASS" and "SKIP" in statuses:
            title += "; optional part skipped"
        seconds = sum(d for _, _, d in rows)
        tr.write_line(f"criterion {number:>3} {status}  {title} ({seconds:.1f} s)")
