import numpy as np
import pytest

from grwlab.graph_geometry import clear_cache


@pytest.fixture(autouse=True)
def _fresh_geometry_cache():
    clear_cache()
    yield
    clear_cache()


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# -- acceptance summary ------------------------------------------------------
# Tests marked ``criterion(k)`` get one PASS/FAIL line each in the terminal
# summary; ``acceptance_detail`` lets a test attach the numbers behind it.

_ACCEPTANCE: dict = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(k): acceptance criterion number k")


@pytest.fixture
def acceptance_detail(request):
    marker = request.node.get_closest_marker("criterion")
    entry = _ACCEPTANCE.setdefault(marker.args[0], {"detail": "", "outcome": None})

    def note(text):
        entry["detail"] = text
    return note


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    entry = _ACCEPTANCE.setdefault(marker.args[0], {"detail": "", "outcome": None})
    if rep.when == "call" or (rep.when == "setup" and rep.failed):
        entry["outcome"] = rep.outcome


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_ACCEPTANCE):
        e = _ACCEPTANCE[k]
        status = {"passed": "PASS", "failed": "FAIL"}.get(e["outcome"], "NOT RUN")
        terminalreporter.write_line(f"criterion {k}: {status}  {e['detail']}")
