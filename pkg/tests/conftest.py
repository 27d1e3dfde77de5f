import numpy as np
import pytest


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion number n")
    config.stash[_CRITERIA] = {}


_CRITERIA = pytest.StashKey[dict]()


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or not (rep.when == "call" or rep.failed):
        return
    entry = item.config.stash[_CRITERIA].setdefault(marker.args[0], {"ok": True, "details": []})
    entry["ok"] = entry["ok"] and rep.passed
    for key, value in item.user_properties:
        if key == "detail":
            entry["details"].append(f"{'ok' if rep.passed else 'FAILED'}: {value}")


def pytest_terminal_summary(terminalreporter, exitstatus, config):
    criteria = config.stash[_CRITERIA]
    if not criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(criteria):
        entry = criteria[n]
        terminalreporter.write_line(f"criterion {n}: {'PASS' if entry['ok'] else 'FAIL'}")
        for d in entry["details"]:
            terminalreporter.write_line(f"    {d}")
