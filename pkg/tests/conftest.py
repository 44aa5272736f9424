from __future__ import annotations

import pytest
from hypothesis import HealthCheck, settings

from skillcoevo import fixture_path, load_bank, load_trajectories
from skillcoevo.bank import Bank
from skillcoevo.trajectory import Trajectory

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


# --- acceptance summary -------------------------------------------------------

_ACCEPTANCE: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion test")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            num, title = mark.args
            _ACCEPTANCE.setdefault(num, {"title": title, "nodes": {}})
            _ACCEPTANCE[num]["nodes"][item.nodeid] = None


def pytest_runtest_logreport(report):
    for entry in _ACCEPTANCE.values():
        if report.nodeid in entry["nodes"]:
            prev = entry["nodes"][report.nodeid]
            if report.failed:
                entry["nodes"][report.nodeid] = "failed"
            elif report.when == "call" and prev is None:
                entry["nodes"][report.nodeid] = "skipped" if report.skipped else "passed"
            elif report.skipped and prev is None:
                entry["nodes"][report.nodeid] = "skipped"


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for num in sorted(_ACCEPTANCE):
        entry = _ACCEPTANCE[num]
        states = list(entry["nodes"].values())
        if any(s == "failed" for s in states):
            verdict = "FAIL"
        elif states and all(s == "passed" for s in states):
            verdict = "PASS"
        else:
            verdict = "NOT RUN"
        terminalreporter.write_line(f"criterion {num:2d}: {verdict}  {entry['title']}")


# --- shared fixtures -----------------------------------------------------------

@pytest.fixture(scope="session")
def demo_traj() -> Trajectory:
    (traj,) = load_trajectories(fixture_path("diplomacy_episode.jsonl"))
    return traj


@pytest.fixture
def demo_bank() -> Bank:
    return load_bank(fixture_path("diplomacy_bank.json"))
