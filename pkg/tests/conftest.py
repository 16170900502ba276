from __future__ import annotations

import pytest

from rorscan.boundary import BoundaryResolver
from rorscan.chain import SnapshotStore

from helpers import load_store


@pytest.fixture
def fig2_store() -> SnapshotStore:
    return load_store("fig2")


@pytest.fixture
def fig2_resolver(fig2_store) -> BoundaryResolver:
    return BoundaryResolver(fig2_store, fig2_store.builders)


# ---- acceptance summary: one PASS/FAIL line per criterion ----

_CRITERIA: dict[int, tuple[str, list[bool]]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion covered by the test")


def pytest_runtest_logreport(report):
    marker = getattr(report, "criterion", None)
    if marker is None:
        return
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        n, title = marker
        _CRITERIA.setdefault(n, (title, []))[1].append(report.outcome == "passed")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    marker = item.get_closest_marker("criterion")
    if marker is not None:
        outcome.get_result().criterion = tuple(marker.args)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, results = _CRITERIA[n]
        verdict = "PASS" if results and all(results) else "FAIL"
        terminalreporter.write_line(f"criterion {n}: {verdict}  {title}")
