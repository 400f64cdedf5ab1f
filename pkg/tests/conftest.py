import numpy as np
import pytest

from camspec import DEFAULT_GRID, Kind, SpectralCurve


@pytest.fixture
def grid():
    return DEFAULT_GRID


@pytest.fixture
def flat_illuminant(grid):
    return SpectralCurve(grid, np.ones(grid.count), Kind.ILLUMINANT)


def flat_reflectance(grid, level):
    return SpectralCurve(grid, np.full(grid.count, level), Kind.REFLECTANCE)


@pytest.fixture
def make_reflectance(grid):
    def _make(level):
        return flat_reflectance(grid, level)

    return _make


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    if report.when == "call" and item.module.__name__ == "test_acceptance":
        tr = item.config.pluginmanager.get_plugin("terminalreporter")
        if tr is not None:
            status = "PASS" if report.passed else "FAIL"
            label = (item.function.__doc__ or item.name).strip().splitlines()[0]
            tr.write_line(f"[acceptance] {status}: {label}")
