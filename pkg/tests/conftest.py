import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from rolt.datasim import make_benchmark
from rolt.experiments import run_cell

settings.register_profile("default", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


class RunCache:
    """Benchmark runs shared across test modules; each (rho, gamma, seed, method) trains once."""

    def __init__(self):
        self._data = {}
        self._runs = {}

    def data(self, rho, gamma, seed):
        key = (rho, gamma, seed)
        if key not in self._data:
            self._data[key] = make_benchmark(rho, gamma, seed)
        return self._data[key]

    def run(self, rho, gamma, seed, method):
        key = (rho, gamma, seed, method)
        if key not in self._runs:
            self._runs[key] = run_cell(rho, gamma, seed, method, data=self.data(rho, gamma, seed))
        return self._runs[key]


@pytest.fixture(scope="session")
def runs():
    return RunCache()


ACCEPTANCE = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or (report.when != "call" and not report.failed):
        return
    number, title = marker.args
    detail = "; ".join(str(v) for k, v in item.user_properties if k == "detail")
    status = "PASS" if report.passed else "FAIL"
    ACCEPTANCE[number] = f"criterion {number:>2} {status}  {title}" + (f"  [{detail}]" if detail else "")


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[number])
